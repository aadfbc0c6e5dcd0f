import numpy as np
import pytest

from nmr_probe import kernels
from nmr_probe.bath import BathSpec
from nmr_probe.dynamics import ControlField, DirectSumState, SystemSpec, propagate_blocks
from nmr_probe.krotov import (EnsembleSpec, KrotovConfig, KrotovConvergenceError, _costate_blocks,
                              backward_propagate, control_gradient, flattop_shape, functional,
                              functional_of_vectors, headline_values, pairing, single_point_train,
                              terminal_costate, train)


def small_ensemble(values=(0.5, 0.8, 1.1), n_steps=400, final_time=4.0):
    return EnsembleSpec("gamma", values, BathSpec(1.0, 0.8, 0.0), 1e-4, SystemSpec(), final_time, n_steps)


def guess(ens, amp=0.5):
    return amp * flattop_shape(ens.n_steps)


def test_headline_grid():
    v = np.array(headline_values())
    assert v.size == 60 and v[0] == 0.4 and v[-1] == pytest.approx(1.2)
    assert np.sum(v <= 0.7 + 1e-12) == 20


def test_flattop_shape():
    s = flattop_shape(1000, 0.05)
    assert s[0] == 0 and s[-1] == pytest.approx(0, abs=1e-15) and s[500] == 1
    assert np.all((s >= 0) & (s <= 1))
    assert np.all(flattop_shape(10, 0.0) == 1)


def test_costate_matches_central_differences(rng):
    ens = small_ensemble(n_steps=200, final_time=2.0)
    rho, _ = propagate_blocks(ens.system, ens.block_baths(), ControlField(2.0, guess(ens, 0.3)))
    vectors = np.stack([DirectSumState.from_matrices(rho[2 * j, -1], rho[2 * j + 1, -1]).vector
                        for j in range(ens.size)])
    member = 1
    chi = terminal_costate(DirectSumState.from_matrices(rho[2, -1], rho[3, -1]), ens.dx, ens.size)
    h = 1e-6
    for _ in range(10):
        # Hermiticity-preserving direction in the direct-sum space
        e = rng.normal(size=(2, 2, 2)) + 1j * rng.normal(size=(2, 2, 2))
        e = e + np.conj(np.swapaxes(e, -1, -2))
        d = np.concatenate([e[0].T.reshape(4), e[1].T.reshape(4)])
        d /= np.linalg.norm(d)
        vp, vm = vectors.copy(), vectors.copy()
        vp[member] += h * d
        vm[member] -= h * d
        num = (functional_of_vectors(vp, ens.dx) - functional_of_vectors(vm, ens.dx)) / (2 * h)
        ana = -np.real(np.vdot(chi, d))
        assert ana == pytest.approx(num, rel=1e-5)


def test_costate_blocks_agree_with_terminal_costate():
    ens = small_ensemble(n_steps=100, final_time=1.0)
    rho, _ = propagate_blocks(ens.system, ens.block_baths(), ControlField.zeros(1.0, 100))
    chi = _costate_blocks(rho[:, -1], ens.dx)
    ref = terminal_costate(DirectSumState.from_matrices(rho[0, -1], rho[1, -1]), ens.dx, ens.size)
    assert np.allclose(np.concatenate([chi[0].T.reshape(4), chi[1].T.reshape(4)]), ref)


def test_adjoint_pairing_is_conserved():
    ens = small_ensemble()
    c = ControlField(4.0, guess(ens))
    rho, obar = propagate_blocks(ens.system, ens.block_baths(), c)
    chi = backward_propagate(ens.system, obar, c, _costate_blocks(rho[:, -1], ens.dx))
    p = pairing(chi, rho)
    assert np.max(np.abs(p - p[:, -1:])) < 1e-7 * np.max(np.abs(p))


def test_control_gradient_matches_finite_differences_with_frozen_memory():
    ens = small_ensemble(n_steps=200, final_time=2.0)
    c = ControlField(2.0, guess(ens, 0.4))
    rho, obar = propagate_blocks(ens.system, ens.block_baths(), c)
    chi = backward_propagate(ens.system, obar, c, _costate_blocks(rho[:, -1], ens.dx))
    grad = control_gradient(ens.system, obar, c, chi, rho)

    def j_of(samples):
        r, _ = propagate_blocks(ens.system, ens.block_baths(), c.with_samples(samples), obar=obar)
        return functional(r[:, -1], ens.dx)

    h = 1e-4
    for k in (20, 77, 150):
        sp, sm = c.samples.copy(), c.samples.copy()
        sp[k] += h
        sm[k] -= h
        num = (j_of(sp) - j_of(sm)) / (2 * h)
        assert grad[k] == pytest.approx(num, rel=1e-3)


def test_training_is_monotone():
    ens = small_ensemble()
    control, trace = train(ens, KrotovConfig(max_iter=8, guess=guess(ens)))
    assert trace.iterations >= 1
    assert trace.max_increase() <= 1e-8
    assert trace.functional[-1] < trace.functional[0]
    assert control.samples[0] == 0 and control.samples[-1] == 0


def test_zero_shape_freezes_control():
    ens = small_ensemble(values=(0.8,), n_steps=200, final_time=2.0)
    g = guess(ens)
    control, trace = train(ens, KrotovConfig(max_iter=3, guess=g, shape=np.zeros(200)))
    assert np.array_equal(control.samples, g)
    assert trace.iterations == 1


def test_huge_step_penalty_barely_moves():
    ens = small_ensemble(values=(0.8,), n_steps=200, final_time=2.0)
    g = guess(ens)
    control, trace = train(ens, KrotovConfig(lambda_a=1e12, max_iter=2, guess=g))
    assert np.max(np.abs(control.samples - g)) < 1e-8
    assert trace.iterations == 1


def test_single_member_loose_tolerance_stops_after_one_iteration():
    ens = small_ensemble(values=(0.5, 0.9), n_steps=200, final_time=2.0)
    _, trace = single_point_train(0.8, ens, KrotovConfig(max_iter=50, tolerance=1e3, guess=guess(ens)))
    assert trace.iterations == 1
    assert len(trace.member_qfi[0]) == 1


def test_retry_exhaustion_keeps_last_control():
    ens = small_ensemble(values=(0.8,), n_steps=200, final_time=2.0)
    with pytest.raises(KrotovConvergenceError) as info:
        # demanding a decrease of at least 10 per step can never be met
        train(ens, KrotovConfig(max_iter=5, slack=-10.0, max_retries=2, guess=guess(ens)))
    assert info.value.control is not None
    assert info.value.trace.iterations == 0


def test_ensemble_validation():
    with pytest.raises(ValueError):
        small_ensemble(values=(0.8, 0.5))
    with pytest.raises(ValueError):
        small_ensemble(values=(-0.1, 0.5))
    with pytest.raises(ValueError):
        KrotovConfig(lambda_a=0)


def test_sequential_update_uses_updated_states():
    # first sample of the sweep sees rho0, so with S=1 everywhere only c changes
    ens = small_ensemble(values=(0.8,), n_steps=50, final_time=0.5)
    c = ControlField(0.5, np.full(50, 0.2))
    rho, obar = propagate_blocks(ens.system, ens.block_baths(), c)
    chi = backward_propagate(ens.system, obar, c, _costate_blocks(rho[:, -1], ens.dx))
    new, traj = kernels.sequential_update(ens.system.drift, ens.system.hc, ens.system.coupling, obar,
                                          c.samples, chi, rho[:, 0], np.ones(50), 100.0, c.dt)
    again, _ = propagate_blocks(ens.system, ens.block_baths(), c.with_samples(new), obar=obar)
    assert np.allclose(traj, again, atol=1e-13)
