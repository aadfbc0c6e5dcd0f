import numpy as np
import pytest

from nmr_probe.bath import BathSpec, memory_integral
from nmr_probe.dynamics import (ID2, SX, SY, SZ, ControlField, DirectSumState, IntegrationError,
                                SystemSpec, assemble_lindbladian, dag, evolve_obar, propagate_density,
                                propagate_pair, superoperator, unvec, vec)

from oracles import decoherence, obar_two_time


def random_density(rng):
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    r = a @ dag(a)
    return r / np.trace(r)


def master_rhs(system, obar, c, rho):
    h = system.hamiltonian(c)
    lop = system.coupling
    od = dag(obar)
    return (-1j * (h @ rho - rho @ h) + lop @ rho @ od - rho @ od @ lop
            - dag(lop) @ obar @ rho + obar @ rho @ dag(lop))


def test_vec_is_column_stacking():
    a = np.array([[1, 2], [3, 4]])
    assert list(vec(a)) == [1, 3, 2, 4]
    assert np.array_equal(unvec(vec(a)), a)


def test_superoperator_convention(rng):
    a, b, x = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3))
    assert np.allclose(superoperator(a, b) @ vec(x), vec(a @ x @ b))


def test_lindbladian_without_memory_is_coherent():
    s = SystemSpec()
    lind = assemble_lindbladian(s, np.zeros((2, 2)))
    h = s.drift
    assert np.allclose(lind, -1j * (np.kron(ID2, h) - np.kron(h.T, ID2)))


def test_lindbladian_matches_master_equation(rng):
    s = SystemSpec()
    obar = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    rho = random_density(rng)
    lind = assemble_lindbladian(s, obar, 0.37)
    assert np.allclose(unvec(lind @ vec(rho)), master_rhs(s, obar, 0.37, rho))


def test_lindbladian_preserves_trace(rng):
    obar = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    lind = assemble_lindbladian(SystemSpec(), obar, -0.8)
    assert np.allclose(vec(ID2).conj() @ lind, 0)


def test_obar_closed_form_without_control():
    # for a commuting drift and coupling the memory operator is the scalar kernel integral
    b = BathSpec(1.0, 0.6, 0.0)
    c = ControlField.zeros(4.0, 800)
    o = evolve_obar(SystemSpec(), b, c)
    assert np.allclose(o.values, memory_integral(b, o.times)[:, None, None] * SZ, atol=1e-12)
    assert np.all(o.values[0] == 0)


def test_obar_matches_two_time_quadrature():
    b = BathSpec(1.0, 0.5, 0.3)
    t = np.arange(200) * 0.01
    c = ControlField(2.0, 0.8 * np.sin(2.3 * t) + 0.3)
    s = SystemSpec()
    ref = obar_two_time(s, b, c, refine=4)
    o = evolve_obar(s, b, c).on_grid
    assert np.max(np.abs(o - ref)) < 1e-5


def test_uncontrolled_coherence_matches_decoherence_factor():
    b = BathSpec(1.0, 0.8, 0.0)
    c = ControlField.zeros(8.0, 1600)
    rho = propagate_density(SystemSpec(), b, c)
    d = np.abs(rho[:, 0, 1]) / 0.5
    ref = decoherence(c.times, 0.8)
    assert np.max(np.abs(d - ref) / ref) < 1e-6
    assert np.allclose(rho[:, 0, 0], 0.5)


def test_trace_and_hermiticity_preserved():
    c = ControlField(5.0, np.cos(np.linspace(0, 9, 1000)))
    rho = propagate_density(SystemSpec(), BathSpec(1.2, 0.4, 0.5), c)
    assert np.allclose(np.trace(rho, axis1=1, axis2=2), 1.0, atol=1e-12)
    assert np.array_equal(rho, dag(rho))
    assert np.linalg.eigvalsh(rho).min() > -1e-9


def test_fourth_order_convergence():
    b = BathSpec(1.0, 0.7, 0.2)
    s = SystemSpec()

    def final(n):
        return propagate_density(s, b, ControlField(3.0, np.full(n, 0.4)))[-1]

    ref = final(3200)
    e1 = np.max(np.abs(final(100) - ref))
    e2 = np.max(np.abs(final(200) - ref))
    assert 10 < e1 / e2 < 24


def test_pair_trajectory_and_direct_sum():
    b = BathSpec(1.0, 0.8, 0.0)
    c = ControlField.zeros(2.0, 200)
    pair = propagate_pair(SystemSpec(), b, b.shifted("gamma", 1e-4), c)
    assert pair.dx == pytest.approx(1e-4)
    st = pair.state(-1)
    assert st.vector.shape == (8,)
    lo, hi = st.matrices
    assert np.array_equal(lo, pair.rho[-1]) and np.array_equal(hi, pair.rho_shifted[-1])
    assert np.array_equal(DirectSumState.from_matrices(lo, hi).vector, st.vector)


def test_pair_rejects_two_parameter_difference():
    with pytest.raises(ValueError):
        propagate_pair(SystemSpec(), BathSpec(1.0, 0.8), BathSpec(1.1, 0.9), ControlField.zeros(1, 10))


def test_divergence_raises_integration_error():
    with pytest.raises(IntegrationError) as info:
        propagate_density(SystemSpec(), BathSpec(), ControlField(1.0, np.full(10, 1e300)))
    assert info.value.time >= 0


def test_control_field_validation():
    with pytest.raises(ValueError):
        ControlField(1.0, [0.0, np.nan])
    with pytest.raises(ValueError):
        ControlField(0.0, [0.0])
    c = ControlField(2.0, [1.0, 2.0])
    with pytest.raises(ValueError):
        c.samples[0] = 3.0
    assert c.dt == 1.0 and list(c.times) == [0.0, 1.0, 2.0]


def test_system_validation():
    with pytest.raises(ValueError):
        SystemSpec(hc=1j * SX)
    with pytest.raises(ValueError):
        SystemSpec(psi0=[0, 0])
