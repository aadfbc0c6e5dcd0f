"""Krotov ensemble optimization of the final-time quantum Fisher information.

Every ensemble member is the direct sum of the states at theta_j and
theta_j + dx, all driven by one shared control. The functional is
J_T = -(1/n) sum_j F_j(T); each iteration refreshes the memory operators
under the current control, back-propagates the co-states and sweeps the
control forward in time with the first-order Krotov update

    c_new(t_k) = c_old(t_k) + S(t_k)/lambda_a * sum_j Re<<chi_j(t_k), Hc s_j_new(t_k)>>,

treating the uncontrolled generator as independent of the control.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .bath import PARAMETERS, BathSpec
from .dynamics import ControlField, SystemSpec, dag, obar_blocks, propagate_blocks, unvec, vec
from .qfi import qfi, qfi_gradient

log = logging.getLogger(__name__)


class KrotovConvergenceError(RuntimeError):
    """Monotonic step could not be restored by increasing lambda_a.

    ``control`` is the last accepted control, ``trace`` the history up to it.
    """

    def __init__(self, message, trace, control=None):
        super().__init__(message)
        self.trace = trace
        self.control = control


def headline_values():
    """20 evenly spaced points in [0.4, 0.7] and 40 in (0.7, 1.2]."""
    return tuple(np.concatenate([np.linspace(0.4, 0.7, 20), np.linspace(0.7, 1.2, 41)[1:]]))


@dataclass(frozen=True, eq=False)
class EnsembleSpec:
    parameter: str = "gamma"
    values: tuple = field(default_factory=headline_values)
    bath: BathSpec = field(default_factory=lambda: BathSpec(1.0, 0.8, 0.0))
    dx: float = 1e-4
    system: SystemSpec = field(default_factory=SystemSpec)
    final_time: float = 8.0
    n_steps: int = 1600

    def __post_init__(self):
        if self.parameter not in PARAMETERS:
            raise ValueError(f"parameter must be one of {PARAMETERS}")
        values = tuple(float(v) for v in np.atleast_1d(self.values))
        if not values:
            raise ValueError("ensemble needs at least one member")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("training values must be strictly increasing")
        if self.parameter != "omega_shift" and values[0] <= 0:
            raise ValueError(f"{self.parameter} values must be positive")
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        object.__setattr__(self, "values", values)

    @property
    def size(self):
        return len(self.values)

    def member_bath(self, value):
        values = self.bath.to_dict()
        values[self.parameter] = value
        return BathSpec(**values)

    def block_baths(self):
        """Baths in block order [theta_1, theta_1+dx, theta_2, theta_2+dx, ...]."""
        out = []
        for v in self.values:
            b = self.member_bath(v)
            out += [b, b.shifted(self.parameter, self.dx)]
        return out

    def with_values(self, values):
        return replace(self, values=tuple(values))


def flattop_shape(n_steps, ramp=0.05):
    """Update shape on the control samples: half-cosine ramps, zero at both ends."""
    u = np.linspace(0.0, 1.0, n_steps)
    s = np.ones(n_steps)
    if ramp > 0:
        up = u < ramp
        down = u > 1 - ramp
        s[up] = 0.5 * (1 - np.cos(np.pi * u[up] / ramp))
        s[down] = 0.5 * (1 - np.cos(np.pi * (1 - u[down]) / ramp))
    return s


@dataclass(frozen=True, eq=False)
class KrotovConfig:
    lambda_a: float = 100.0
    max_iter: int = 200
    tolerance: float = 1e-7
    slack: float = 1e-8
    ramp: float = 0.05
    shape: np.ndarray | None = None
    guess: np.ndarray | None = None
    max_retries: int = 10
    refresh: bool = True

    def __post_init__(self):
        if self.lambda_a <= 0:
            raise ValueError("lambda_a must be positive")
        if self.shape is not None:
            s = np.asarray(self.shape, dtype=float)
            if np.any(s < 0) or np.any(s > 1):
                raise ValueError("update shape must lie in [0, 1]")

    def update_shape(self, n_steps):
        s = flattop_shape(n_steps, self.ramp) if self.shape is None else np.asarray(self.shape, float)
        if s.shape != (n_steps,):
            raise ValueError("update shape length does not match the control grid")
        return s

    def guess_control(self, final_time, n_steps):
        if self.guess is None:
            return ControlField.zeros(final_time, n_steps)
        return ControlField(final_time, self.guess)


@dataclass
class OptimizationTrace:
    functional: list = field(default_factory=list)
    member_qfi: list = field(default_factory=list)
    update_norm: list = field(default_factory=list)
    lambda_a: list = field(default_factory=list)
    retries: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.functional) - 1

    def record(self, j, member_qfi, update_norm, lambda_a, retries, wall):
        self.functional.append(float(j))
        self.member_qfi.append(np.asarray(member_qfi, dtype=float))
        self.update_norm.append(float(update_norm))
        self.lambda_a.append(float(lambda_a))
        self.retries.append(int(retries))
        self.wall_time.append(float(wall))

    def max_increase(self):
        j = np.asarray(self.functional)
        return float(np.max(np.diff(j))) if j.size > 1 else 0.0


def member_qfi(rho_final, dx):
    """Final QFI per member from block-ordered final states (2n, 2, 2)."""
    lo, hi = rho_final[0::2], rho_final[1::2]
    return qfi(lo, (hi - lo) / dx)


def functional(rho_final, dx):
    """J_T = -mean_j F_j."""
    return -float(np.mean(member_qfi(rho_final, dx)))


def _costate_blocks(rho_final, dx):
    lo, hi = rho_final[0::2], rho_final[1::2]
    g_lo, g_hi = qfi_gradient(lo, hi, dx)
    n = lo.shape[0]
    chi = np.empty_like(rho_final)
    chi[0::2] = g_lo / n
    chi[1::2] = g_hi / n
    return chi


def terminal_costate(state, dx, n_members=1):
    """chi = -dJ_T/ds for one member's final direct-sum state.

    The gradient is with respect to the real and imaginary parts of every
    entry of the 8-vector: dJ_T = -Re sum conj(chi) ds.
    """
    lo, hi = state.matrices
    g_lo, g_hi = qfi_gradient(lo, hi, dx)
    return np.concatenate([vec(g_lo), vec(g_hi)]) / n_members


def functional_of_vectors(vectors, dx):
    """J_T as a function of the stacked member direct-sum vectors (n, 8)."""
    v = np.asarray(vectors)
    blocks = unvec(v.reshape(v.shape[0], 2, 4)).reshape(-1, 2, 2)
    return functional(blocks, dx)


def backward_propagate(system, obar, control, chi_final):
    """Co-state series chi(t_k), shape (B, N+1, 2, 2), from chi(T) backwards."""
    chi = kernels.costate_backward(system.drift, system.hc, system.coupling, obar,
                                   control.samples, chi_final, control.dt)
    if not np.all(np.isfinite(chi)):
        raise FloatingPointError("non-finite co-state")
    return chi


def pairing(chi, rho):
    """Re<<chi, rho>> per block and time, i.e. Re tr(chi^dag rho)."""
    return np.real(np.sum(np.conj(chi) * rho, axis=(-1, -2)))


def control_gradient(system, obar, control, chi, rho):
    """dJ/dc_k for frozen memory operators, by trapezoidal pairing over each interval."""
    hc = system.hc
    g = -1j * (hc @ rho - rho @ hc)
    p = pairing(chi, g).sum(axis=0)
    return -control.dt * 0.5 * (p[:-1] + p[1:])


def control_update(system, obar, control, chi, rho0, shape, lambda_a):
    """Sequential first-order Krotov sweep; returns (new control, new trajectory)."""
    samples, rho = kernels.sequential_update(system.drift, system.hc, system.coupling, obar,
                                             control.samples, chi, rho0, shape, lambda_a,
                                             control.dt)
    return control.with_samples(samples), rho


def _forward(ensemble, control, obar=None):
    baths = ensemble.block_baths()
    rho, obar = propagate_blocks(ensemble.system, baths, control, obar=obar, check=False)
    return rho, obar


def train(ensemble: EnsembleSpec, config: KrotovConfig | None = None, callback=None):
    """Optimize one control for the whole ensemble.

    Returns ``(control, trace)``. ``trace.functional[0]`` is the functional
    of the guess control.
    """
    config = config or KrotovConfig()
    system = ensemble.system
    n = ensemble.n_steps
    shape = config.update_shape(n)
    control = config.guess_control(ensemble.final_time, n)
    if control.n_steps != n:
        raise ValueError("guess control does not match the ensemble grid")
    rho0 = np.broadcast_to(system.rho0, (2 * ensemble.size, 2, 2))
    lambda_a = config.lambda_a
    trace = OptimizationTrace()

    start = time.perf_counter()
    rho, obar = _forward(ensemble, control)
    f = member_qfi(rho[:, -1], ensemble.dx)
    j = -float(np.mean(f))
    trace.record(j, f, 0.0, lambda_a, 0, time.perf_counter() - start)
    if callback:
        callback(0, trace)

    for it in range(1, config.max_iter + 1):
        chi_t = _costate_blocks(rho[:, -1], ensemble.dx)
        chi = backward_propagate(system, obar, control, chi_t)
        for retry in range(config.max_retries + 1):
            new_control, _ = control_update(system, obar, control, chi, rho0, shape, lambda_a)
            new_rho, new_obar = _forward(ensemble, new_control, None if config.refresh else obar)
            new_f = member_qfi(new_rho[:, -1], ensemble.dx)
            new_j = -float(np.mean(new_f))
            if new_j - j <= config.slack:
                break
            log.info("iteration %d: J increased by %.3g, doubling lambda_a to %g",
                     it, new_j - j, 2 * lambda_a)
            lambda_a *= 2
        else:
            raise KrotovConvergenceError(
                f"no monotonic step after {config.max_retries} retries at iteration {it}",
                trace, control)
        step = float(np.linalg.norm(new_control.samples - control.samples) * np.sqrt(control.dt))
        control, rho, obar = new_control, new_rho, new_obar
        delta = new_j - j
        j, f = new_j, new_f
        trace.record(j, f, step, lambda_a, retry, time.perf_counter() - start)
        log.debug("iteration %d: J=%.8g dJ=%.3g lambda_a=%g", it, j, delta, lambda_a)
        if callback:
            callback(it, trace)
        if abs(delta) < config.tolerance:
            break
    return control, trace


def single_point_train(theta, ensemble: EnsembleSpec, config: KrotovConfig | None = None):
    """Train for the single parameter value ``theta`` (the mid-point baseline)."""
    return train(ensemble.with_values([theta]), config)
