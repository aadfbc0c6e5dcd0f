"""Driven two-level system coupled to a Lorentzian bath.

The reduced dynamics is the convolutionless master equation

    d rho/dt = -i[H(t), rho] + [L, rho O^dag] - [L^dag, O rho]

with H(t) = omega*H0 + c(t)*Hc and the memory operator O(t) obeying the
closed local equation obtained for an exponential correlation function,

    dO/dt = (Gamma gamma / 2) L - (gamma + i Omega) O + [-iH(t) - L^dag O, O].

Density operators are vectorized by column stacking.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .bath import BathSpec

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)

HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8


class IntegrationError(RuntimeError):
    """Raised when a propagation produces non-finite values."""

    def __init__(self, message, time):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time


class PositivityWarning(RuntimeWarning):
    pass


def vec(rho):
    """Column-stacking vectorization of (..., n, n) matrices."""
    rho = np.asarray(rho)
    return np.swapaxes(rho, -1, -2).reshape(rho.shape[:-2] + (-1,))


def unvec(v, n=2):
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[:-1] + (n, n)), -1, -2)


def dag(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _is_hermitian(a, tol=1e-12):
    return np.max(np.abs(a - dag(a))) <= tol


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Two-level system: drift ``omega*h0``, control ``hc``, bath coupling ``coupling``."""

    omega: float = 1.0
    h0: np.ndarray = field(default_factory=lambda: SZ.copy())
    hc: np.ndarray = field(default_factory=lambda: 0.5 * (SX + SY))
    coupling: np.ndarray = field(default_factory=lambda: SZ.copy())
    psi0: np.ndarray = field(default_factory=lambda: np.array([1, 1], dtype=complex) / np.sqrt(2))

    def __post_init__(self):
        for name in ("h0", "hc", "coupling"):
            m = np.asarray(getattr(self, name), dtype=complex)
            if m.shape != (2, 2):
                raise ValueError(f"{name} must be 2x2")
            object.__setattr__(self, name, m)
        if not (_is_hermitian(self.h0) and _is_hermitian(self.hc)):
            raise ValueError("h0 and hc must be Hermitian")
        psi = np.asarray(self.psi0, dtype=complex)
        norm = np.linalg.norm(psi)
        if psi.shape != (2,) or norm == 0:
            raise ValueError("psi0 must be a nonzero 2-vector")
        object.__setattr__(self, "psi0", psi / norm)

    @property
    def drift(self):
        return self.omega * self.h0

    @property
    def rho0(self):
        return np.outer(self.psi0, np.conj(self.psi0))

    def hamiltonian(self, control_value=0.0):
        return self.drift + control_value * self.hc


@dataclass(frozen=True, eq=False)
class ControlField:
    """Piecewise-constant control; ``samples[k]`` acts on ``[k dt, (k+1) dt)``."""

    final_time: float
    samples: np.ndarray

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).reshape(-1)
        if self.final_time <= 0:
            raise ValueError("final_time must be positive")
        if s.size == 0:
            raise ValueError("control needs at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("control samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @classmethod
    def zeros(cls, final_time, n_steps):
        return cls(final_time, np.zeros(int(n_steps)))

    @property
    def n_steps(self):
        return self.samples.size

    @property
    def dt(self):
        return self.final_time / self.n_steps

    @property
    def times(self):
        """Grid points ``t_k = k dt``, ``k = 0..n_steps``."""
        return np.arange(self.n_steps + 1) * self.dt

    def with_samples(self, samples):
        return ControlField(self.final_time, samples)


@dataclass(frozen=True, eq=False)
class ObarTrajectory:
    """Memory operator on the half grid: ``values[m]`` is O(m dt / 2)."""

    values: np.ndarray
    dt: float
    bath: BathSpec

    @property
    def on_grid(self):
        return self.values[::2]

    @property
    def times(self):
        return np.arange(self.values.shape[0]) * (0.5 * self.dt)


@dataclass(frozen=True)
class DirectSumState:
    """Vectorized density operators at theta (left) and theta + dx (right)."""

    left: np.ndarray
    right: np.ndarray
    t: float = 0.0

    @classmethod
    def from_matrices(cls, rho, rho_shifted, t=0.0):
        return cls(vec(rho), vec(rho_shifted), t)

    @property
    def vector(self):
        return np.concatenate([self.left, self.right])

    @property
    def matrices(self):
        return unvec(self.left), unvec(self.right)


@dataclass(frozen=True, eq=False)
class PairTrajectory:
    """Co-propagated density operators at theta and theta + dx on the control grid."""

    times: np.ndarray
    rho: np.ndarray
    rho_shifted: np.ndarray
    dx: float

    def state(self, k=-1):
        return DirectSumState.from_matrices(self.rho[k], self.rho_shifted[k], float(self.times[k]))

    @property
    def derivative(self):
        return (self.rho_shifted - self.rho) / self.dx


def _bath_arrays(baths):
    amp = np.array([b.equal_time_correlation for b in baths], dtype=float)
    decay = np.array([b.decay for b in baths], dtype=complex)
    return amp, decay


def _check_finite(values, dt, what):
    flat = values.reshape(values.shape[0], values.shape[1], -1)
    bad = ~np.all(np.isfinite(flat), axis=(0, 2))
    if bad.any():
        raise IntegrationError(f"non-finite {what}", float(np.argmax(bad) * dt))


def obar_blocks(system, baths, control):
    """Memory operators for several baths under one control, shape (B, 2N+1, 2, 2)."""
    amp, decay = _bath_arrays(baths)
    out = kernels.obar_rk4(system.drift, system.hc, system.coupling, amp, decay,
                           control.samples, control.dt)
    _check_finite(out, 0.5 * control.dt, "memory operator")
    return out


def evolve_obar(system: SystemSpec, bath: BathSpec, control: ControlField) -> ObarTrajectory:
    """Memory operator O(t) = int_0^t alpha(t,s) O(t,s) ds under ``control``."""
    return ObarTrajectory(obar_blocks(system, [bath], control)[0], control.dt, bath)


def propagate_blocks(system, baths, control, obar=None, rho0=None, check=True):
    """Propagate one density operator per bath; returns (rho (B, N+1, 2, 2), obar)."""
    if obar is None:
        obar = obar_blocks(system, baths, control)
    if rho0 is None:
        rho0 = np.broadcast_to(system.rho0, (len(baths), 2, 2))
    rho = kernels.rho_forward(system.drift, system.hc, system.coupling, obar,
                              control.samples, rho0, control.dt)
    _check_finite(rho, control.dt, "density operator")
    if check:
        check_positivity(rho)
    return rho, obar


def check_positivity(rho, tol=POSITIVITY_TOL):
    """Warn (do not fail) when an eigenvalue dips below ``-tol``."""
    low = np.linalg.eigvalsh(0.5 * (rho + dag(rho))).min()
    if low < -tol:
        warnings.warn(f"density operator eigenvalue {low:.3g} below -{tol:g}", PositivityWarning,
                      stacklevel=3)


def propagate_pair(system: SystemSpec, bath_lo: BathSpec, bath_hi: BathSpec,
                   control: ControlField, dx: float | None = None) -> PairTrajectory:
    """Co-propagate the direct sum of the states at ``bath_lo`` and ``bath_hi``.

    ``dx`` defaults to the single parameter in which the two baths differ.
    """
    diffs = [getattr(bath_hi, n) - getattr(bath_lo, n) for n in ("gamma", "gamma_cap", "omega_shift")]
    if dx is None:
        nonzero = [d for d in diffs if d != 0]
        if len(nonzero) > 1:
            raise ValueError("baths must differ in exactly one parameter")
        dx = nonzero[0] if nonzero else 0.0
    rho, _ = propagate_blocks(system, [bath_lo, bath_hi], control)
    return PairTrajectory(control.times, rho[0], rho[1], dx)


def propagate_density(system: SystemSpec, bath: BathSpec, control: ControlField):
    """Density operators on the control grid, shape (N+1, 2, 2)."""
    rho, _ = propagate_blocks(system, [bath], control)
    return rho[0]


def superoperator(left, right):
    """Matrix of X -> left @ X @ right acting on column-stacked X."""
    return np.kron(np.transpose(right), left)


def assemble_lindbladian(system: SystemSpec, obar, control_value=0.0):
    """4x4 generator of the master equation for a fixed memory operator and control."""
    obar = np.asarray(obar, dtype=complex)
    return drift_superoperator(system, obar) + control_value * control_superoperator(system)


def drift_superoperator(system, obar):
    """Uncontrolled part: coherent drift plus the memory dissipator."""
    h = system.drift
    lop = system.coupling
    ldag = dag(lop)
    odag = dag(obar)
    return (-1j * (superoperator(h, ID2) - superoperator(ID2, h))
            + superoperator(lop, odag) - superoperator(ID2, odag @ lop)
            - superoperator(ldag @ obar, ID2) + superoperator(obar, ldag))


def control_superoperator(system):
    """Superoperator of X -> -i[hc, X]."""
    hc = system.hc
    return -1j * (superoperator(hc, ID2) - superoperator(ID2, hc))
