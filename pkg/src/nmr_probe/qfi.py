"""Symmetric logarithmic derivative, quantum Fisher information and
Cramer-Rao closeness for single-qubit estimation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .dynamics import SX, SY, SZ, DirectSumState, dag, unvec

SUPPORT_EPS = 1e-10
HERMITIAN_TOL = 1e-8
CRB_TOL = 1e-6


class ContractError(ValueError):
    """Inputs violate the operation's preconditions."""


class CRBViolation(ArithmeticError):
    """An uncertainty beat the Cramer-Rao bound, which signals an upstream bug."""


class NoInformativeObservable(ArithmeticError):
    pass


class UninformativeObservableWarning(RuntimeWarning):
    pass


@dataclass(frozen=True, eq=False)
class QFIResult:
    qfi: float
    sld: np.ndarray
    eigenvalues: np.ndarray
    dx: float
    t: float = 0.0

    def residual(self, rho, drho):
        """Max deviation of (rho L + L rho)/2 from drho."""
        return float(np.max(np.abs(0.5 * (rho @ self.sld + self.sld @ rho) - drho)))


def _sld_eig(rho, drho, eps):
    p, u = np.linalg.eigh(rho)
    d = dag(u) @ drho @ u
    denom = p[..., :, None] + p[..., None, :]
    mask = denom > eps
    coef = np.where(mask, 2.0 / np.where(mask, denom, 1.0), 0.0)
    return p, u, coef * d


def sld(rho, drho, eps=SUPPORT_EPS):
    """Symmetric logarithmic derivative L with drho = (rho L + L rho)/2.

    Built in the eigenbasis of ``rho``; terms whose eigenvalue sum is at most
    ``eps`` are dropped (Moore-Penrose convention on the kernel).
    """
    rho = np.asarray(rho, dtype=complex)
    drho = np.asarray(drho, dtype=complex)
    for name, m in (("rho", rho), ("drho", drho)):
        if np.max(np.abs(m - dag(m))) > HERMITIAN_TOL:
            raise ContractError(f"{name} is not Hermitian")
    _, u, lt = _sld_eig(rho, drho, eps)
    return u @ lt @ dag(u)


def qfi(rho, drho, eps=SUPPORT_EPS):
    """F = tr(rho L^2); accepts stacks of matrices (..., n, n).

    Inputs are hermitized first, so the value is a smooth real function of
    every real and imaginary component.
    """
    rho = 0.5 * (rho + dag(rho))
    drho = 0.5 * (drho + dag(drho))
    p, _, lt = _sld_eig(rho, drho, eps)
    # tr(rho L^2) = sum_ij p_i |L_ij|^2 in the eigenbasis
    f = np.einsum("...i,...ij->...", p, np.abs(lt) ** 2)
    return f if np.ndim(f) else float(f)


def qfi_from_pair(state, dx, eps=SUPPORT_EPS) -> QFIResult:
    """QFI at the left block of a direct-sum state with forward difference ``dx``."""
    if dx <= 0:
        raise ContractError("dx must be positive")
    if isinstance(state, DirectSumState):
        rho, rho_hi = state.matrices
        t = state.t
    else:
        rho, rho_hi = (np.asarray(m, dtype=complex) for m in state)
        t = 0.0
    drho = (rho_hi - rho) / dx
    L = sld(rho, drho, eps)
    value = float(np.real(np.trace(rho @ L @ L)))
    return QFIResult(max(value, 0.0), L, np.linalg.eigvalsh(rho), dx, t)


def qfi_series(pair):
    """F(t) for every grid point of a ``PairTrajectory``."""
    return qfi(pair.rho, pair.derivative)


def qfi_gradient(rho, rho_hi, dx, eps=SUPPORT_EPS):
    """Gradients of F with respect to the left and right blocks.

    With dF = Re tr(G_left d rho) + Re tr(G_right d rho_hi):
    G_left = -L^2 - (2/dx) L, G_right = (2/dx) L. Because the gradients are
    Hermitian, ``vec(G)`` is the complex gradient under the pairing
    Re sum conj(g) dv.
    """
    rho = 0.5 * (rho + dag(rho))
    rho_hi = 0.5 * (rho_hi + dag(rho_hi))
    _, u, lt = _sld_eig(rho, (rho_hi - rho) / dx, eps)
    L = u @ lt @ dag(u)
    return -L @ L - (2.0 / dx) * L, (2.0 / dx) * L


@dataclass(frozen=True)
class MeasurementObservable:
    """Projective qubit observable n.sigma with Bloch angles (polar, azimuth)."""

    polar: float
    azimuth: float

    @property
    def bloch(self):
        s = math.sin(self.polar)
        return np.array([s * math.cos(self.azimuth), s * math.sin(self.azimuth), math.cos(self.polar)])

    @property
    def matrix(self):
        x, y, z = self.bloch
        return x * SX + y * SY + z * SZ

    @classmethod
    def from_bloch(cls, n):
        n = np.asarray(n, dtype=float)
        n = n / np.linalg.norm(n)
        return cls(math.acos(np.clip(n[2], -1, 1)), math.atan2(n[1], n[0]) % (2 * math.pi))


def _as_matrix(observable):
    if isinstance(observable, MeasurementObservable):
        return observable.matrix
    return np.asarray(observable, dtype=complex)


def _moments(rho, rho_hi, dx, a):
    mean = np.real(np.einsum("...ij,ji->...", rho, a))
    second = np.real(np.einsum("...ij,ji->...", rho, a @ a))
    slope = np.real(np.einsum("...ij,ji->...", rho_hi - rho, a)) / dx
    return mean, second, slope


def uncertainty(rho, rho_hi, dx, observable, warn=True):
    """delta = Delta A / |d<A>/d theta| with the forward difference ``dx``.

    Returns ``inf`` (with a warning) when the observable carries no
    information, i.e. its expectation does not move with the parameter.
    """
    a = _as_matrix(observable)
    mean, second, slope = _moments(np.asarray(rho), np.asarray(rho_hi), dx, a)
    spread = np.sqrt(np.maximum(second - mean * mean, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(np.abs(slope) > 1e-12 * max(1.0, np.max(np.abs(a))), spread / np.abs(slope), np.inf)
    if warn and np.any(np.isinf(delta)):
        warnings.warn("observable expectation does not depend on the parameter",
                      UninformativeObservableWarning, stacklevel=2)
    return delta if np.ndim(delta) else float(delta)


def crb_closeness(delta, fisher):
    """eta = delta sqrt(F) - 1, which is zero when the bound is saturated."""
    eta = np.asarray(delta, dtype=float) * np.sqrt(np.asarray(fisher, dtype=float)) - 1.0
    if np.any(eta < -CRB_TOL):
        raise CRBViolation(f"uncertainty below the Cramer-Rao bound (eta={np.min(eta):.3g})")
    return eta if eta.ndim else float(eta)


def _mean_closeness(angles, rho, rho_hi, dx, fisher):
    a = MeasurementObservable(*angles).matrix
    mean, second, slope = _moments(rho, rho_hi, dx, a)
    spread = np.sqrt(np.maximum(second - mean * mean, 0.0))
    slope = np.abs(slope)
    if np.any(slope == 0):
        return np.inf
    return float(np.mean(spread / slope * np.sqrt(fisher)))


def optimize_observable(rho, rho_hi, dx, grid=(64, 128), xatol=1e-8):
    """Bloch observable minimizing the uncertainty at one or several state pairs.

    With several pairs (stacked along the first axis) the mean of
    delta*sqrt(F) is minimized, which weights every pair by its own bound.
    A grid scan seeds a Nelder-Mead refinement.
    """
    rho = np.asarray(rho, dtype=complex)
    rho_hi = np.asarray(rho_hi, dtype=complex)
    if rho.ndim == 2:
        rho, rho_hi = rho[None], rho_hi[None]
    fisher = np.maximum(qfi(rho, (rho_hi - rho) / dx), 1e-300)
    polar = np.linspace(0, np.pi, grid[0])
    azimuth = np.linspace(0, 2 * np.pi, grid[1], endpoint=False)
    best, best_val = None, np.inf
    for p in polar:
        for q in azimuth:
            v = _mean_closeness((p, q), rho, rho_hi, dx, fisher)
            if v < best_val:
                best, best_val = (p, q), v
    if best is None:
        raise NoInformativeObservable("no observable on the grid depends on the parameter")
    res = minimize(_mean_closeness, best, args=(rho, rho_hi, dx, fisher), method="Nelder-Mead",
                   options={"xatol": xatol, "fatol": 1e-12, "maxiter": 4000})
    angles = res.x if res.fun <= best_val else np.asarray(best)
    return MeasurementObservable.from_bloch(MeasurementObservable(*angles).bloch)
