"""Lorentzian bath spectrum and its Ornstein-Uhlenbeck correlation function."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PARAMETERS = ("gamma", "gamma_cap", "omega_shift")


@dataclass(frozen=True)
class BathSpec:
    """Zero-temperature Lorentzian bath.

    Attributes
    ----------
    gamma_cap : float
        System-bath coupling strength (inverse time).
    gamma : float
        Memory rate, the inverse bath correlation time. Small values mean
        long memory; ``gamma -> inf`` is the Markov limit.
    omega_shift : float
        Central frequency of the spectrum.
    """

    gamma_cap: float = 1.0
    gamma: float = 0.8
    omega_shift: float = 0.0

    def __post_init__(self):
        for name in PARAMETERS:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.gamma_cap <= 0 or self.gamma <= 0:
            raise ValueError("gamma_cap and gamma must be positive")

    @property
    def equal_time_correlation(self) -> float:
        return 0.5 * self.gamma_cap * self.gamma

    @property
    def decay(self) -> complex:
        """Complex decay rate ``gamma + i*omega_shift`` of the correlation."""
        return complex(self.gamma, self.omega_shift)

    def shifted(self, parameter: str, dx: float) -> "BathSpec":
        if parameter not in PARAMETERS:
            raise ValueError(f"unknown bath parameter {parameter!r}")
        values = {name: getattr(self, name) for name in PARAMETERS}
        values[parameter] += dx
        return BathSpec(**values)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in PARAMETERS}


def spectral_density(spec: BathSpec, omega):
    """J(omega) = Gamma gamma^2 / (2 pi ((omega - Omega)^2 + gamma^2))."""
    omega = np.asarray(omega, dtype=float)
    g = spec.gamma
    out = spec.gamma_cap * g * g / (2 * np.pi * ((omega - spec.omega_shift) ** 2 + g * g))
    return out if out.ndim else float(out)


def correlation(spec: BathSpec, t, s):
    """alpha(t, s) = (Gamma gamma / 2) exp(-gamma |t - s| - i Omega (t - s))."""
    tau = np.asarray(t, dtype=float) - np.asarray(s, dtype=float)
    out = spec.equal_time_correlation * np.exp(-spec.gamma * np.abs(tau) - 1j * spec.omega_shift * tau)
    return out if out.ndim else complex(out)


def memory_integral(spec: BathSpec, t):
    """Closed form of the integral of alpha(t, s) over s in [0, t]."""
    t = np.asarray(t, dtype=float)
    k = spec.decay
    out = 0.5 * spec.gamma_cap * spec.gamma * (1 - np.exp(-k * t)) / k
    return out if out.ndim else complex(out)
