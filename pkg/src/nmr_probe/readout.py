"""Validation sweeps, robustness sweeps and the curve-fit readout of the
estimated parameter from a final-time expectation value."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import bisect

from .bath import PARAMETERS
from .dynamics import SZ, ControlField, IntegrationError, propagate_blocks
from .qfi import crb_closeness, qfi, uncertainty

log = logging.getLogger(__name__)

CHUNK = 128


class NonMonotoneReadout(ValueError):
    pass


class ExtrapolationWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SweepPlan:
    """Random test values inside, above and below the training range."""

    n_in: int = 600
    n_above: int = 200
    n_below: int = 200
    train_range: tuple = (0.4, 1.2)
    above_range: tuple = (1.2, 1.6)
    below_range: tuple = (0.2, 0.4)
    seed: int = 0

    def sample(self):
        """Returns (values, regions); draws are reproducible for a given seed."""
        rng = np.random.default_rng(self.seed)
        parts = []
        for region, n, (lo, hi) in (("in", self.n_in, self.train_range),
                                    ("above", self.n_above, self.above_range),
                                    ("below", self.n_below, self.below_range)):
            parts.append((np.full(n, region), rng.uniform(lo, hi, n)))
        regions = np.concatenate([p[0] for p in parts]).astype(str)
        values = np.concatenate([p[1] for p in parts])
        return values, regions


@dataclass(frozen=True, eq=False)
class PairSummary:
    """QFI traces and final-time state pairs for a batch of bath settings."""

    times: np.ndarray
    qfi: np.ndarray
    rho: np.ndarray
    rho_shifted: np.ndarray
    dx: float
    errors: tuple = ()

    @property
    def final(self):
        return self.qfi[:, -1]


def pair_sweep(ensemble, control, baths, chunk=CHUNK):
    """Propagate (bath, bath + dx) pairs for every bath and keep F(t) and final states.

    A failing chunk is retried bath by bath so one bad point cannot sink the
    sweep; failed rows are NaN and their messages are listed in ``errors``.
    """
    n = len(baths)
    steps = control.n_steps
    out_f = np.full((n, steps + 1), np.nan)
    out_lo = np.full((n, 2, 2), np.nan, dtype=complex)
    out_hi = np.full((n, 2, 2), np.nan, dtype=complex)
    errors = []

    def run(idx):
        blocks = []
        for i in idx:
            blocks += [baths[i], baths[i].shifted(ensemble.parameter, ensemble.dx)]
        rho, _ = propagate_blocks(ensemble.system, blocks, control)
        lo, hi = rho[0::2], rho[1::2]
        out_f[idx] = qfi(lo, (hi - lo) / ensemble.dx)
        out_lo[idx] = lo[:, -1]
        out_hi[idx] = hi[:, -1]

    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n))
        try:
            run(idx)
        except IntegrationError:
            for i in idx:
                try:
                    run(np.array([i]))
                except IntegrationError as exc:
                    errors.append((int(i), str(exc)))
    return PairSummary(control.times, out_f, out_lo, out_hi, ensemble.dx, tuple(errors))


@dataclass(frozen=True, eq=False)
class SweepResult:
    values: np.ndarray
    regions: np.ndarray
    times: np.ndarray
    qfi: np.ndarray
    final: np.ndarray
    peak_time: np.ndarray
    uncontrolled_peak: np.ndarray
    eta_sz: np.ndarray
    rho: np.ndarray = field(repr=False, default=None)
    rho_shifted: np.ndarray = field(repr=False, default=None)
    errors: tuple = ()

    def region(self, name):
        return self.regions == name


def validation_sweep(plan: SweepPlan, control: ControlField, ensemble, chunk=CHUNK) -> SweepResult:
    """F(t) under ``control`` for every test value, with the uncontrolled peak for reference."""
    values, regions = plan.sample()
    return evaluate_values(values, regions, control, ensemble, chunk)


def evaluate_values(values, regions, control, ensemble, chunk=CHUNK):
    baths = [ensemble.member_bath(v) for v in values]
    controlled = pair_sweep(ensemble, control, baths, chunk)
    free = pair_sweep(ensemble, ControlField.zeros(control.final_time, control.n_steps), baths, chunk)
    ok = np.isfinite(controlled.final)
    eta = np.full(len(values), np.nan)
    if ok.any():
        delta = uncertainty(controlled.rho[ok], controlled.rho_shifted[ok], ensemble.dx, SZ, warn=False)
        with np.errstate(invalid="ignore"):
            eta[ok] = crb_closeness(delta, controlled.final[ok])
    peak_time = np.full(len(values), np.nan)
    peak_time[ok] = control.times[np.argmax(controlled.qfi[ok], axis=1)]
    return SweepResult(np.asarray(values, float), np.asarray(regions), control.times, controlled.qfi,
                       controlled.final, peak_time, np.max(free.qfi, axis=1), eta,
                       controlled.rho, controlled.rho_shifted, controlled.errors + free.errors)


@dataclass(frozen=True, eq=False)
class RobustnessResult:
    times: np.ndarray
    nominal: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    corners: np.ndarray
    corner_params: np.ndarray
    sample_params: np.ndarray
    parameters: tuple
    sample_final: np.ndarray = None
    errors: tuple = ()

    def corner_peak_ratio(self):
        """F(T_f) / max_t F(t) for each corner trace."""
        return self.corners[:, -1] / np.max(self.corners, axis=1)


def robustness_sweep(control, ensemble, value, box=0.1, n=1000, seed=0, chunk=CHUNK):
    """Envelope of F(t) when the two non-estimated bath parameters are off by up to ``box``.

    The nominal point and the four corners are always included; the random
    points are uniform in the box.
    """
    others = tuple(p for p in PARAMETERS if p != ensemble.parameter)
    nominal_bath = ensemble.member_bath(value)
    center = np.array([getattr(nominal_bath, p) for p in others])
    rng = np.random.default_rng(seed)
    samples = center + rng.uniform(-box, box, size=(n, 2))
    corners = center + box * np.array([[-1, -1], [-1, 1], [1, -1], [1, 1]], dtype=float)
    params = np.vstack([center[None], corners, samples])

    def bath_at(p):
        d = nominal_bath.to_dict()
        d.update(zip(others, p))
        return type(nominal_bath)(**d)

    res = pair_sweep(ensemble, control, [bath_at(p) for p in params], chunk)
    f = res.qfi
    finite = np.all(np.isfinite(f), axis=1)
    return RobustnessResult(control.times, f[0], np.min(f[finite], axis=0), np.max(f[finite], axis=0),
                            f[1:5], corners, samples, others, f[5:, -1], res.errors)


@dataclass(frozen=True, eq=False)
class ReadoutCurve:
    """Polynomial map theta -> <A(T_f)>, verified strictly monotone on ``interval``."""

    coef: np.ndarray
    domain: tuple
    interval: tuple
    degree: int
    cv_error: dict
    residual_max: float
    residual_rms: float
    increasing: bool
    samples: tuple = ()

    @property
    def polynomial(self):
        return Polynomial(self.coef, domain=self.domain)

    def __call__(self, theta):
        return self.polynomial(theta)

    def to_dict(self):
        return {
            "kind": "polynomial",
            "degree": self.degree,
            "coef": [float(c) for c in self.coef],
            "domain": [float(x) for x in self.domain],
            "interval": [float(x) for x in self.interval],
            "increasing": self.increasing,
            "cv_error": {str(k): float(v) for k, v in self.cv_error.items()},
            "residual_max": self.residual_max,
            "residual_rms": self.residual_rms,
            "samples": [[float(a), float(b)] for a, b in self.samples],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["coef"], float), tuple(d["domain"]), tuple(d["interval"]),
                   int(d["degree"]), {int(k): v for k, v in d["cv_error"].items()},
                   float(d["residual_max"]), float(d["residual_rms"]), bool(d["increasing"]),
                   tuple(tuple(s) for s in d.get("samples", ())))


def _loo_error(x, y, deg):
    errs = []
    for i in range(len(x)):
        keep = np.arange(len(x)) != i
        p = Polynomial.fit(x[keep], y[keep], deg)
        errs.append(p(x[i]) - y[i])
    return float(np.sqrt(np.mean(np.square(errs))))


def fit_readout(values, expectations, interval=None, degrees=range(3, 7), grid=1000):
    """Least-squares polynomial readout with leave-one-out degree selection.

    Raises ``NonMonotoneReadout`` when the fitted curve is not strictly
    monotone on a ``grid``-point mesh of ``interval``.
    """
    x = np.asarray(values, dtype=float)
    y = np.asarray(expectations, dtype=float)
    if x.size < 4 or x.shape != y.shape:
        raise ValueError("need at least 4 (value, expectation) pairs")
    if interval is None:
        interval = (float(x.min()), float(x.max()))
    usable = [d for d in degrees if d <= x.size - 2] or [min(degrees)]
    cv = {d: _loo_error(x, y, d) for d in usable}
    best = min(cv.values())
    # smallest degree within round-off of the best score
    degree = min(d for d in usable if cv[d] <= best * (1 + 1e-9) + 1e-14)
    poly = Polynomial.fit(x, y, degree)
    mesh = np.linspace(interval[0], interval[1], grid)
    diffs = np.diff(poly(mesh))
    increasing = bool(np.sum(diffs) > 0)
    bad = np.flatnonzero(diffs <= 0) if increasing else np.flatnonzero(diffs >= 0)
    if bad.size:
        i = bad[0]
        raise NonMonotoneReadout(
            f"fitted readout is not monotone on [{mesh[i]:.6g}, {mesh[i + 1]:.6g}]")
    resid = poly(x) - y
    return ReadoutCurve(poly.coef.copy(), tuple(poly.domain), tuple(interval), degree, cv,
                        float(np.max(np.abs(resid))), float(np.sqrt(np.mean(resid ** 2))),
                        increasing, tuple(zip(x, y)))


def invert_readout(curve: ReadoutCurve, measured, xtol=1e-10):
    """Parameter value whose fitted expectation equals ``measured``.

    Out-of-range measurements are clamped to the nearest end of the interval,
    with an ``ExtrapolationWarning`` unless the overshoot is within the fit
    residual.
    """
    lo, hi = curve.interval
    f_lo, f_hi = curve(lo) - measured, curve(hi) - measured
    if f_lo == 0:
        return float(lo)
    if f_hi == 0:
        return float(hi)
    if f_lo * f_hi > 0:
        if min(abs(f_lo), abs(f_hi)) > curve.residual_max:
            warnings.warn(f"measurement {measured:.6g} outside the readout range; clamping",
                          ExtrapolationWarning, stacklevel=2)
        return float(lo if abs(f_lo) < abs(f_hi) else hi)
    return float(bisect(lambda v: curve(v) - measured, lo, hi, xtol=xtol))


def expectation(rho, observable):
    """<A> for a stack of density operators."""
    return np.real(np.einsum("...ij,ji->...", rho, np.asarray(observable)))
