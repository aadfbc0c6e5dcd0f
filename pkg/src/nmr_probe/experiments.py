"""One runner per CLI subcommand. Each writes CSV/JSON under the output
directory and returns a summary dict whose ``checks`` list records every
acceptance threshold together with its outcome."""
from __future__ import annotations

import logging
import time
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import io
from .dynamics import SZ, ControlField, propagate_blocks, propagate_pair
from .krotov import KrotovConvergenceError, single_point_train, train
from .qfi import CRB_TOL, MeasurementObservable, crb_closeness, optimize_observable, qfi_series, uncertainty
from .readout import (NonMonotoneReadout, SweepPlan, evaluate_values, expectation, fit_readout,
                      invert_readout, pair_sweep, robustness_sweep)

log = logging.getLogger(__name__)

# reference values reported for the trained dephasing setup
REFERENCE_MOPT = (-0.14, -0.40, 0.91)


def check(name, value, threshold, passed):
    return {"name": name, "value": value, "threshold": threshold, "passed": bool(passed)}


def dephasing_qfi(t, gamma, gamma_cap=1.0, dx=None):
    """Analytic F_gamma(t) of the uncontrolled dephasing qubit (Omega = 0).

    With ``dx`` the derivative of the decoherence factor is the forward
    difference, matching what the finite-difference QFI computes exactly.
    """
    t = np.asarray(t, dtype=float)

    def decoherence(g):
        return np.exp(-2 * gamma_cap * (t - (1 - np.exp(-g * t)) / g))

    d = decoherence(gamma)
    if dx is None:
        dq = t * np.exp(-gamma * t) / gamma - (1 - np.exp(-gamma * t)) / gamma ** 2
        dd = 2 * gamma_cap * d * dq
    else:
        dd = (decoherence(gamma + dx) - d) / dx
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(t > 0, dd ** 2 / (1 - d ** 2), 0.0)
    return f


def _is_plain_dephasing(cfg):
    s = cfg.system
    return (np.allclose(s.h0, SZ) and np.allclose(s.coupling, SZ) and cfg.bath.omega_shift == 0
            and cfg.ensemble.parameter == "gamma" and cfg.raw["system"]["initial_state"] == "plus")


class Run:
    """Output directory bookkeeping for one subcommand invocation."""

    def __init__(self, cfg, command, out=None):
        self.cfg = cfg
        self.command = command
        self.out = Path(out or cfg.output)
        self.out.mkdir(parents=True, exist_ok=True)
        self.start = time.perf_counter()
        self.outputs = []
        self.inputs = {"config": io.sha256_text(cfg.dump())}
        (self.out / "config.resolved.cfg").write_text(cfg.dump())

    def path(self, name):
        p = self.out / self.command / name
        self.outputs.append(str(p.relative_to(self.out)))
        return p

    def add_input(self, name, path):
        self.inputs[name] = io.sha256_text(Path(path).read_text())

    def finish(self, summary):
        summary = dict(summary)
        summary["command"] = self.command
        summary["all_passed"] = all(c["passed"] for c in summary.get("checks", []))
        io.write_json(self.path("summary.json"), summary)
        manifest = {"command": self.command, "inputs": self.inputs, "versions": io.versions(),
                    "wall_time_s": time.perf_counter() - self.start, "outputs": sorted(self.outputs)}
        io.write_json(self.out / f"manifest_{self.command}.json", manifest)
        return summary


def _zero_control(cfg):
    return ControlField.zeros(cfg.ensemble.final_time, cfg.ensemble.n_steps)


def run_propagate(cfg, out=None, control=None):
    run = Run(cfg, "propagate", out)
    if cfg["propagate"]["use_control"]:
        control, _ = obtain_control(cfg, run, control)
    else:
        control = _zero_control(cfg)
    ens = cfg.ensemble
    columns = {"t": control.times}
    peaks = {}
    times = []
    checks = []
    analytic = control is not None and not np.any(control.samples) and _is_plain_dephasing(cfg)
    for v in cfg["propagate"]["values"]:
        bath = ens.member_bath(v)
        pair = propagate_pair(ens.system, bath, bath.shifted(ens.parameter, ens.dx), control, dx=ens.dx)
        f = qfi_series(pair)
        label = f"{ens.parameter}={v!r}"
        io.write_states(run.path(f"states_{label}.csv"), pair.times, pair.rho, pair.rho_shifted)
        columns[f"F[{label}]"] = f
        peaks[label] = {"peak_time": float(control.times[np.argmax(f)]), "peak_qfi": float(f.max()),
                        "final_qfi": float(f[-1])}
        times.append(peaks[label]["peak_time"])
        checks.append(check(f"F(0)=0 [{label}]", float(f[0]), 0.0, f[0] == 0.0))
        if analytic:
            ref = dephasing_qfi(control.times, v, bath.gamma_cap, dx=ens.dx)
            rel = float(np.max(np.abs(f[1:] - ref[1:]) / ref[1:]))
            exact = dephasing_qfi(control.times, v, bath.gamma_cap)
            peaks[label]["rel_error_vs_exact_derivative"] = float(
                np.max(np.abs(f[1:] - exact[1:]) / exact[1:]))
            checks.append(check(f"analytic oracle [{label}]", rel, 1e-4, rel <= 1e-4))
    io.write_columns(run.path("qfi.csv"), columns)
    io.write_json(run.path("grid.json"), {"final_time": control.final_time, "n_steps": control.n_steps,
                                          "dx": ens.dx, "parameter": ens.parameter})
    if len(times) > 1:
        checks.append(check("distinct peak times", times, "not all equal", len(set(times)) > 1))
    return run.finish({"curves": peaks, "checks": checks})


def run_qfi_scan(cfg, out=None):
    run = Run(cfg, "qfi-scan", out)
    ens = cfg.ensemble
    sc = cfg["scan"]
    values = np.linspace(sc["low"], sc["high"], sc["count"])
    control = _zero_control(cfg)
    res = pair_sweep(ens, control, [ens.member_bath(v) for v in values])
    f = res.qfi
    norm = f / np.max(f, axis=1, keepdims=True)
    cols = {"t": control.times}
    for v, row in zip(values, norm):
        cols[f"{ens.parameter}={v!r}"] = row
    io.write_columns(run.path("normalized_qfi.csv"), cols)
    peak_time = control.times[np.argmax(f, axis=1)]
    locus = {ens.parameter: values, "peak_time": peak_time, "peak_qfi": np.max(f, axis=1)}
    checks = [check("peak locus finite", None, "finite", np.all(np.isfinite(peak_time))),
              check("normalized in [0, 1]", [float(norm.min()), float(norm.max())], [0, 1],
                    norm.min() >= 0 and norm.max() <= 1)]
    if _is_plain_dephasing(cfg):
        ref = np.array([control.times[np.argmax(dephasing_qfi(control.times, v, cfg.bath.gamma_cap))]
                        for v in values])
        locus["analytic_peak_time"] = ref
        gap = float(np.max(np.abs(ref - peak_time)))
        checks.append(check("locus matches analytic", gap, control.dt, gap <= control.dt + 1e-12))
    io.write_columns(run.path("peak_locus.csv"), locus)
    return run.finish({"values": values, "peak_time": peak_time, "checks": checks})


def _train(ensemble, krotov, single=None):
    try:
        if single is None:
            control, trace = train(ensemble, krotov)
        else:
            control, trace = single_point_train(single, ensemble, krotov)
        status = "converged" if trace.iterations < krotov.max_iter else "iteration-cap"
    except KrotovConvergenceError as exc:
        if exc.trace.iterations == 0:
            raise
        control, trace, status = exc.control, exc.trace, "retry-exhausted"
    return control, trace, status


def _save_training(run, name, control, trace, status, ensemble, cfg):
    meta = {"status": status, "iterations": trace.iterations, "final_functional": trace.functional[-1],
            "initial_functional": trace.functional[0], "lambda_a_final": trace.lambda_a[-1],
            "ensemble_values": list(ensemble.values), "parameter": ensemble.parameter,
            "config_hash": io.sha256_text(cfg.dump())}
    io.save_control(run.path(f"{name}.csv"), control, meta)
    run.outputs.append(str(Path(run.command) / f"{name}.json"))
    io.write_columns(run.path(f"trace_{name}.csv"), {
        "iteration": np.arange(len(trace.functional)), "J_T": trace.functional,
        "update_norm": trace.update_norm, "lambda_a": trace.lambda_a, "retries": trace.retries})
    io.write_columns(run.path(f"members_{name}.csv"), {
        ensemble.parameter: ensemble.values, "F_initial": trace.member_qfi[0],
        "F_final": trace.member_qfi[-1]})
    return meta


def _training_checks(name, control, trace, slack, path):
    inc = trace.max_increase()
    reloaded = io.load_control(path)
    return [
        check(f"monotone J_T [{name}]", inc, slack, inc <= slack),
        check(f"pinned endpoints [{name}]", [control.samples[0], control.samples[-1]], 0.0,
              control.samples[0] == 0 and control.samples[-1] == 0),
        check(f"round trip [{name}]", None, "bit-exact",
              np.array_equal(reloaded.samples, control.samples) and reloaded.final_time == control.final_time),
    ]


def run_train(cfg, out=None):
    run = Run(cfg, "train", out)
    checks = []
    summary = {}
    jobs = [("control", None)]
    if cfg["krotov"]["single_point"]:
        jobs.append(("control_single", cfg["ensemble"]["midpoint"]))
    for name, single in jobs:
        ens = cfg.ensemble if single is None else cfg.ensemble.with_values([single])
        control, trace, status = _train(cfg.ensemble, cfg.krotov, single)
        summary[name] = _save_training(run, name, control, trace, status, ens, cfg)
        checks += _training_checks(name, control, trace, cfg.krotov.slack,
                                   run.out / run.command / f"{name}.csv")
    return run.finish({**summary, "checks": checks})


def obtain_control(cfg, run, path=None, name="control"):
    """Load a trained control, training (and saving) it first when absent."""
    path = Path(path) if path else run.out / "train" / f"{name}.csv"
    if not path.exists():
        log.info("no %s at %s; training", name, path)
        single = cfg["ensemble"]["midpoint"] if name == "control_single" else None
        ens = cfg.ensemble if single is None else cfg.ensemble.with_values([single])
        control, trace, status = _train(cfg.ensemble, cfg.krotov, single)
        sub = Run.__new__(Run)
        sub.out, sub.command, sub.outputs = run.out, "train", []
        _save_training(sub, name, control, trace, status, ens, cfg)
    run.add_input(name, path)
    return io.load_control(path), path


def run_test(cfg, out=None, control=None, single=None):
    run = Run(cfg, "test", out)
    control, _ = obtain_control(cfg, run, control)
    ens = cfg.ensemble
    res = evaluate_values(*cfg.plan.sample(), control, ens)
    inr = res.region("in")
    rows = {"index": np.arange(len(res.values)), "region": res.regions, ens.parameter: res.values,
            "F_final": res.final, "peak_time": res.peak_time, "uncontrolled_peak": res.uncontrolled_peak,
            "eta_sz": res.eta_sz}
    checks = []
    summary = {"errors": list(res.errors)}
    single_mean = None
    if cfg["krotov"]["single_point"] or single:
        sc, _ = obtain_control(cfg, run, single, "control_single")
        sres = pair_sweep(ens, sc, [ens.member_bath(v) for v in res.values])
        rows["F_final_single"] = sres.final
        single_mean = float(np.nanmean(sres.final[inr]))
    io.write_columns(run.path("tests.csv"), rows)
    stride = max(1, cfg["sweep"]["trace_stride"])
    traces = {"t": res.times[::stride]}
    for i, row in enumerate(res.qfi):
        traces[f"F[{i}]"] = row[::stride]
    io.write_columns(run.path("traces.csv"), traces)

    above = res.final[inr] > res.uncontrolled_peak[inr]
    frac = float(np.mean(above))
    rho_s, _ = spearmanr(res.values[inr], res.final[inr])
    for region in ("in", "above", "below"):
        m = res.region(region)
        if m.any():
            summary[f"mean_F_final_{region}"] = float(np.nanmean(res.final[m]))
            summary[f"mean_uncontrolled_peak_{region}"] = float(np.nanmean(res.uncontrolled_peak[m]))
    summary["fraction_above_uncontrolled_peak_in"] = frac
    summary["spearman_in"] = float(rho_s)
    checks.append(check("F(T_f) > uncontrolled peak (in-range fraction)", frac, 0.9, frac >= 0.9))
    if single_mean is not None:
        summary["mean_F_final_single_in"] = single_mean
        mean_in = summary["mean_F_final_in"]
        checks.append(check("ensemble mean > single-point mean", [mean_in, single_mean], "strict",
                            mean_in > single_mean))
    checks.append(check("Spearman(theta, F(T_f)) in range", float(rho_s), -0.9, rho_s <= -0.9))
    eta_min = float(np.nanmin(res.eta_sz))
    checks.append(check("CRB holds for sigma_z", eta_min, -CRB_TOL, eta_min >= -CRB_TOL))

    # forward-difference stability on one seeded test point
    probe = float(res.values[inr][0])
    half = pair_sweep(_with_dx(ens, ens.dx / 2), control, [ens.member_bath(probe)]).final[0]
    rel = abs(half - res.final[inr][0]) / res.final[inr][0]
    summary["dx_halving_probe"] = {"value": probe, "relative_change": rel}
    checks.append(check("dx halving stability", rel, 1e-3, rel <= 1e-3))
    return run.finish({**summary, "checks": checks})


def _with_dx(ens, dx):
    from dataclasses import replace
    return replace(ens, dx=dx)


def run_robustness(cfg, out=None, control=None):
    run = Run(cfg, "robustness", out)
    control, _ = obtain_control(cfg, run, control)
    rb = cfg["robustness"]
    res = robustness_sweep(control, cfg.ensemble, rb["value"], rb["box"], rb["count"], cfg.seed)
    cols = {"t": res.times, "nominal": res.nominal, "lower": res.lower, "upper": res.upper}
    for i, p in enumerate(res.corner_params):
        cols[f"corner[{res.parameters[0]}={p[0]!r},{res.parameters[1]}={p[1]!r}]"] = res.corners[i]
    io.write_columns(run.path("envelope.csv"), cols)
    io.write_columns(run.path("samples.csv"), {res.parameters[0]: res.sample_params[:, 0],
                                               res.parameters[1]: res.sample_params[:, 1],
                                               "F_final": res.sample_final})
    ratios = res.corner_peak_ratio()
    contains = bool(np.all(res.lower <= res.nominal) and np.all(res.nominal <= res.upper))
    checks = [check("corner F(T_f) >= 0.8 max F", ratios, 0.8, np.all(ratios >= 0.8)),
              check("envelope contains nominal", None, True, contains)]
    return run.finish({"corner_params": res.corner_params, "corner_ratio": ratios,
                       "errors": list(res.errors), "checks": checks})


def _training_pairs(cfg, control):
    ens = cfg.ensemble
    res = pair_sweep(ens, control, [ens.member_bath(v) for v in ens.values])
    return np.asarray(ens.values), res


def run_measure(cfg, out=None, control=None):
    run = Run(cfg, "measure", out)
    control, _ = obtain_control(cfg, run, control)
    ens = cfg.ensemble
    _, train_res = _training_pairs(cfg, control)
    mopt = optimize_observable(train_res.rho, train_res.rho_shifted, ens.dx)
    plan = cfg.plan
    values, _ = SweepPlan(plan.n_in, 0, 0, plan.train_range, seed=plan.seed).sample()
    res = pair_sweep(ens, control, [ens.member_bath(v) for v in values])
    d_sz = uncertainty(res.rho, res.rho_shifted, ens.dx, SZ, warn=False)
    d_m = uncertainty(res.rho, res.rho_shifted, ens.dx, mopt, warn=False)
    eta_sz = crb_closeness(d_sz, res.final)
    eta_m = crb_closeness(d_m, res.final)
    io.write_columns(run.path("closeness.csv"), {ens.parameter: values, "F_final": res.final,
                                                 "delta_sz": d_sz, "eta_sz": eta_sz,
                                                 "delta_mopt": d_m, "eta_mopt": eta_m})
    bloch = mopt.bloch
    ref = np.array(REFERENCE_MOPT)
    sign = 1.0 if np.dot(bloch, ref) >= 0 else -1.0
    report = {"polar": mopt.polar, "azimuth": mopt.azimuth, "bloch": bloch,
              "mean_delta": float(np.mean(d_m)), "mean_eta": float(np.mean(eta_m)),
              "reference_bloch": ref, "max_component_gap_to_reference": float(np.max(np.abs(sign * bloch - ref)))}
    io.write_json(run.path("observable.json"), report)
    m_sz, m_m = float(np.mean(eta_sz)), float(np.mean(eta_m))
    eta_min = float(min(eta_sz.min(), eta_m.min()))
    checks = [check("eta >= -1e-6", eta_min, -CRB_TOL, eta_min >= -CRB_TOL),
              check("mean eta(M_opt) <= 0.05", m_m, 0.05, m_m <= 0.05),
              check("mean eta(M_opt) < mean eta(sigma_z)", [m_m, m_sz], "strict", m_m < m_sz)]
    return run.finish({"observable": report, "mean_eta_sz": m_sz, "mean_eta_mopt": m_m, "checks": checks})


def run_fit(cfg, out=None, control=None, observable=None):
    run = Run(cfg, "fit", out)
    control, _ = obtain_control(cfg, run, control)
    ens = cfg.ensemble
    values, train_res = _training_pairs(cfg, control)
    obs_path = Path(observable) if observable else run.out / "measure" / "observable.json"
    if obs_path.exists():
        o = io.read_json(obs_path)
        mopt = MeasurementObservable(o["polar"], o["azimuth"])
        run.add_input("observable", obs_path)
    else:
        mopt = optimize_observable(train_res.rho, train_res.rho_shifted, ens.dx)
    rd = cfg["readout"]
    degrees = range(rd["degree_min"], rd["degree_max"] + 1)
    interval = (values[0], values[-1])
    tests = np.linspace(interval[0], interval[1], rd["test_count"])
    test_res = pair_sweep(ens, control, [ens.member_bath(v) for v in tests])
    cols = {ens.parameter: tests}
    checks = []
    summary = {}
    for tag, a in (("sz", SZ), ("mopt", mopt.matrix)):
        y = expectation(train_res.rho, a)
        try:
            curve = fit_readout(values, y, interval, degrees)
        except NonMonotoneReadout as exc:
            checks.append(check(f"monotone readout [{tag}]", str(exc), "strictly monotone", False))
            continue
        io.write_json(run.path(f"readout_{tag}.json"), curve.to_dict())
        measured = expectation(test_res.rho, a)
        est = np.array([invert_readout(curve, m) for m in measured])
        err = np.abs(est - tests)
        cols[f"expect_{tag}"] = measured
        cols[f"estimate_{tag}"] = est
        cols[f"error_{tag}"] = err
        summary[f"max_error_{tag}"] = float(err.max())
        summary[f"degree_{tag}"] = curve.degree
        checks.append(check(f"monotone readout [{tag}]", None, "strictly monotone", True))
        if tag == "sz":
            checks.append(check("max inversion error [sz]", float(err.max()), 1e-2, err.max() <= 1e-2))
    io.write_columns(run.path("inversion.csv"), cols)
    return run.finish({**summary, "checks": checks})


RUNNERS = {
    "propagate": run_propagate,
    "qfi-scan": run_qfi_scan,
    "train": run_train,
    "test": run_test,
    "robustness": run_robustness,
    "measure": run_measure,
    "fit": run_fit,
}
