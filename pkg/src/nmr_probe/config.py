"""Experiment configuration: an INI file with one section per concern.

Every key has a default; unknown sections or keys are rejected so typos
fail loudly. ``resolve`` returns typed values and ``dump`` writes the fully
resolved snapshot stored next to every run's outputs.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .bath import PARAMETERS, BathSpec
from .dynamics import SystemSpec
from .krotov import EnsembleSpec, KrotovConfig, flattop_shape
from .readout import SweepPlan


class ConfigError(ValueError):
    pass


def _floats(text):
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _segments(text):
    """``lo:hi:n`` segments; a segment starting where the previous one ended
    omits its left endpoint, so ``0.4:0.7:20, 0.7:1.2:40`` gives 60 points."""
    out = []
    prev_hi = None
    for part in text.split(","):
        if not part.strip():
            continue
        lo, hi, n = part.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
        if prev_hi is not None and lo == prev_hi:
            pts = np.linspace(lo, hi, n + 1)[1:]
        else:
            pts = np.linspace(lo, hi, n)
        out.extend(pts.tolist())
        prev_hi = hi
    return out


# section -> key -> (parser, default text)
SCHEMA = {
    "system": {
        "omega": (float, "1.0"),
        "initial_state": (str, "plus"),
    },
    "bath": {
        "gamma_cap": (float, "1.0"),
        "gamma": (float, "0.8"),
        "omega_shift": (float, "0.0"),
    },
    "ensemble": {
        "parameter": (str, "gamma"),
        "segments": (_segments, "0.4:0.7:20, 0.7:1.2:40"),
        "dx": (float, "1e-4"),
        "final_time": (float, "8.0"),
        "n_steps": (int, "1600"),
        "midpoint": (float, "0.8"),
    },
    "krotov": {
        "lambda_a": (float, "100.0"),
        "max_iter": (int, "300"),
        "tolerance": (float, "1e-7"),
        "slack": (float, "1e-8"),
        "ramp": (float, "0.05"),
        "guess_amplitude": (float, "1.0"),
        "max_retries": (int, "10"),
        "refresh": (lambda s: _bool(s), "true"),
        "single_point": (lambda s: _bool(s), "true"),
    },
    "propagate": {
        "values": (_floats, "0.3, 1.3"),
        "use_control": (lambda s: _bool(s), "false"),
    },
    "scan": {
        "low": (float, "0.3"),
        "high": (float, "1.3"),
        "count": (int, "51"),
    },
    "sweep": {
        "n_in": (int, "600"),
        "n_above": (int, "200"),
        "n_below": (int, "200"),
        "above_low": (float, "1.2"),
        "above_high": (float, "1.6"),
        "below_low": (float, "0.2"),
        "below_high": (float, "0.4"),
        "trace_stride": (int, "8"),
    },
    "robustness": {
        "value": (float, "0.8"),
        "box": (float, "0.1"),
        "count": (int, "1000"),
    },
    "readout": {
        "test_count": (int, "200"),
        "degree_min": (int, "3"),
        "degree_max": (int, "6"),
    },
    "run": {
        "output": (str, "runs/headline"),
        "seed": (int, "0"),
    },
}

INITIAL_STATES = {
    "plus": np.array([1, 1], dtype=complex),
    "zero": np.array([1, 0], dtype=complex),
    "one": np.array([0, 1], dtype=complex),
    "plus_i": np.array([1, 1j], dtype=complex),
}


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    raw: dict
    system: SystemSpec
    bath: BathSpec
    ensemble: EnsembleSpec
    krotov: KrotovConfig
    plan: SweepPlan
    output: Path
    seed: int

    def __getitem__(self, section):
        return self.raw[section]

    def dump(self):
        """Resolved configuration as INI text (every key explicit)."""
        cp = configparser.ConfigParser(interpolation=None)
        for section, keys in SCHEMA.items():
            cp[section] = {k: self._text(section, k) for k in keys}
        from io import StringIO
        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()

    def _text(self, section, key):
        return self.raw["_text"][section][key]


def default_config_path():
    return resources.files("nmr_probe").joinpath("headline.cfg")


def load(path=None, overrides=None):
    """Parse and validate a config file; ``overrides`` maps 'section.key' to text."""
    cp = configparser.ConfigParser(interpolation=None)
    if path is None:
        text = default_config_path().read_text()
        source = "headline.cfg"
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        source = str(path)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    texts = {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in cp[section].items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            texts[section][key] = value
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown override {dotted!r}")
        texts[section][key] = str(value)
    return resolve(texts)


def resolve(texts):
    raw = {"_text": texts}
    for section, keys in SCHEMA.items():
        raw[section] = {}
        for key, (parse, _) in keys.items():
            try:
                raw[section][key] = parse(texts[section][key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    try:
        return _build(raw)
    except ConfigError:
        raise
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def _build(raw):
    s = raw["system"]
    if s["initial_state"] not in INITIAL_STATES:
        raise ConfigError(f"initial_state must be one of {sorted(INITIAL_STATES)}")
    system = SystemSpec(omega=s["omega"], psi0=INITIAL_STATES[s["initial_state"]])
    bath = BathSpec(**raw["bath"])
    e = raw["ensemble"]
    if e["parameter"] not in PARAMETERS:
        raise ConfigError(f"parameter must be one of {PARAMETERS}")
    if e["n_steps"] < 1 or e["final_time"] <= 0:
        raise ConfigError("n_steps and final_time must be positive")
    ensemble = EnsembleSpec(e["parameter"], tuple(e["segments"]), bath, e["dx"], system,
                            e["final_time"], e["n_steps"])
    k = raw["krotov"]
    guess = k["guess_amplitude"] * flattop_shape(e["n_steps"], k["ramp"])
    krotov = KrotovConfig(lambda_a=k["lambda_a"], max_iter=k["max_iter"], tolerance=k["tolerance"],
                          slack=k["slack"], ramp=k["ramp"], guess=guess,
                          max_retries=k["max_retries"], refresh=k["refresh"])
    sw = raw["sweep"]
    seed = raw["run"]["seed"]
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    values = ensemble.values
    plan = SweepPlan(sw["n_in"], sw["n_above"], sw["n_below"], (values[0], values[-1]),
                     (sw["above_low"], sw["above_high"]), (sw["below_low"], sw["below_high"]), seed)
    return ExperimentConfig(raw, system, bath, ensemble, krotov, plan, Path(raw["run"]["output"]), seed)
