"""CSV/JSON persistence. Floats are written with ``repr`` so files are
byte-stable across runs and round-trip exactly."""
from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np

from .dynamics import ControlField


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def write_columns(path, columns):
    """Write a dict of equal-length 1-D arrays as CSV columns."""
    header = list(columns)
    data = [np.asarray(columns[k]) for k in header]
    return write_csv(path, header, zip(*data))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def save_control(path, control: ControlField, metadata=None):
    """Control as CSV (interval start time, value) plus an optional JSON sidecar."""
    t = control.times[:-1]
    path = write_columns(path, {"t": t, "c": control.samples})
    meta = {"final_time": control.final_time, "n_steps": control.n_steps}
    meta.update(metadata or {})
    write_json(Path(path).with_suffix(".json"), meta)
    return path


def load_control(path) -> ControlField:
    path = Path(path)
    header, rows = read_csv(path)
    if header != ["t", "c"]:
        raise ValueError(f"{path}: expected columns t,c")
    samples = np.array([float(r[1]) for r in rows])
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        final_time = float(read_json(sidecar)["final_time"])
    else:
        t = np.array([float(r[0]) for r in rows])
        final_time = t[-1] + (t[1] - t[0])
    return ControlField(final_time, samples)


def write_states(path, times, rho, rho_shifted=None, obar=None):
    """State time series: Re/Im of the column-stacked entries of each block."""
    cols = {"t": times}
    blocks = [("lo", rho)] if rho_shifted is None else [("lo", rho), ("hi", rho_shifted)]
    for tag, r in blocks:
        v = np.swapaxes(r, -1, -2).reshape(r.shape[0], 4)
        for i in range(4):
            cols[f"re_{tag}{i}"] = v[:, i].real
            cols[f"im_{tag}{i}"] = v[:, i].imag
    if obar is not None:
        o = obar.reshape(obar.shape[0], 4)
        for i, name in enumerate(("00", "01", "10", "11")):
            cols[f"re_obar{name}"] = o[:, i].real
            cols[f"im_obar{name}"] = o[:, i].imag
    return write_columns(path, cols)


def sha256_text(text):
    return hashlib.sha256(text.encode()).hexdigest()


def versions():
    import scipy

    from . import __version__, kernels
    return {
        "nmr_probe": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
        "kernel_backend": kernels.BACKEND,
    }
