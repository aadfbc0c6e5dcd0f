"""Backend selection for the time-stepping kernels.

The compiled extension ``nmr_probe._kernels`` is used when it is importable;
otherwise the NumPy implementation is used. Set ``NMR_PROBE_BACKEND=python``
to force the fallback.
"""
import importlib
import os

_MODULES = {"compiled": "nmr_probe._kernels", "python": "nmr_probe._kernels_py"}


def load(name):
    """Import a backend by name ('compiled' or 'python')."""
    try:
        return importlib.import_module(_MODULES[name])
    except KeyError:
        raise ValueError(f"unknown kernel backend {name!r}") from None


def available():
    names = []
    for name in _MODULES:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select():
    requested = os.environ.get("NMR_PROBE_BACKEND", "").strip().lower()
    if requested:
        return load(requested)
    try:
        return load("compiled")
    except ImportError:
        return load("python")


_impl = _select()
BACKEND = _impl.BACKEND
obar_rk4 = _impl.obar_rk4
rho_forward = _impl.rho_forward
costate_backward = _impl.costate_backward
sequential_update = _impl.sequential_update
control_pairing = _impl.control_pairing
