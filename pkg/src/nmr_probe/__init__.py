"""Ensemble Krotov control for estimating non-Markovian bath parameters of a qubit."""
__version__ = "0.1.0"

from .bath import BathSpec, correlation, spectral_density  # noqa: E402
from .dynamics import (  # noqa: E402
    ControlField,
    DirectSumState,
    SystemSpec,
    assemble_lindbladian,
    evolve_obar,
    propagate_density,
    propagate_pair,
)
from .krotov import EnsembleSpec, KrotovConfig, single_point_train, train  # noqa: E402
from .qfi import (  # noqa: E402
    MeasurementObservable,
    crb_closeness,
    optimize_observable,
    qfi_from_pair,
    sld,
    uncertainty,
)
from .readout import SweepPlan, fit_readout, invert_readout  # noqa: E402
