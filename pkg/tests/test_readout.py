import warnings

import numpy as np
import pytest

from nmr_probe.dynamics import ControlField
from nmr_probe.krotov import EnsembleSpec
from nmr_probe.readout import (ExtrapolationWarning, NonMonotoneReadout, ReadoutCurve, SweepPlan,
                               evaluate_values, expectation, fit_readout, invert_readout, pair_sweep,
                               robustness_sweep)
from nmr_probe.dynamics import SZ, SX


def test_fit_and_invert_round_trip():
    x = np.linspace(0.4, 1.2, 60)
    y = 0.9 * np.exp(-0.8 * x) + 0.05 * x ** 2
    curve = fit_readout(x, y, (0.4, 1.2))
    assert 3 <= curve.degree <= 6
    for v in np.linspace(0.41, 1.19, 25):
        m = 0.9 * np.exp(-0.8 * v) + 0.05 * v ** 2
        assert invert_readout(curve, m) == pytest.approx(v, abs=1e-5)


def test_degree_selected_by_cross_validation():
    x = np.linspace(0, 1, 40)
    curve = fit_readout(x, 1 + 2 * x + 0.5 * x ** 3, (0, 1))
    assert curve.degree == 3
    assert curve.residual_max < 1e-10


def test_non_monotone_data_rejected():
    x = np.linspace(0, np.pi, 40)
    with pytest.raises(NonMonotoneReadout):
        fit_readout(x, np.sin(x), (0, np.pi))


def test_out_of_range_measurement_clamps_with_warning():
    x = np.linspace(0, 1, 30)
    curve = fit_readout(x, x + 0.1 * x ** 2, (0, 1))
    with pytest.warns(ExtrapolationWarning):
        assert invert_readout(curve, 5.0) == 1.0
    with pytest.warns(ExtrapolationWarning):
        assert invert_readout(curve, -5.0) == 0.0


def test_curve_serialization_round_trip():
    x = np.linspace(0, 1, 30)
    curve = fit_readout(x, np.exp(-x), (0, 1))
    back = ReadoutCurve.from_dict(curve.to_dict())
    assert np.array_equal(back(x), curve(x))
    assert back.degree == curve.degree


def test_sweep_plan_is_seeded():
    plan = SweepPlan(50, 20, 10, (0.4, 1.2), seed=7)
    v1, r1 = plan.sample()
    v2, r2 = plan.sample()
    assert np.array_equal(v1, v2) and np.array_equal(r1, r2)
    assert np.all((v1[r1 == "in"] >= 0.4) & (v1[r1 == "in"] <= 1.2))
    assert np.all(v1[r1 == "above"] >= 1.2) and np.all(v1[r1 == "below"] < 0.4)
    assert not np.array_equal(SweepPlan(50, 20, 10, (0.4, 1.2), seed=8).sample()[0], v1)


def test_expectation():
    rho = np.array([[0.7, 0.2], [0.2, 0.3]])
    assert expectation(rho, SZ) == pytest.approx(0.4)
    assert expectation(np.stack([rho, rho]), SX) == pytest.approx([0.4, 0.4])


def small():
    return EnsembleSpec(values=(0.5, 0.8), n_steps=200, final_time=2.0)


def test_chunking_does_not_change_results():
    ens = small()
    c = ControlField(2.0, 0.3 * np.ones(200))
    baths = [ens.member_bath(v) for v in np.linspace(0.3, 1.3, 7)]
    a = pair_sweep(ens, c, baths, chunk=7)
    b = pair_sweep(ens, c, baths, chunk=2)
    assert np.array_equal(a.qfi, b.qfi)


def test_failed_items_are_isolated():
    ens = small()
    c = ControlField(2.0, 0.3 * np.ones(200))
    good = ens.member_bath(0.8)
    bad = ens.member_bath(1e300)   # memory rate overflows the integrator
    res = pair_sweep(ens, c, [good, bad, good])
    assert np.isfinite(res.final[0]) and np.isfinite(res.final[2])
    assert np.isnan(res.final[1])
    assert [e[0] for e in res.errors] == [1]


def test_evaluate_values_reports_uncontrolled_peak():
    ens = small()
    res = evaluate_values(np.array([0.6]), np.array(["in"]), ControlField.zeros(2.0, 200), ens)
    assert res.uncontrolled_peak[0] == pytest.approx(res.qfi[0].max())


def test_zero_box_robustness_collapses_envelope():
    ens = small()
    c = ControlField(2.0, 0.3 * np.ones(200))
    res = robustness_sweep(c, ens, 0.8, box=0.0, n=5)
    assert np.array_equal(res.lower, res.upper)
    assert np.array_equal(res.nominal, res.upper)
    assert res.parameters == ("gamma_cap", "omega_shift")
