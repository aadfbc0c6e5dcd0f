import numpy as np
import pytest

from nmr_probe import config as config_mod
from nmr_probe import io
from nmr_probe.dynamics import ControlField
from nmr_probe.krotov import headline_values


def test_defaults_match_headline():
    cfg = config_mod.load()
    assert np.allclose(cfg.ensemble.values, headline_values(), rtol=0, atol=1e-15)
    assert cfg.ensemble.n_steps == 1600 and cfg.ensemble.final_time == 8.0
    assert cfg.plan.train_range == (0.4, 1.2)
    assert cfg.krotov.guess[0] == 0 and cfg.krotov.guess.shape == (1600,)


def test_dump_round_trips(tmp_path):
    cfg = config_mod.load()
    p = tmp_path / "c.cfg"
    p.write_text(cfg.dump())
    assert config_mod.load(p).dump() == cfg.dump()


@pytest.mark.parametrize("text", [
    "[nonsense]\nx = 1\n",
    "[bath]\nbeta = 1\n",
    "[bath]\ngamma = -1\n",
    "[bath]\ngamma = abc\n",
    "[ensemble]\nsegments = 0.8:0.4:10\n",
    "[system]\ninitial_state = sideways\n",
    "[run]\nseed = -3\n",
    "not an ini file",
])
def test_invalid_config_rejected(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(config_mod.ConfigError):
        config_mod.load(p)


def test_missing_file():
    with pytest.raises(config_mod.ConfigError):
        config_mod.load("/nonexistent/x.cfg")


def test_overrides():
    cfg = config_mod.load(overrides={"run.seed": "11", "bath.gamma_cap": "1.1"})
    assert cfg.seed == 11 and cfg.bath.gamma_cap == 1.1
    with pytest.raises(config_mod.ConfigError):
        config_mod.load(overrides={"run.colour": "blue"})


def test_control_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    c = ControlField(8.0, rng.normal(size=1600) / 3)
    p = io.save_control(tmp_path / "c.csv", c, {"note": "x"})
    back = io.load_control(p)
    assert np.array_equal(back.samples, c.samples) and back.final_time == c.final_time
    assert io.read_json(tmp_path / "c.json")["note"] == "x"


def test_control_without_sidecar(tmp_path):
    c = ControlField(2.0, [0.0, 0.5, 0.25, 0.0])
    p = io.save_control(tmp_path / "c.csv", c)
    (tmp_path / "c.json").unlink()
    assert io.load_control(p).final_time == 2.0


def test_json_handles_numpy_and_nonfinite(tmp_path):
    p = io.write_json(tmp_path / "a.json", {"a": np.arange(3), "b": np.float64(np.inf), "c": np.bool_(True)})
    assert io.read_json(p) == {"a": [0, 1, 2], "b": "inf", "c": True}
