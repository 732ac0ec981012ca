import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liplab.config import ConfigError, ExperimentConfig, default_config, load_config


def test_defaults_validate_and_build():
    cfg = default_config()
    sp = cfg.build_space()
    assert sp.dim == 2
    f = cfg.build_function(sp)
    assert f.lip == 2.0
    E = cfg.build_exhaustion(sp)
    assert E.counts[0] == 4 and E.counts[-1] == 100
    assert len(cfg.build_measure().points) == 1600


def test_round_trip_is_identity():
    cfg = default_config()
    text = cfg.to_json()
    assert ExperimentConfig.from_json(text).to_json() == text
    assert ExperimentConfig.from_json(text) == cfg


@given(st.integers(0, 2**64 - 1), st.integers(1, 64), st.floats(1e-3, 10))
@settings(max_examples=50, deadline=None)
def test_round_trip_keeps_seed_exact(seed, N, eps):
    cfg = ExperimentConfig.from_dict({"seed": seed, "N": N, "eps": eps})
    back = ExperimentConfig.from_json(cfg.to_json())
    assert back.seed == seed and back.N == N and back.eps == eps


def test_seed_given_as_string():
    assert ExperimentConfig.from_dict({"seed": "18446744073709551615"}).seed == 2**64 - 1


@pytest.mark.parametrize(
    "d,msg",
    [
        ({"N": 0}, "empty index range"),
        ({"eps": 0}, "eps must be positive"),
        ({"eps": -1.0}, "eps must be positive"),
        ({"mode": "fast"}, "mode"),
        ({"seed": -1}, "seed"),
        ({"seed": 2**64}, "seed"),
        ({"seed": 1.5}, "seed"),
        ({"p": [0.5]}, "p must lie"),
        ({"p": ["inf"]}, "p must lie"),
        ({"bogus": 1}, "unknown config keys"),
        ({"function": {"family": "nope"}}, "unknown function family"),
        ({"function": {}}, "family"),
        ({"space": {"kind": "lp", "dim": 2, "p": 0.5}}, "space"),
        ({"measure": {"points": [[0.0], [1.0]], "weights": [0.5, -0.5]}}, "nonnegative"),
        ({"measure": {"lows": [0, 0], "highs": [1, 1], "counts": [4, 4], "density": {"constant": 0.5, "linear": [-1, 0]}}},
         "positive"),
        ({"exhaustion": {"counts": [4, 2]}}, "nondecreasing"),
        ({"mapop": {"instances": 0}}, "positive"),
    ],
)
def test_invalid_configs(d, msg):
    with pytest.raises(ConfigError, match=msg):
        ExperimentConfig.from_dict(d)


def test_invalid_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("[1, 2]")


def test_measure_density_and_explicit_atoms():
    cfg = ExperimentConfig.from_dict({"measure": {"lows": [0, 0], "highs": [1, 1], "counts": [10, 10],
                                                  "density": {"constant": 1.0, "linear": [1.0, 0.0]}}})
    assert cfg.build_measure().total_mass == pytest.approx(1.5)
    cfg = ExperimentConfig.from_dict({"measure": {"points": [[0.0], [1.0]], "weights": [0.25, 0.75]}})
    assert cfg.build_measure().total_mass == 1.0


def test_explicit_exhaustion_points():
    cfg = ExperimentConfig.from_dict({"space": {"kind": "lp", "dim": 1, "p": 2},
                                      "exhaustion": {"points": [[0.0], [0.5], [1.0]], "counts": [1, 3]}})
    E = cfg.build_exhaustion()
    assert E.counts == (1, 3) and E.level(1).tolist() == [[0.0]]


def test_samples_family_reads_csv(tmp_path):
    (tmp_path / "s.csv").write_text("x_1,value\n0.0,1.0\n1.0,3.0\n")
    (tmp_path / "c.json").write_text(json.dumps({"space": {"kind": "lp", "dim": 1, "p": 2},
                                                 "function": {"family": "samples", "path": "s.csv"}}))
    cfg = load_config(tmp_path / "c.json")
    f = cfg.build_function()
    assert f.lip == 2.0
    assert np.allclose(f(np.array([[0.0], [0.5], [1.0]])), [1.0, 2.0, 3.0])
    (tmp_path / "c.json").write_text(json.dumps({"function": {"family": "samples", "path": "missing.csv"}}))
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json").build_function()
