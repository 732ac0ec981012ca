"""Experiment configuration: one JSON document, parsed and validated up front."""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import fields as fam
from .lipschitz import FiniteSampleFunction
from .normed_space import NormedSpace
from .pipeline import CompactExhaustion
from .sobolev_bv import WeightedMeasure

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "default_config"]

MODES = ("faithful", "exact-contract")


class ConfigError(ValueError):
    pass


def _num(x, name, positive=False, integer=False):
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise ConfigError(f"{name} must be a number")
    try:
        v = float(x)
    except ValueError:
        raise ConfigError(f"{name} must be a number") from None
    if math.isnan(v):
        raise ConfigError(f"{name} must be a number")
    if integer and v != int(v):
        raise ConfigError(f"{name} must be an integer")
    if positive and not v > 0:
        raise ConfigError(f"{name} must be positive")
    return int(v) if integer else v


def _seed(x):
    # exact integer parse: float() would round seeds above 2**53
    if isinstance(x, bool):
        raise ConfigError("seed must be an integer")
    if isinstance(x, int):
        return x
    if isinstance(x, str) and x.strip().lstrip("+-").isdigit():
        return int(x)
    if isinstance(x, float) and x.is_integer():
        return int(x)
    raise ConfigError("seed must be an integer")


@dataclass
class ExperimentConfig:
    """Canonical experiment description (see README for the schema)."""

    space: dict = field(default_factory=lambda: {"kind": "lp", "dim": 2, "p": "inf"})
    function: dict = field(default_factory=lambda: {"family": "norm_cone", "cap": 1.0})
    exhaustion: dict = field(default_factory=lambda: {"radius": 1.0, "max_points": 100, "growth": 4})
    eps: float = 0.5
    N: int = 32
    mode: str = "faithful"
    measure: dict = field(default_factory=lambda: {"lows": [-1.0, -1.0], "highs": [1.0, 1.0], "counts": [40, 40]})
    p: list = field(default_factory=lambda: [1.0, 2.0])
    seed: int = 0
    out: str = "liplab_out"
    sample_points: int = 100
    mapop: dict = field(default_factory=lambda: {"instances": 200, "max_vectors": 5, "max_labels": 10000, "eps": 0.1})
    bv: dict = field(default_factory=lambda: {"w0": 0.64, "w_min": 0.02, "M": 8, "N": 16})
    tolerances: dict = field(default_factory=lambda: {"energy": 0.02, "lp": 0.01, "weak": 0.05})
    verify: dict = field(default_factory=lambda: {"instances": 20, "pairs": 2000})
    base_dir: str = field(default=".", repr=False, compare=False)

    # -- parse / emit ----------------------------------------------------------

    @classmethod
    def from_dict(cls, d, base_dir="."):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**copy.deepcopy(d))
        cfg.base_dir = str(base_dir)
        cfg.validate()
        return cfg

    def to_dict(self):
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self) if f.name != "base_dir"}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text, base_dir="."):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e}") from None
        return cls.from_dict(d, base_dir)

    # -- validation ------------------------------------------------------------

    def validate(self):
        if self.N is None or _num(self.N, "N", integer=True) < 1:
            raise ConfigError("empty index range (N must be at least 1)")
        self.N = int(self.N)
        self.eps = _num(self.eps, "eps", positive=True)
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        self.seed = _seed(self.seed)
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        self.sample_points = _num(self.sample_points, "sample_points", positive=True, integer=True)
        ps = self.p if isinstance(self.p, list) else [self.p]
        for q in ps:
            if _num(q, "p") < 1 or math.isinf(float(q)):
                raise ConfigError("every p must lie in [1, inf)")
        self.p = [float(q) for q in ps]
        for name in ("mapop", "bv", "tolerances", "verify"):
            for k, v in getattr(self, name).items():
                if isinstance(v, (int, float)) and not isinstance(v, bool):
                    _num(v, f"{name}.{k}", positive=True)
        self.build_space()
        self.build_measure()
        ex = self.exhaustion
        if "counts" in ex:
            counts = [_num(c, "exhaustion.counts", positive=True, integer=True) for c in ex["counts"]]
            if any(b < a for a, b in zip(counts, counts[1:])):
                raise ConfigError("exhaustion counts must be nondecreasing")
        else:
            _num(ex.get("max_points", 100), "exhaustion.max_points", positive=True, integer=True)
            _num(ex.get("growth", 4), "exhaustion.growth", positive=True, integer=True)
        _num(ex.get("radius", 1.0), "exhaustion.radius", positive=True)
        if not isinstance(self.function, dict) or "family" not in self.function:
            raise ConfigError("function needs a 'family'")
        fams = set(fam.FAMILIES) | {"samples"}
        if self.function["family"] not in fams:
            raise ConfigError(f"unknown function family {self.function['family']!r}")

    # -- builders --------------------------------------------------------------

    def build_space(self):
        try:
            return NormedSpace.from_dict(self.space)
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad space descriptor: {e}") from None

    def build_measure(self):
        m = self.measure
        if m is None:
            return None
        dens = m.get("density")
        try:
            if "points" in m:
                w = np.asarray(m["weights"], dtype=float)
                if np.any(w < 0):
                    raise ConfigError("measure weights must be nonnegative")
                return WeightedMeasure(m["points"], w)
            density = None
            if dens is not None:
                coef = np.asarray(dens.get("linear", [0.0] * len(m["lows"])), dtype=float)
                c0 = float(dens.get("constant", 1.0))
                # affine density c0 + coef . x, required positive on the box
                corners = np.array(np.meshgrid(*zip(m["lows"], m["highs"]), indexing="ij")).reshape(len(coef), -1).T
                if np.any(c0 + corners @ coef <= 0):
                    raise ConfigError("measure density must be positive (negative weight)")
                density = lambda x, c0=c0, coef=coef: c0 + x @ coef
            counts = m["counts"]
            if any(int(c) < 1 for c in np.atleast_1d(counts)):
                raise ConfigError("measure counts must be positive")
            return WeightedMeasure.uniform_grid(m["lows"], m["highs"], counts, density)
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad measure descriptor: {e}") from None

    def build_function(self, space=None):
        space = space or self.build_space()
        d = dict(self.function)
        name = d.pop("family")
        try:
            if name == "samples":
                path = Path(self.base_dir) / d["path"]
                return fam.from_samples(FiniteSampleFunction.from_csv(path.read_text(), space))
            return fam.FAMILIES[name](space, **d)
        except (KeyError, TypeError, ValueError, OSError) as e:
            raise ConfigError(f"bad function descriptor: {e}") from None

    def build_exhaustion(self, space=None):
        space = space or self.build_space()
        ex = self.exhaustion
        if "counts" in ex:
            counts = [int(c) for c in ex["counts"]]
        else:
            cap, step = int(ex.get("max_points", 100)), int(ex.get("growth", 4))
            counts = [min(cap, step * n) for n in range(1, self.N + 1)]
        if "points" in ex:
            return CompactExhaustion(np.asarray(ex["points"], float), counts)
        return CompactExhaustion.ball_samples(space, float(ex.get("radius", 1.0)), counts, self.seed, ex.get("center"))


def load_config(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    return ExperimentConfig.from_json(text, base_dir=p.parent)


def default_config():
    return ExperimentConfig.from_dict({})
