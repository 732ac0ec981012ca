"""Invariant suites run by ``liplab verify`` (and reused by the tests).

Each suite takes a seeded generator plus instance sizes and returns a
:class:`SuiteResult` with a count of checked instances and the first few
failures, described in words.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import fields as fam
from .lipschitz import FiniteSampleFunction, pairwise_quotients, plateau_extend
from .map_operator import (
    BoundedSeq,
    abs_diff_le,
    net_amplification_certificate,
    partition_for_diameter,
)
from .mollify import mollify, slope_bullet_check
from .normed_space import NormedSpace
from .pipeline import CompactExhaustion, run_pipeline
from .sobolev_bv import WeightedMeasure, sobolev_density_check

__all__ = [
    "SuiteResult",
    "random_space",
    "random_mapop_instance",
    "random_net_instance",
    "SUITES",
    "run_suites",
]


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self):
        return not self.failures

    def fail(self, msg):
        if len(self.failures) < 10:
            self.failures.append(msg)


# -- instance generators -------------------------------------------------------


def random_space(rng, max_dim=3):
    d = int(rng.integers(1, max_dim + 1))
    kind = rng.integers(3)
    if kind == 0:
        return NormedSpace.lp(d, float(rng.choice([1.0, 1.5, 2.0, 3.0, np.inf])))
    if kind == 1:
        return NormedSpace.weighted_lp(rng.uniform(0.5, 2.0, d), float(rng.choice([1.0, 2.0, np.inf])))
    # symmetric polyhedral norm: +-rows of a full-rank matrix
    A = rng.normal(size=(d + int(rng.integers(0, 3)), d))
    while np.linalg.matrix_rank(A) < d:
        A = rng.normal(size=A.shape)
    return NormedSpace.polyhedral(np.vstack([A, -A]))


def random_mapop_instance(rng, max_vectors=5, max_labels=10_000):
    """``(vectors, eps)``: up to ``max_vectors`` sequences over a random label set."""
    n = int(rng.integers(1, max_vectors + 1))
    m = int(rng.integers(1, max_labels + 1))
    scale = 10.0 ** rng.uniform(-2, 2)
    vals = rng.normal(scale=scale, size=(n, m))
    if rng.random() < 0.3:  # coarse values: many exact ties and cell boundaries
        vals = np.round(vals * 4) / 4
    eps = float(scale * 10.0 ** rng.uniform(-2, 0.5))
    labels = tuple(range(m))
    return [BoundedSeq(labels, v) for v in vals], eps


def random_net_instance(rng, eps=0.1, max_centres=20, max_labels=2000, per_centre=5):
    """``(K, F)`` with ``F`` an eps-net of ``K`` in the sup metric.

    ``K`` consists of the centres ``F`` and perturbations of them by less than
    ``eps`` in every coordinate.
    """
    c = int(rng.integers(1, max_centres + 1))
    m = int(rng.integers(1, max_labels + 1))
    Fv = rng.uniform(-1, 1, (c, m)) * rng.uniform(0.1, 10)
    pert = rng.uniform(-0.999, 0.999, (c, per_centre, m)) * eps
    Kv = np.vstack([Fv, (Fv[:, None, :] + pert).reshape(-1, m)])
    labels = tuple(range(m))
    seq = lambda arr: [BoundedSeq(labels, v) for v in arr]
    return seq(Kv), seq(Fv)


# -- suites --------------------------------------------------------------------


def suite_normed_space(rng, cfg):
    res = SuiteResult("normed_space")
    for _ in range(int(cfg.get("instances", 20))):
        sp = random_space(rng)
        v = rng.normal(size=(50, sp.dim))
        u = rng.normal(size=(50, sp.dim))
        w = rng.normal(size=(50, sp.dim))
        nv, nu = sp.norm(v), sp.norm(u)
        if np.any(sp.norm(v + u) > (nv + nu) * (1 + 1e-12)):
            res.fail(f"{sp!r}: triangle inequality")
        if np.any(np.abs(sp.norm(-2.5 * v) - 2.5 * nv) > 1e-12 * nv):
            res.fail(f"{sp!r}: homogeneity")
        dn = sp.dual_norm(w)
        if np.any(np.abs((w * v).sum(1)) > dn * nv * (1 + 1e-9)):
            res.fail(f"{sp!r}: |w.v| exceeds ||w||_* ||v||")
        x = sp.dual_norm_witness(w)
        if np.any(np.abs(sp.norm(x) - 1) > 1e-9) or np.any(np.abs((w * x).sum(1) - dn) > 1e-9 * (1 + dn)):
            res.fail(f"{sp!r}: dual witness does not attain the dual norm")
        res.checked += 1
    return res


def suite_map_operator(rng, cfg):
    res = SuiteResult("map_operator")
    for i in range(int(cfg.get("mapop_instances", 200))):
        vecs, eps = random_mapop_instance(rng, int(cfg.get("max_vectors", 5)), int(cfg.get("max_labels", 10_000)))
        op = partition_for_diameter(vecs, eps)
        A = np.vstack([v.values for v in vecs])
        P = op.apply_values(A)
        if not np.all(abs_diff_le(P, A, eps)):
            res.fail(f"instance {i}: ||p(a) - a|| > eps")
        if not np.array_equal(op.apply_values(P), P):
            res.fail(f"instance {i}: not idempotent")
        # linearity is exact: gathering commutes with any linear combination
        a, b = A[0], A[-1]
        if not np.array_equal(op.apply_values(2.0 * a - b), 2.0 * op.apply_values(a) - op.apply_values(b)):
            res.fail(f"instance {i}: not linear")
        one = np.ones(A.shape[1])
        if not np.array_equal(op.apply_values(one), one):
            res.fail(f"instance {i}: constants not fixed")
        if op.rank != len(np.unique(op.block_of)):
            res.fail(f"instance {i}: rank mismatch")
        res.checked += 1
    return res


def suite_amplification(rng, cfg):
    res = SuiteResult("amplification")
    eps = float(cfg.get("eps", 0.1))
    for i in range(int(cfg.get("mapop_instances", 200))):
        K, F = random_net_instance(rng, eps, max_labels=min(2000, int(cfg.get("max_labels", 2000))))
        op = partition_for_diameter(F, eps)
        cert = net_amplification_certificate(K, F, op, eps)
        if not cert.passed:
            res.fail(f"instance {i}: ratio {cert.worst_ratio:.6g} > 3")
        res.checked += 1
    return res


def suite_plateau(rng, cfg):
    res = SuiteResult("plateau")
    pairs = int(cfg.get("pairs", 2000))
    for i in range(int(cfg.get("instances", 20))):
        sp = random_space(rng)
        m = int(rng.integers(1, 30))
        pts = rng.uniform(-1, 1, (m, sp.dim))
        pts = np.unique(pts, axis=0)
        vals = rng.uniform(-1, 1, len(pts))
        base = FiniteSampleFunction(sp, pts, vals)
        eps = float(rng.uniform(0.05, 1.0))
        ext = plateau_extend(base, eps)
        L = ext.slope - eps if len(pts) > 1 else 0.0
        if np.max(np.abs(ext(pts) - vals)) > 1e-12:
            res.fail(f"instance {i}: extension does not reproduce the data")
        y = rng.uniform(-1.5, 1.5, (2 * int(np.sqrt(pairs)) + 2, sp.dim))
        q = pairwise_quotients(sp, y, ext(y))
        if q > L + eps + 1e-9:
            res.fail(f"instance {i}: sampled Lipschitz {q:.6g} > {L + eps:.6g}")
        near = pts[:, None, :] + min(ext.radius / 2, 1.0) * sp.sample_ball(np.zeros(sp.dim), 1.0, 8, rng)[None]
        if np.max(np.abs(ext(near.reshape(-1, sp.dim)) - np.repeat(vals, 8))) > 1e-12:
            res.fail(f"instance {i}: not constant near the data")
        res.checked += 1
    return res


def suite_mollify(rng, cfg):
    res = SuiteResult("mollify")
    for sp in (NormedSpace.lp(1, 2.0), NormedSpace.lp(2, np.inf), NormedSpace.lp(2, 1.0)):
        for eps in (0.2, 0.05):
            for f in (fam.affine(sp, rng.normal(size=sp.dim)), fam.kink(sp, np.zeros(sp.dim))):
                sf = mollify(f, eps)
                x = rng.uniform(-0.5, 0.5, (40, sp.dim))
                v = sf(x)
                lo, hi = f.bounds
                if np.any(v < lo) or np.any(v > hi):
                    res.fail(f"{f.name} eps={eps} {sp!r}: range not preserved")
                if np.max(np.abs(v - f(x))) > f.lip * eps + 1e-12:
                    res.fail(f"{f.name} eps={eps} {sp!r}: |f_eps - f| > Lip eps")
                cert = slope_bullet_check(sf, x[:10], samples=64, seed=int(rng.integers(2**31)))
                if not cert.passed:
                    res.fail(f"{f.name} eps={eps} {sp!r}: slope bullet")
                res.checked += 1
    return res


def suite_pipeline(rng, cfg):
    res = SuiteResult("pipeline")
    sp = NormedSpace.lp(2, np.inf)
    seed = int(rng.integers(2**31))
    E = CompactExhaustion.ball_samples(sp, 1.0, [4, 8, 12, 16], seed)
    for f in (fam.affine(sp, [0.5, -0.25]), fam.norm_cone(sp)):
        _, cert = run_pipeline(sp, f, E, 0.5, 4, seed=seed, sample_points=E.union[:16])
        if not cert.passed:
            res.fail(f"{f.name}: " + "; ".join(cert.failures()[:3]))
        res.checked += 1
    return res


def suite_sobolev(rng, cfg):
    res = SuiteResult("sobolev_bv")
    sp = NormedSpace.lp(1, 2.0)
    mu = WeightedMeasure.uniform_grid([0.0], [1.0], [200])
    f = fam.kink(sp, [0.5])
    for p in (1.0, 2.0):
        rep = sobolev_density_check(f, mu, p, space=sp, N=32, eps=0.5, seed=int(rng.integers(2**31)))
        if not rep.passed:
            bad = [k for k, ok in rep.checks.items() if not ok]
            res.fail(f"|x - 1/2|, p={p}: {', '.join(bad)}")
        res.checked += 1
    return res


SUITES = {
    "normed_space": suite_normed_space,
    "map_operator": suite_map_operator,
    "amplification": suite_amplification,
    "plateau": suite_plateau,
    "mollify": suite_mollify,
    "pipeline": suite_pipeline,
    "sobolev_bv": suite_sobolev,
}


def run_suites(seed=0, sizes=None, names=None):
    """Run the named suites (default: all) with independent seeded streams."""
    sizes = dict(sizes or {})
    out = []
    for k, name in enumerate(names or SUITES):
        t0 = time.perf_counter()
        r = SUITES[name](np.random.default_rng([seed, k]), sizes)
        r.seconds = time.perf_counter() - t0
        out.append(r)
    return out
