"""Energy density of smooth cylindrical functions in Sobolev and BV spaces.

A weighted domain is a finite measure ``mu`` given by atoms and weights (a
midpoint quadrature of a density, typically). The checks run the
approximation pipeline and perform the diagonal selection of the density
proof: for each ``n`` pick the first ``k >= n`` with

    ||f_k - g_n||_{L^p} <= 1/n   and   ||d f_k||_{L^p} <= ||lip_a(g_n)||_{L^p} + 1/n,

where ``g_n`` is a Lipschitz approximant of ``f`` (``f`` itself when ``f`` is
Lipschitz, a ramp when ``f`` is a jump function). Targets are only ever
closed-form: dual norms of analytic gradients, classical 1-D variation and
anisotropic polygon perimeters.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .lipschitz import ScalarField
from .pipeline import CompactExhaustion, Pipeline, _fmt, _jsonable

__all__ = [
    "WeightedMeasure",
    "EnergyReport",
    "lp_norm",
    "relaxed_slope_oracle",
    "sobolev_density_check",
    "bv_density_check",
    "lp_strong_density_check",
    "pointwise_variation",
    "jump_oracle",
    "anisotropic_perimeter",
    "boundary_integral",
    "weak_panel",
    "PANEL_VERSION",
    "exhaustion_from_measure",
]

PANEL_VERSION = "1"


@dataclass(frozen=True, eq=False)
class WeightedMeasure:
    """Atoms with nonnegative weights; ``density`` (optional) is the continuum density."""

    points: np.ndarray
    weights: np.ndarray
    density: object = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(w) != len(pts) or len(w) == 0:
            raise ValueError("one weight per atom is required")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform_grid(cls, lows, highs, counts, density=None):
        """Midpoint rule on a box; ``density`` maps ``(n, d)`` points to ``(n,)``."""
        lows, highs = np.atleast_1d(lows).astype(float), np.atleast_1d(highs).astype(float)
        counts = np.broadcast_to(np.atleast_1d(counts), lows.shape).astype(int)
        axes = [lo + (np.arange(c) + 0.5) * (hi - lo) / c for lo, hi, c in zip(lows, highs, counts)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lows))
        cell = float(np.prod((highs - lows) / counts))
        w = np.full(len(pts), cell)
        if density is not None:
            w = w * np.asarray(density(pts), dtype=float)
        return cls(pts, w, density)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def density_at(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.density is None:
            return np.ones(len(x))
        return np.asarray(self.density(x), dtype=float)

    def integrate(self, values):
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))


MONOTONE_SLACK = 1e-3


def _values(g, mu):
    if callable(g):
        return np.asarray(g(mu.points), dtype=float)
    v = np.asarray(g, dtype=float).reshape(-1)
    if len(v) != len(mu.weights):
        raise ValueError("sampled values do not match the atoms")
    return v


def lp_norm(g, mu, p):
    """``(sum_i w_i |g(x_i)|^p)^(1/p)``; ``g`` is callable or sampled on the atoms."""
    if not p >= 1 or math.isinf(p):
        raise ValueError("p must lie in [1, inf)")
    v = np.abs(_values(g, mu))
    return float(np.dot(mu.weights, v**p) ** (1.0 / p))


def relaxed_slope_oracle(f, space=None):
    """``x -> ||grad f(x)||_*``, the minimal relaxed slope of a smooth ``f``."""
    if not f.has_gradient:
        raise ValueError("the oracle needs an analytic gradient")
    space = f.space if space is None else space
    return ScalarField(space, lambda x: space.dual_norm(f.gradient(x)), name="relaxed_slope")


# -- closed-form variation oracles ------------------------------------------


def pointwise_variation(values):
    """Classical variation ``sum |v_{i+1} - v_i|`` along an ordered partition."""
    return float(np.abs(np.diff(np.asarray(values, dtype=float))).sum())


def jump_oracle(jumps, density=None):
    """``|Df|`` for a 1-D step function: atoms ``|size| * density(loc)`` at the jumps.

    Returns ``(total, integrate)`` where ``integrate(phi)`` is ``int phi d|Df|``.
    """
    locs = np.array([[float(a)] for a, _ in jumps]).reshape(-1, 1)
    sizes = np.abs([float(s) for _, s in jumps])
    dens = np.ones(len(locs)) if density is None else np.asarray(density(locs), dtype=float)
    mass = sizes * dens

    def integrate(phi):
        return float(np.dot(mass, phi(locs)))

    return float(mass.sum()), integrate


def _edges(vertices):
    v = np.asarray(vertices, dtype=float)
    return v, np.roll(v, -1, axis=0) - v


def anisotropic_perimeter(space, vertices, density=None, order=16):
    """``int_{dP} rho ||nu||_* ds`` for a polygon (vertices in order)."""
    return boundary_integral(space, vertices, lambda x: np.ones(len(x)), density, order)


def boundary_integral(space, vertices, phi, density=None, order=16):
    """``int_{dP} phi rho ||nu||_* ds``: the test-function pairing with ``|D 1_P|``."""
    v, e = _edges(vertices)
    t, w = np.polynomial.legendre.leggauss(order)
    t, w = 0.5 * (t + 1), 0.5 * w
    total = 0.0
    for a, edge in zip(v, e):
        # rotated edge vector: Euclidean normal scaled by the edge length
        normal = np.array([edge[1], -edge[0]])
        pts = a + t[:, None] * edge
        rho = np.ones(len(pts)) if density is None else np.asarray(density(pts), dtype=float)
        total += float(space.dual_norm(normal)) * float(np.dot(w, phi(pts) * rho))
    return total


def weak_panel(dim):
    """Fixed bounded continuous test functions: monomials and cosines up to order 4."""
    panel = [("1", lambda x: np.ones(len(x)))]
    for j in range(dim):
        tag = "x" if dim == 1 else f"x{j + 1}"
        for k in range(1, 5):
            panel.append((f"{tag}^{k}", lambda x, j=j, k=k: x[:, j] ** k))
        for k in range(1, 5):
            panel.append((f"cos({k}pi {tag})", lambda x, j=j, k=k: np.cos(k * np.pi * x[:, j])))
    return panel


# -- reports ------------------------------------------------------------------


@dataclass
class EnergyReport:
    kind: str
    p: float
    oracle: float
    tolerance: float
    window: int
    rows: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(self.checks) and all(self.checks.values())

    @property
    def final(self):
        return self.rows[-1]

    def final_window(self):
        return self.rows[-self.window :]

    def to_dict(self):
        return {
            "kind": self.kind,
            "p": self.p,
            "oracle": self.oracle,
            "tolerance": self.tolerance,
            "window": self.window,
            "checks": self.checks,
            "passed": self.passed,
            "panel_version": PANEL_VERSION if self.kind == "bv" else None,
            "rows": self.rows,
        }

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=1, sort_keys=True)

    HEAD = ("n", "lp_distance", "energy", "oracle", "slack", "pass")

    def to_csv(self):
        extra = sorted({k for r in self.rows for k in r} - set(self.HEAD))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.HEAD) + extra)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in list(self.HEAD) + extra])
        return buf.getvalue()


def exhaustion_from_measure(mu, N, seed=0, cap=128):
    """Nested random subsets of the atoms with ``min(cap, 2^n)`` points."""
    rng = np.random.default_rng(seed)
    m = min(cap, len(mu.points))
    pts = mu.points[rng.permutation(len(mu.points))[:m]]
    return CompactExhaustion(pts, tuple(min(m, 2**n) for n in range(1, N + 1)))


def _make_pipeline(f, mu, space, N, eps, mode, seed, **kw):
    E = exhaustion_from_measure(mu, N, seed)
    return Pipeline(space, f, E, eps, N, mode, seed=seed, **kw)


class _StageCache:
    """Values and differential dual norms of ``f_k`` on the atoms, per ``k``."""

    def __init__(self, pipe, mu):
        self.pipe, self.mu, self._c = pipe, mu, {}

    def __call__(self, k):
        if k not in self._c:
            cf = self.pipe.cylinder(k)
            C = self.mu.points @ cf.projection.T
            v, g = cf.inner.value_and_gradient(C)
            self._c[k] = (v, self.pipe.space.dual_norm(g @ cf.projection))
        return self._c[k]


def _diagonal(cache, n, N, target_vals, target_energy, mu, p):
    """Smallest ``k`` in ``[n, N]`` meeting both selection inequalities (else ``N``)."""
    for k in range(n, N + 1):
        v, s = cache(k)
        if lp_norm(v - target_vals, mu, p) <= 1.0 / n and lp_norm(s, mu, p) <= target_energy + 1.0 / n:
            return k, True
    return N, False


def sobolev_density_check(f, mu, p, pipeline=None, space=None, N=32, eps=0.5, mode="faithful",
                          seed=0, tol=0.02, lp_tol=0.01, slope_tol=0.15, window=3, indices=None, **pipe_kw):
    """Energy density for a bounded Lipschitz ``f`` with analytic gradient.

    Reports per ``n`` the selected ``k(n)``, ``||f_k - f||_{L^p}``, the energy
    ``|| ||d f_k||_* ||_{L^p}``, the oracle ``|| |Df| ||_{L^p}`` and the distance
    ``|| ||d f_k||_* - |Df| ||_{L^p}``. The final window must satisfy
    ``|energy - oracle| <= tol * oracle`` and ``lp_distance <= lp_tol``; the
    slope distance must be nonincreasing there and end below ``slope_tol``.
    """
    space = f.space if space is None else space
    pipe = pipeline or _make_pipeline(f, mu, space, N, eps, mode, seed, **pipe_kw)
    N = pipe.N
    G = relaxed_slope_oracle(f, space)(mu.points)
    fv = f(mu.points)
    oracle = lp_norm(G, mu, p)
    cache = _StageCache(pipe, mu)
    rep = EnergyReport("sobolev", float(p), oracle, tol, window)
    for n in indices or range(1, N + 1):
        # f is Lipschitz: its own approximant g_n = f, with lip_a(g_n) = |Df|
        k, hit = _diagonal(cache, n, N, fv, oracle, mu, p)
        v, s = cache(k)
        energy = lp_norm(s, mu, p)
        dist = lp_norm(v - fv, mu, p)
        rep.rows.append({
            "n": n, "k": k, "selected": hit, "lp_distance": dist, "energy": energy,
            "oracle": oracle, "slack": tol * oracle, "slope_distance": lp_norm(s - G, mu, p),
            "pass": abs(energy - oracle) <= tol * oracle and dist <= lp_tol,
        })
    fin = rep.final_window()
    rep.checks = {
        "energy_final_window": all(abs(r["energy"] - oracle) <= tol * oracle for r in fin),
        "lp_final_window": all(r["lp_distance"] <= lp_tol for r in fin),
        "lower_semicontinuity": all(r["energy"] >= oracle - tol * oracle for r in fin),
        # energies converge to the oracle norm, so the slopes converge in L^p
        # (nonincreasing up to quadrature noise)
        "slope_convergence": fin[-1]["slope_distance"] <= slope_tol
        and all(b["slope_distance"] <= a["slope_distance"] + MONOTONE_SLACK * max(oracle, 1.0)
                for a, b in zip(fin, fin[1:])),
    }
    return rep


def bv_density_check(f, mu, ramp, oracle_total, oracle_integrate, space=None, M=8, N=16,
                     eps=0.5, mode="faithful", seed=0, tol=0.02, weak_tol=0.05, l1_tol=0.05,
                     window=3, **pipe_kw):
    """Total-variation density for a BV ``f`` through Lipschitz ramps.

    ``ramp(m)`` returns the m-th Lipschitz pre-approximation (a ScalarField
    with analytic gradient) for ``m = 1..M``. Each ramp is pushed through the
    pipeline and diagonalized as in the Sobolev check with ``p = 1``. The
    measures ``nu_m = ||d f_{k(m)}||_* mu`` are compared with ``|Df|`` on the
    fixed test panel.
    """
    space = f.space if space is None else space
    fv = f(mu.points)
    panel = weak_panel(mu.dim)
    targets = np.array([oracle_integrate(phi) for _, phi in panel])
    phis = np.array([phi(mu.points) for _, phi in panel])
    rep = EnergyReport("bv", 1.0, float(oracle_total), tol, window)
    for m in range(1, M + 1):
        g = ramp(m)
        pipe = _make_pipeline(g, mu, space, N, eps, mode, seed, **pipe_kw)
        cache = _StageCache(pipe, mu)
        gv = g(mu.points)
        g_energy = lp_norm(relaxed_slope_oracle(g, space)(mu.points), mu, 1)
        k, hit = _diagonal(cache, min(m, N), N, gv, g_energy, mu, 1)
        v, s = cache(k)
        nu = mu.weights * s
        energy = lp_norm(s, mu, 1)
        disc = np.abs(phis @ nu - targets)
        rep.rows.append({
            "n": m, "k": k, "selected": hit, "lp_distance": lp_norm(v - fv, mu, 1),
            "energy": energy, "oracle": float(oracle_total), "slack": tol * oracle_total,
            "nu_mass": float(nu.sum()), "ramp_energy": g_energy, "lip": g.lip,
            "discrepancy": float(disc.max()), "worst_test": panel[int(disc.argmax())][0],
            "pass": abs(energy - oracle_total) <= tol * oracle_total,
        })
    fin = rep.final_window()
    discs = [r["discrepancy"] for r in fin]
    rep.checks = {
        "energy_final": abs(rep.final["energy"] - oracle_total) <= tol * oracle_total,
        "l1_final": rep.final["lp_distance"] <= l1_tol,
        "weak_final": rep.final["discrepancy"] <= weak_tol * oracle_total,
        "mass_consistency": all(abs(r["nu_mass"] - r["energy"]) <= 1e-12 * max(1.0, r["energy"]) for r in rep.rows),
        "weak_monotone": all(b <= a + 0.01 * oracle_total for a, b in zip(discs, discs[1:])),
    }
    return rep


def lp_strong_density_check(f, mu, p, pipeline=None, space=None, N=32, eps=0.5, mode="faithful",
                            seed=0, rel_tol=0.01, indices=None, **pipe_kw):
    """``||f_n - f||_{L^p(mu)}`` along ``n``; the final error must be below ``rel_tol * ||f||``."""
    space = f.space if space is None else space
    pipe = pipeline or _make_pipeline(f, mu, space, N, eps, mode, seed, **pipe_kw)
    fv = f(mu.points)
    ref = lp_norm(fv, mu, p)
    rep = EnergyReport("lp", float(p), ref, rel_tol, 1)
    for n in indices or range(1, pipe.N + 1):
        v = pipe.cylinder(n)(mu.points)
        d = lp_norm(v - fv, mu, p)
        rel = d / ref if ref > 0 else d
        rep.rows.append({
            "n": n, "lp_distance": d, "relative": rel, "energy": None, "oracle": ref,
            "slack": rel_tol * ref, "pass": rel <= rel_tol,
        })
    rep.checks = {"final_relative_error": rep.final["relative"] <= rel_tol}
    return rep
