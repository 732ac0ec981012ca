"""Smooth cylindrical approximation of a bounded Lipschitz function, with certificates.

For each index ``n`` the construction is

1. embed the space into ``l_inf(F)`` through a dual-sphere net ``F``;
2. extend ``f`` (pulled back to the embedded copy) to a Lipschitz ``f_bar`` on
   ``l_inf(F)``;
3. build the partition operator ``p_n`` on the embedded compact ``K_n`` with
   tolerance ``1/n``; its restriction to the embedded space is ``x -> R_n x``
   where ``R_n`` replaces every functional by its block representative;
4. mollify ``f_bar`` restricted to the (at most ``dim``-dimensional) image
   ``W_n`` of ``R_n``, whose norm is the sup norm of ``R_n`` coordinates;
5. return ``f_n = g_n o P_n`` with ``P_n`` the coordinate map onto ``W_n``.

Certificate rows witness, per index and sample point: the range, the
Lipschitz bound ``Lip(f_n) <= Lip(f) + eps``, the pointwise estimate
``|f_k(x) - f(x)| <= (Lip(f_bar) + 1)/k`` for ``x`` in ``K_k`` and the slope
bound ``||d_x f_n||_* <= Lip(f_bar; B_{2/n}(x))``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .lipschitz import FiniteSampleFunction, ScalarField, plateau_extend
from .map_operator import partition_for_diameter
from .mollify import SmoothedField, mollify
from .normed_space import NormedSpace, dual_sphere_net, embed

__all__ = [
    "CylinderFunction",
    "CompactExhaustion",
    "ApproxCertificate",
    "Pipeline",
    "Stage",
    "run_pipeline",
    "cyl_eval",
    "cyl_differential",
    "thread_cap",
]

FLOAT_SLACK = 1e-12
EXACT_KINDS = ("polyhedral",)


def thread_cap():
    try:
        return max(1, int(os.environ.get("LIPLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class CylinderFunction:
    """``x -> g(P x)`` with ``P`` a ``(k, dim)`` matrix and ``g`` smooth on ``R^k``."""

    projection: np.ndarray
    inner: object
    ambient: NormedSpace

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.projection, dtype=float))
        if P.shape[1] != self.ambient.dim:
            raise ValueError("projection does not act on the ambient space")
        object.__setattr__(self, "projection", P)

    def __call__(self, x):
        x = self.ambient._check(x)
        return self.inner(x @ self.projection.T)

    def differential(self, x):
        """``P^T grad g(P x)``, batched."""
        x = self.ambient._check(x)
        return self.inner.gradient(x @ self.projection.T) @ self.projection


def cyl_eval(cf, x):
    return cf(x)


def cyl_differential(cf, x):
    """Differential at ``x`` and its dual norm."""
    w = cf.differential(x)
    return w, cf.ambient.dual_norm(w)


@dataclass(frozen=True, eq=False)
class CompactExhaustion:
    """Nested finite samples ``K_1 <= K_2 <= ...`` given as prefixes of one array."""

    points: np.ndarray
    counts: tuple

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        counts = tuple(int(c) for c in self.counts)
        if not counts or counts[0] < 1:
            raise ValueError("the exhaustion needs a nonempty first level")
        if any(b < a for a, b in zip(counts, counts[1:])) or counts[-1] > len(pts):
            raise ValueError("level sizes must be nondecreasing and within the sample")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def ball_samples(cls, space, radius, counts, seed=0, center=None):
        rng = np.random.default_rng(seed)
        c = np.zeros(space.dim) if center is None else np.asarray(center, float)
        return cls(space.sample_ball(c, radius, max(counts), rng), tuple(counts))

    @classmethod
    def from_levels(cls, levels):
        """Build from explicit nested levels (checked as sets)."""
        levels = [np.atleast_2d(np.asarray(l, dtype=float)) for l in levels]
        pts = levels[0]
        for prev, nxt in zip(levels, levels[1:]):
            for row in prev:
                if not np.any(np.all(nxt == row, axis=1)):
                    raise ValueError("levels are not nested")
            new = [r for r in nxt if not np.any(np.all(pts == r, axis=1))]
            if new:
                pts = np.vstack([pts, new])
        counts = []
        for l in levels:
            counts.append(len(np.unique(l, axis=0)))
        return cls(pts, tuple(counts))

    def level(self, n):
        """``K_n`` (1-based); indices beyond the list repeat the last level."""
        if n < 1:
            raise ValueError("levels are indexed from 1")
        return self.points[: self.counts[min(n, len(self.counts)) - 1]]

    def level_size(self, n):
        return self.counts[min(n, len(self.counts)) - 1]

    @property
    def union(self):
        return self.points[: self.counts[-1]]


def _rank_basis(R, tol=1e-10):
    """``V`` with orthonormal columns spanning the row space of ``R``."""
    d = R.shape[1]
    s = np.linalg.svd(R, compute_uv=False)
    r = int((s > tol * max(s.max(), 1.0)).sum())
    if r == d:
        return np.eye(d)
    vt = np.linalg.svd(R)[2]
    return vt[:r].T


@dataclass(frozen=True, eq=False)
class Stage:
    n: int
    operator: object
    reps: np.ndarray  # (m, dim) representative functional per net functional
    basis: np.ndarray  # (dim, r)
    wspace: NormedSpace
    source: ScalarField
    smooth: SmoothedField
    cylinder: CylinderFunction
    eps_moll: float
    variant: str

    @property
    def rank(self):
        return self.operator.rank


@dataclass
class ApproxCertificate:
    """Per-index, per-point records of the approximation bounds."""

    mode: str
    seed: int
    L: float
    eps: float
    L_bar: float
    delta: float
    rows: list = field(default_factory=list)
    stages: list = field(default_factory=list)

    @property
    def passed(self):
        return all(r["ok"] for r in self.rows) and all(s["lip_ok"] for s in self.stages)

    def failures(self):
        out = []
        for s in self.stages:
            if not s["lip_ok"]:
                out.append(f"n={s['n']}: Lip(f_n) estimate {s['lip_estimate']:.6g} > bound {s['lip_bound']:.6g}")
        for r in self.rows:
            if not r["ok"]:
                what = [k for k in ("error_ok", "slope_ok", "range_ok") if not r[k]]
                out.append(f"n={r['n']} point={r['point']}: {', '.join(what)} violated")
        return out

    def slack_items(self):
        return {
            "delta": self.L * self.delta / (1 - self.delta) if self.delta < 1 else math.inf,
            "tau_q": max((s["tau_q"] for s in self.stages), default=0.0),
            "sampling": 0.0,
            "float": FLOAT_SLACK,
        }

    def to_dict(self):
        return {
            "mode": self.mode,
            "seed": self.seed,
            "lip_f": self.L,
            "eps": self.eps,
            "lip_f_bar": self.L_bar,
            "net_distortion": self.delta,
            "slack": self.slack_items(),
            "passed": self.passed,
            "stages": self.stages,
            "rows": self.rows,
        }

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=1, sort_keys=True)

    CSV_COLUMNS = (
        "n", "point", "in_K", "f_n", "f", "error", "bound", "error_ok",
        "slope", "slope_ref", "slope_slack", "slope_ok", "range_ok",
    )

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in self.CSV_COLUMNS])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    return o


class Pipeline:
    """Lazy per-index construction of ``f_n`` and its certificate rows.

    Parameters
    ----------
    space, f : ambient space and a ScalarField with declared ``lip`` and ``bounds``.
    exhaustion : CompactExhaustion standing for ``E = union K_n``.
    eps : Lipschitz budget, ``Lip(f_n) <= Lip(f) + eps``.
    N : largest index.
    mode : ``"faithful"`` (McShane extension) or ``"exact-contract"`` (plateau
        extension from the finite sample ``K_N``).
    grid : optional extra points added to the McShane data set.
    """

    def __init__(self, space, f, exhaustion, eps, N, mode="faithful", seed=0, grid=None,
                 nodes_per_radius=None, sample_points=None, lip_samples=64, net_delta=None,
                 max_net=100_000):
        if N < 1:
            raise ValueError("empty index range")
        if not eps > 0:
            raise ValueError("eps must be positive")
        if mode not in ("faithful", "exact-contract"):
            raise ValueError(f"unknown mode {mode!r}")
        if f.lip is None or f.bounds is None:
            raise ValueError("f needs a declared Lipschitz bound and range")
        if f.space.dim != space.dim:
            raise ValueError("field and space dimensions differ")
        self.space, self.f, self.E = space, f, exhaustion
        self.eps, self.N, self.mode, self.seed = float(eps), int(N), mode, int(seed)
        self.L = float(f.lip)
        self.lo, self.hi = (float(b) for b in f.bounds)
        self.grid = None if grid is None else np.atleast_2d(np.asarray(grid, float))
        self.nodes_per_radius = nodes_per_radius
        self.lip_samples = int(lip_samples)
        self._sample_points = sample_points
        self._net_delta, self._max_net = net_delta, max_net
        self._stages = {}

    # -- fixed ingredients ---------------------------------------------------

    @cached_property
    def net(self):
        if self._net_delta is not None:
            delta = self._net_delta
        else:
            delta = min(0.05, 0.5 * self.eps / (self.L + self.eps))
        return dual_sphere_net(self.space, delta, self._max_net)

    @property
    def delta(self):
        return float(self.net.delta)

    @cached_property
    def L_pull(self):
        """Lipschitz constant of ``f`` in the embedded sup metric."""
        return self.L / (1.0 - self.delta)

    @cached_property
    def eps_plateau(self):
        return self.eps - (self.L_pull - self.L)

    @cached_property
    def L_bar(self):
        if self.mode == "faithful":
            return self.L_pull
        return self.L_pull + self.eps_plateau

    @cached_property
    def sample_points(self):
        if self._sample_points is not None:
            return np.atleast_2d(np.asarray(self._sample_points, float))
        return self.E.union[:100]

    @cached_property
    def _partitions(self):
        out = {}
        for n in range(1, self.N + 1):
            A = embed(self.net, self.E.level(n))  # (|K_n|, m): one l_inf(F) vector per point
            out[n] = partition_for_diameter(A, 1.0 / n)
        return out

    def image_is_exact(self, n):
        """True when every block of ``p_n`` holds identical functionals."""
        F = self.net.functionals
        return bool(np.array_equal(F[self._partitions[n].gather_index()], F))

    @property
    def exact_image(self):
        return all(self.image_is_exact(n) for n in range(1, self.N + 1))

    @cached_property
    def data(self):
        pts = self.E.union
        if self.grid is not None:
            pts = np.vstack([pts, self.grid])
            pts = np.unique(pts, axis=0)
        return pts, self.f(pts)

    @cached_property
    def plateau(self):
        base = FiniteSampleFunction(NormedSpace.lp(self.net.size, math.inf), embed(self.net, self.E.union), self.f(self.E.union))
        return plateau_extend(base, self.eps_plateau, L=self.L_pull)

    def variant(self, n):
        """Which ``f_bar`` stage ``n`` mollifies.

        ``exact``: the image of ``p_n`` is the embedded space itself, where the
        continuum McShane extension of the pulled-back ``f`` equals ``f``.
        ``mcshane``: the McShane extension from the embedded data set.
        ``plateau``: the plateau extension from the embedded ``K_N``.
        """
        if self.mode == "exact-contract":
            return "plateau"
        return "exact" if self.image_is_exact(n) else "mcshane"

    def _source(self, A, wspace, variant):
        """``f_bar`` restricted to the image, in coordinates ``c`` with point ``A c``."""
        F = self.net.functionals
        lo, hi = self.lo, self.hi
        if variant == "exact":
            f = self.f

            def func(c):
                return np.clip(f(c), lo, hi)

            grad = (lambda c: f.gradient(c)) if f.has_gradient else None
            return ScalarField(wspace, func, grad, lip=self.L_pull, bounds=(lo, hi), name="f_bar")
        if variant == "plateau":
            pl = self.plateau
            return ScalarField(wspace, lambda c: pl(c @ A.T), lambda c: pl.gradient(c @ A.T) @ A,
                               lip=pl.slope, bounds=(pl.lo, pl.hi), name="f_bar")
        D, vD = self.data
        ED = embed(self.net, D)
        L = self.L_pull

        def envelope(c):
            U = c @ A.T
            out = np.empty(len(c))
            arg = np.empty(len(c), dtype=np.int64)
            step = max(1, 2_000_000 // len(ED))
            for i0 in range(0, len(c), step):
                Ub = U[i0 : i0 + step]
                dist = np.abs(Ub[:, :1] - ED[None, :, 0])
                for k in range(1, ED.shape[1]):
                    np.maximum(dist, np.abs(Ub[:, k : k + 1] - ED[None, :, k]), out=dist)
                cone = vD[None, :] + L * dist
                j = np.argmin(cone, axis=1)
                arg[i0 : i0 + step] = j
                out[i0 : i0 + step] = cone[np.arange(len(j)), j]
            return out, arg

        def func(c):
            return np.clip(envelope(c)[0], lo, hi)

        def grad(c):
            v, j = envelope(c)
            diff = c @ A.T - ED[j]
            k = np.argmax(np.abs(diff), axis=1)
            s = np.sign(diff[np.arange(len(c)), k])
            g = L * s[:, None] * A[k]
            g[(v < lo) | (v > hi)] = 0.0
            return g

        return ScalarField(wspace, func, grad, lip=L, bounds=(lo, hi), name="f_bar")

    # -- stages --------------------------------------------------------------

    def eps_moll(self, n):
        # L_bar * eps_moll <= 1/(2n): leaves room inside B_{1/n} for slope probes
        return 1.0 / (2 * n * max(self.L_bar, 1.0))

    def stage(self, n):
        if not 1 <= n <= self.N:
            raise ValueError(f"index {n} outside 1..{self.N}")
        if n in self._stages:
            return self._stages[n]
        op = self._partitions[n]
        R = self.net.functionals[op.gather_index()]
        V = _rank_basis(R)
        A = R @ V
        wspace = NormedSpace.polyhedral(A)
        variant = self.variant(n)
        src = self._source(A, wspace, variant)
        g = mollify(src, self.eps_moll(n), nodes_per_radius=self.nodes_per_radius, seed=self.seed)
        cf = CylinderFunction(V.T, g, self.space)
        st = Stage(n, op, R, V, wspace, src, g, cf, self.eps_moll(n), variant)
        self._stages[n] = st
        return st

    def cylinder(self, n):
        return self.stage(n).cylinder

    # -- certificate ---------------------------------------------------------

    def _slope_reference(self, st, c, gw, rng):
        """Sampled ``Lip(f_bar; B^W_{1/n}(c))``, a lower estimate of ``Lip(f_bar; B_{2/n}(x))``.

        Probe pairs are centred on the mollifier's own support nodes and on
        random points of ``B^W_{eps_moll}(c)``, along the steepest directions
        of ``f_bar`` there; all probe endpoints stay in ``B^W_{1/n}(c)``.
        """
        W, src = st.wspace, st.source
        r_in = st.eps_moll
        step = min(r_in / 4, 1.0 / st.n - r_in)
        z = st.smooth._nodes(c[None, :])[0]
        z = z[np.sqrt(((z - c) ** 2).sum(axis=1)) < st.smooth.kernel.rho]
        if len(z) > 96:
            z = z[rng.choice(len(z), 96, replace=False)]
        anchors = np.vstack([c[None, :], z, W.sample_ball(c, r_in, 32, rng)])
        dirs = []
        verts = W.unit_ball_vertices
        if verts is not None and len(verts) <= 64:
            dirs.append(np.broadcast_to(verts[None], (len(anchors),) + verts.shape))
        if np.any(gw):
            u = W.dual_norm_witness(gw)
            dirs.append(np.broadcast_to(u[None, None, :], (len(anchors), 1, len(u))))
        if src.has_gradient:
            ga = src.gradient(anchors)
            dirs.append(W.dual_norm_witness(ga)[:, None, :])
        D = np.concatenate(dirs, axis=1)  # (anchors, k, r)
        a = anchors[:, None, :] + 0.5 * step * D
        b = anchors[:, None, :] - 0.5 * step * D
        fa = src(a.reshape(-1, W.dim))
        fb = src(b.reshape(-1, W.dim))
        dist = W.norm((a - b).reshape(-1, W.dim))
        ok = dist > 0
        return float((np.abs(fa - fb)[ok] / dist[ok]).max()) if np.any(ok) else 0.0

    def certify(self, n):
        """Certificate rows for index ``n`` plus its stage summary."""
        st = self.stage(n)
        X = self.sample_points
        rng = np.random.default_rng([self.seed, n])
        C = X @ st.basis
        vals, gW = st.smooth.value_and_gradient(C)
        diffs = gW @ st.basis.T
        slopes = self.space.dual_norm(diffs)
        fx = self.f(X)
        K = self.E.level(n)
        bound = (self.L_bar + 1.0) / n
        tau = st.smooth.tau_q
        rows = []
        for i, x in enumerate(X):
            in_k = bool(np.any(np.all(K == x, axis=1)))
            err = abs(vals[i] - fx[i])
            ref = self._slope_reference(st, C[i], gW[i], np.random.default_rng([self.seed, n, i]))
            slope_slack = tau + FLOAT_SLACK
            rng_ok = bool(self.lo <= vals[i] <= self.hi)
            e_ok = (err <= bound + FLOAT_SLACK) if in_k else True
            s_ok = bool(slopes[i] <= ref + slope_slack)
            rows.append({
                "n": n, "point": i, "in_K": in_k, "f_n": float(vals[i]), "f": float(fx[i]),
                "error": float(err), "bound": bound if in_k else None, "error_ok": bool(e_ok),
                "slope": float(slopes[i]), "slope_ref": ref, "slope_slack": slope_slack,
                "slope_ok": s_ok, "range_ok": rng_ok, "ok": bool(e_ok and s_ok and rng_ok),
            })
        # Lip(f_n) = sup of the differential's dual norm (C^1 function on a convex set)
        lo_box = self.E.union.min(axis=0) - 1.0 / n
        hi_box = self.E.union.max(axis=0) + 1.0 / n
        extra = rng.uniform(lo_box, hi_box, (self.lip_samples, self.space.dim))
        lip_est = float(max(slopes.max(), self.space.dual_norm(st.cylinder.differential(extra)).max()))
        lip_bound = self.L + self.eps + tau + FLOAT_SLACK
        summary = {
            "n": n, "rank": st.rank, "dim_W": int(st.basis.shape[1]), "variant": st.variant,
            "eps_moll": st.eps_moll, "tau_q": tau, "lip_estimate": lip_est,
            "lip_bound": lip_bound, "lip_ok": bool(lip_est <= lip_bound),
            "error_envelope": max((r["error"] for r in rows if r["in_K"]), default=0.0),
            "error_bound": bound,
        }
        return rows, summary

    def run(self, threads=None):
        threads = thread_cap() if threads is None else threads
        cert = ApproxCertificate(self.mode, self.seed, self.L, self.eps, self.L_bar, self.delta)
        _ = self._partitions
        idx = list(range(1, self.N + 1))
        if threads > 1:
            for n in idx:
                self.stage(n)  # stage construction caches; build serially
            with ThreadPoolExecutor(threads) as ex:
                results = list(ex.map(self.certify, idx))
        else:
            results = [self.certify(n) for n in idx]
        for rows, summary in results:
            cert.rows.extend(rows)
            cert.stages.append(summary)
        return [self.stage(n).cylinder for n in idx], cert


def run_pipeline(space, f, E, eps, N, mode="faithful", **kwargs):
    """Run all indices ``1..N``; returns the cylinder functions and the certificate."""
    threads = kwargs.pop("threads", None)
    return Pipeline(space, f, E, eps, N, mode, **kwargs).run(threads)
