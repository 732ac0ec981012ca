"""Lipschitz constants, asymptotic slopes and Lipschitz extensions.

The asymptotic slope of ``f`` at ``x`` is ``inf_r Lip(f; B_r(x))``. It is
estimated by brute force over point pairs sampled in shrinking balls; the
samples are augmented with steepest-direction pairs (unit-ball vertices and
the norming direction of the gradient when one is declared), which makes the
estimate exact for affine fields.

Two extensions from a finite sample are provided. :func:`mcshane_extend` is
the classical lower envelope. :func:`plateau_extend` is an ``(L + eps)``
Lipschitz extension that is constant on a small ball around every data point,
so its asymptotic slope vanishes on the sample, as it must for an isolated
point of the domain.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .normed_space import NormedSpace

__all__ = [
    "ScalarField",
    "FiniteSampleFunction",
    "PlateauExtension",
    "SlopeEstimate",
    "lip_on_set",
    "pairwise_quotients",
    "asymptotic_slope",
    "mcshane_extend",
    "plateau_extend",
]


def _batch(x, dim):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = x.reshape(-1, dim)
    return x2, single


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real-valued function on a normed space.

    ``func`` maps an array ``(n, dim)`` to ``(n,)``; ``grad`` (optional) maps
    ``(n, dim)`` to ``(n, dim)``. ``lip`` is a declared Lipschitz bound and
    ``bounds`` a declared range ``(lo, hi)``.
    """

    space: NormedSpace
    func: Callable
    grad: Callable | None = None
    lip: float | None = None
    bounds: tuple | None = None
    name: str = ""

    def __call__(self, x):
        x2, single = _batch(x, self.space.dim)
        out = np.asarray(self.func(x2), dtype=float).reshape(len(x2))
        return out[0] if single else out

    def gradient(self, x):
        if self.grad is None:
            raise ValueError(f"field {self.name or '<anonymous>'} has no declared gradient")
        x2, single = _batch(x, self.space.dim)
        g = np.asarray(self.grad(x2), dtype=float).reshape(x2.shape)
        return g[0] if single else g

    @property
    def has_gradient(self):
        return self.grad is not None


@dataclass(frozen=True, eq=False)
class FiniteSampleFunction:
    """Values on a finite set of pairwise distinct points."""

    space: NormedSpace
    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.space.dim)
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if len(pts) != len(vals):
            raise ValueError("one value per point is required")
        if len(pts) == 0:
            raise ValueError("a sample function needs at least one point")
        pts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)

    @cached_property
    def min_separation(self):
        """Smallest pairwise distance (``inf`` for a single point)."""
        if len(self.points) < 2:
            return np.inf
        best = np.inf
        for i0 in range(0, len(self.points), 512):
            blk = self.points[i0 : i0 + 512]
            d = self.space.norm(blk[:, None, :] - self.points[None, :, :])
            rows = np.arange(len(blk))
            d[rows, i0 + rows] = np.inf
            best = min(best, float(d.min()))
        if best == 0:
            raise ValueError("sample points must be pairwise distinct")
        return best

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x_{i + 1}" for i in range(self.space.dim)] + ["value"])
        for p, v in zip(self.points, self.values):
            w.writerow([repr(float(c)) for c in p] + [repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, space):
        rows = list(csv.reader(io.StringIO(text)))
        head = [f"x_{i + 1}" for i in range(space.dim)] + ["value"]
        if not rows or rows[0] != head:
            raise ValueError(f"expected header {','.join(head)}")
        data = np.array([[float(c) for c in r] for r in rows[1:]], dtype=float)
        return cls(space, data[:, :-1], data[:, -1])


def pairwise_quotients(space, points, values, chunk=512):
    """Max of ``|f(x)-f(y)| / ||x-y||`` over distinct pairs of a finite set."""
    points = np.asarray(points, dtype=float).reshape(-1, space.dim)
    values = np.asarray(values, dtype=float).reshape(-1)
    n = len(points)
    best = 0.0
    for i0 in range(0, n, chunk):
        blk = points[i0 : i0 + chunk]
        d = space.norm(blk[:, None, :] - points[None, :, :])
        dv = np.abs(values[i0 : i0 + chunk, None] - values[None, :])
        rows = np.arange(len(blk))
        d[rows, i0 + rows] = np.inf
        if np.any(d == 0):
            raise ValueError("duplicate points: Lipschitz quotient undefined")
        best = max(best, float((dv / d).max()))
    return best


def lip_on_set(f, E=None):
    """``Lip(f; E)``, the brute-force maximum difference quotient on ``E``.

    ``f`` is a :class:`ScalarField` (then ``E`` is required) or a
    :class:`FiniteSampleFunction` (``E`` defaults to its own points).
    """
    if isinstance(f, FiniteSampleFunction):
        if E is None:
            return pairwise_quotients(f.space, f.points, f.values)
        E = np.asarray(E, dtype=float).reshape(-1, f.space.dim)
        idx = []
        for e in E:
            hit = np.flatnonzero(np.all(f.points == e, axis=1))
            if not len(hit):
                raise ValueError("evaluation point is not a sample point")
            idx.append(hit[0])
        return pairwise_quotients(f.space, E, f.values[idx])
    if E is None:
        raise ValueError("a point set is required for a ScalarField")
    E = np.asarray(E, dtype=float).reshape(-1, f.space.dim)
    if len(E) == 0:
        raise ValueError("empty point set")
    return pairwise_quotients(f.space, E, f(E))


# -- asymptotic slope ---------------------------------------------------------


@dataclass(frozen=True)
class SlopeEstimate:
    value: float
    radii: np.ndarray
    trace: np.ndarray
    seed: int


def _steep_directions(f, x):
    """Unit directions along which affine parts of ``f`` attain their slope."""
    dirs = []
    verts = f.space.unit_ball_vertices
    if verts is not None and len(verts) <= 256:
        dirs.append(verts)
    if f.has_gradient:
        g = f.gradient(x)
        if np.all(np.isfinite(g)):
            dirs.append(f.space.dual_norm_witness(g)[None, :])
    if not dirs:
        return np.empty((0, f.space.dim))
    return np.vstack(dirs)


def ball_pairs_lip(f, center, r, samples, rng, directions=None):
    """Sampled ``Lip(f; B_r(center))`` from random pairs plus steep-direction pairs."""
    space = f.space
    pts = [center[None, :], space.sample_ball(center, r, samples, rng)]
    if directions is not None and len(directions):
        # probes at half radius and near the rim, all inside the open ball
        for t in (0.5, 0.95):
            pts.append(center + t * r * directions)
            pts.append(center - t * r * directions)
    pts = np.vstack(pts)
    pts = np.unique(pts, axis=0)
    if len(pts) < 2:
        return 0.0
    return pairwise_quotients(space, pts, f(pts))


def asymptotic_slope(f, x, radii, samples_per_radius=64, seed=0):
    """Estimate ``lip_a(f)(x) = inf_r Lip(f; B_r(x))`` along a radius schedule.

    Returns a :class:`SlopeEstimate` whose ``value`` is the estimate at the
    smallest radius and whose ``trace`` holds one estimate per radius. Sampled
    estimates are lower bounds of the exact per-radius Lipschitz constants.
    """
    radii = np.asarray(radii, dtype=float).reshape(-1)
    if len(radii) == 0:
        raise ValueError("empty radius schedule")
    if np.any(radii <= 0) or np.any(np.diff(radii) >= 0):
        raise ValueError("radii must be positive and strictly decreasing")
    if samples_per_radius < 2:
        raise ValueError("need at least two samples per radius")
    x = f.space._check(x)
    if isinstance(f, FiniteSampleFunction):
        # every point of a finite set is isolated: small balls hold one point
        if not np.any(np.all(f.points == x, axis=1)):
            raise ValueError("evaluation point is not a sample point")
        return SlopeEstimate(0.0, radii, np.zeros(len(radii)), int(seed))
    rng = np.random.default_rng(seed)
    dirs = _steep_directions(f, x)
    trace = np.array([ball_pairs_lip(f, x, r, samples_per_radius, rng, dirs) for r in radii])
    return SlopeEstimate(float(trace[-1]), radii, trace, int(seed))


# -- extensions ---------------------------------------------------------------


def _as_sample(base, space=None):
    if isinstance(base, FiniteSampleFunction):
        return base
    pts, vals = base
    return FiniteSampleFunction(space, pts, vals)


def mcshane_extend(base, L=None, clamp=None, chunk=2048):
    """Lower envelope ``y -> min_x (f(x) + L ||y - x||)``, optionally clamped.

    ``L`` defaults to the brute-force constant of ``base``; a smaller ``L``
    raises ``ValueError``. ``clamp=(lo, hi)`` truncates the result, which
    keeps it ``L``-Lipschitz.
    """
    base = _as_sample(base)
    lip = lip_on_set(base)
    if L is None:
        L = lip
    if L < lip * (1 - 1e-12):
        raise ValueError(f"L={L} is below the Lipschitz constant {lip} of the base")
    space, pts, vals = base.space, base.points, base.values
    L = float(L)

    def envelope(y):
        out = np.empty(len(y))
        arg = np.empty(len(y), dtype=np.int64)
        for i0 in range(0, len(y), chunk):
            blk = y[i0 : i0 + chunk]
            d = space.norm(blk[:, None, :] - pts[None, :, :])
            cone = vals[None, :] + L * d
            # at a base point its own term wins; rounding in L * d could undercut it by an ulp
            hit = d == 0
            cone[hit.any(axis=1)] = np.inf
            cone[hit] = np.broadcast_to(vals, d.shape)[hit]
            j = np.argmin(cone, axis=1)
            arg[i0 : i0 + chunk] = j
            out[i0 : i0 + chunk] = cone[np.arange(len(blk)), j]
        return out, arg

    def func(y):
        v, _ = envelope(y)
        return v if clamp is None else np.clip(v, clamp[0], clamp[1])

    def grad(y):
        v, j = envelope(y)
        g = L * space.norm_gradient(y - pts[j])
        if clamp is not None:
            g[(v < clamp[0]) | (v > clamp[1])] = 0.0
        return g

    lo = float(vals.min()) if clamp is None else max(float(vals.min()), clamp[0])
    hi = None if clamp is None else clamp[1]
    return ScalarField(space, func, grad, lip=L, bounds=(lo, hi) if hi is not None else None, name="mcshane")


@dataclass(frozen=True, eq=False)
class PlateauExtension:
    """Clamped plateau envelope of a finite sample.

    ``y -> median(lo, min_x [f(x) + slope * max(0, ||y - x|| - radius)], hi)``
    """

    base: FiniteSampleFunction
    slope: float
    radius: float
    lo: float
    hi: float
    chunk: int = field(default=2048, repr=False)

    def _lower(self, y):
        space, pts, vals = self.base.space, self.base.points, self.base.values
        out = np.empty(len(y))
        arg = np.empty(len(y), dtype=np.int64)
        for i0 in range(0, len(y), self.chunk):
            blk = y[i0 : i0 + self.chunk]
            d = space.norm(blk[:, None, :] - pts[None, :, :])
            cone = vals[None, :] + self.slope * np.maximum(0.0, d - self.radius)
            j = np.argmin(cone, axis=1)
            arg[i0 : i0 + self.chunk] = j
            out[i0 : i0 + self.chunk] = cone[np.arange(len(blk)), j]
        return out, arg

    def lower_envelope(self, y):
        y, single = _batch(y, self.base.space.dim)
        v = self._lower(y)[0]
        return v[0] if single else v

    def upper_envelope(self, y):
        """``max_x [f(x) - slope * max(0, ||y - x|| - radius)]`` (unclamped)."""
        y, single = _batch(y, self.base.space.dim)
        space, pts, vals = self.base.space, self.base.points, self.base.values
        out = np.empty(len(y))
        for i0 in range(0, len(y), self.chunk):
            blk = y[i0 : i0 + self.chunk]
            d = space.norm(blk[:, None, :] - pts[None, :, :])
            out[i0 : i0 + self.chunk] = (vals[None, :] - self.slope * np.maximum(0.0, d - self.radius)).max(axis=1)
        return out[0] if single else out

    def __call__(self, y):
        y, single = _batch(y, self.base.space.dim)
        v = np.clip(self._lower(y)[0], self.lo, self.hi)
        return v[0] if single else v

    def gradient(self, y):
        y, single = _batch(y, self.base.space.dim)
        v, j = self._lower(y)
        diff = y - self.base.points[j]
        d = self.base.space.norm(diff)
        g = self.slope * self.base.space.norm_gradient(diff)
        g[(d <= self.radius) | (v < self.lo) | (v > self.hi)] = 0.0
        return g[0] if single else g

    def as_field(self):
        return ScalarField(
            self.base.space,
            self.__call__,
            self.gradient,
            lip=self.slope,
            bounds=(self.lo, self.hi),
            name="plateau",
        )


def plateau_extend(base, eps, L=None):
    """``(L + eps)``-Lipschitz extension, locally constant at every base point.

    With ``L = Lip(base)`` (brute force unless given), ``delta_min`` the
    smallest separation of the base, the plateau radius is
    ``r = eps * delta_min / (2 (L + eps))``. For two base points at distance
    ``d >= delta_min``, ``eps*d - 2 r (L+eps) >= 0`` is exactly the margin
    making the lower envelope dominate the upper one, so the envelope agrees
    with the data and is constant on each ``r``-ball.
    """
    base = _as_sample(base)
    if not eps > 0:
        raise ValueError("eps must be positive")
    lip = lip_on_set(base) if L is None else float(L)
    slope = lip + eps
    sep = base.min_separation
    radius = eps * sep / (2 * slope) if np.isfinite(sep) else np.inf
    return PlateauExtension(base, slope, radius, float(base.values.min()), float(base.values.max()))
