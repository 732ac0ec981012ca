"""Finite-dimensional normed spaces, their duals, and embeddings into l-infinity.

Three norm kinds are supported:

* ``lp``          -- ``||v||_p`` for ``p`` in ``[1, inf]``
* ``weighted_lp`` -- ``||w * v||_p`` with a positive weight vector ``w``
* ``polyhedral``  -- ``max_i |a_i . v|`` for a finite family of functionals
  ``a_i`` spanning the dual

A :class:`DualNet` is a finite family of norm-one functionals that recovers the
norm up to a tracked relative distortion ``delta``; :func:`embed` maps vectors
into ``l_inf(F)`` through it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

__all__ = [
    "NormedSpace",
    "DualNet",
    "DimensionError",
    "DualNormError",
    "NetBudgetError",
    "norm_eval",
    "dual_norm_eval",
    "dual_norm_witness",
    "dual_sphere_net",
    "embed",
]

KINDS = ("lp", "weighted_lp", "polyhedral")


class DimensionError(ValueError):
    pass


class DualNormError(RuntimeError):
    """The polyhedral optimizer could not certify optimality."""


class NetBudgetError(RuntimeError):
    pass


def _conjugate(p):
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def _pnorm(x, p, axis=-1):
    x = np.abs(x)
    if math.isinf(p):
        return x.max(axis=axis)
    if p == 1:
        return x.sum(axis=axis)
    # scale by the largest entry so tiny or huge vectors neither underflow nor overflow
    m = x.max(axis=axis, keepdims=True)
    m = np.where(m > 0, m, 1.0)
    return np.squeeze(m, axis=axis) * ((x / m) ** p).sum(axis=axis) ** (1.0 / p)


@dataclass(frozen=True, eq=False)
class NormedSpace:
    """A norm on ``R^dim``.

    Build instances with :meth:`lp`, :meth:`weighted_lp` or :meth:`polyhedral`
    rather than the raw constructor.
    """

    dim: int
    kind: str
    p: float = 2.0
    weights: np.ndarray | None = None
    functionals: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if int(self.dim) < 1:
            raise ValueError("dim must be a positive integer")
        if self.kind != "polyhedral" and not (self.p >= 1):
            raise ValueError("exponent p must lie in [1, inf]")
        if self.kind == "weighted_lp":
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.dim,) or not np.all(w > 0) or not np.all(np.isfinite(w)):
                raise ValueError("weights must be a positive vector of length dim")
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)
        if self.kind == "polyhedral":
            a = np.atleast_2d(np.asarray(self.functionals, dtype=float))
            if a.ndim != 2 or a.shape[1] != self.dim:
                raise ValueError("functional matrix must have shape (m, dim)")
            if np.linalg.matrix_rank(a) < self.dim:
                raise ValueError("polyhedral functionals must span the dual space")
            a.setflags(write=False)
            object.__setattr__(self, "functionals", a)

    # -- constructors -------------------------------------------------------

    @classmethod
    def lp(cls, dim, p=2.0):
        return cls(int(dim), "lp", p=float(p))

    @classmethod
    def weighted_lp(cls, weights, p=2.0):
        w = np.asarray(weights, dtype=float)
        return cls(w.size, "weighted_lp", p=float(p), weights=w)

    @classmethod
    def polyhedral(cls, functionals):
        a = np.atleast_2d(np.asarray(functionals, dtype=float))
        return cls(a.shape[1], "polyhedral", p=math.inf, functionals=a)

    # -- serialization ------------------------------------------------------

    def to_dict(self):
        d = {"kind": self.kind, "dim": self.dim}
        if self.kind != "polyhedral":
            d["p"] = "inf" if math.isinf(self.p) else float(self.p)
        if self.kind == "weighted_lp":
            d["weights"] = [float(x) for x in self.weights]
        if self.kind == "polyhedral":
            d["functionals"] = [[float(x) for x in row] for row in self.functionals]
        return d

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        p = d.get("p", 2.0)
        p = math.inf if p in ("inf", "Infinity", math.inf) else float(p)
        if kind == "lp":
            return cls.lp(int(d["dim"]), p)
        if kind == "weighted_lp":
            space = cls.weighted_lp(d["weights"], p)
            if "dim" in d and int(d["dim"]) != space.dim:
                raise ValueError("weights length does not match dim")
            return space
        if kind == "polyhedral":
            space = cls.polyhedral(d["functionals"])
            if "dim" in d and int(d["dim"]) != space.dim:
                raise ValueError("functional width does not match dim")
            return space
        raise ValueError(f"unknown norm kind {kind!r}")

    def __repr__(self):
        if self.kind == "polyhedral":
            return f"NormedSpace(polyhedral, dim={self.dim}, m={len(self.functionals)})"
        return f"NormedSpace({self.kind}, dim={self.dim}, p={self.p})"

    # -- evaluation ---------------------------------------------------------

    def _check(self, v):
        v = np.asarray(v, dtype=float)
        if v.ndim == 0 or v.shape[-1] != self.dim:
            raise DimensionError(f"expected trailing dimension {self.dim}, got shape {v.shape}")
        return v

    def norm(self, v):
        """Norm of ``v``; accepts a single vector or a batch ``(..., dim)``."""
        v = self._check(v)
        if self.kind == "lp":
            return _pnorm(v, self.p)
        if self.kind == "weighted_lp":
            return _pnorm(v * self.weights, self.p)
        return np.abs(v @ self.functionals.T).max(axis=-1)

    def dual_norm(self, w):
        """``sup { w . v : ||v|| <= 1 }``, batched over leading axes."""
        w = self._check(w)
        if self.kind == "lp":
            return _pnorm(w, _conjugate(self.p))
        if self.kind == "weighted_lp":
            return _pnorm(w / self.weights, _conjugate(self.p))
        verts = self.unit_ball_vertices
        if verts is not None:
            return (w @ verts.T).max(axis=-1)
        flat = w.reshape(-1, self.dim)
        vals = np.array([self._lp_dual(row)[0] for row in flat])
        return vals.reshape(w.shape[:-1])

    def dual_norm_witness(self, w):
        """Unit vector ``v`` with ``w . v = ||w||_*``; batched over leading axes."""
        w = self._check(w)
        flat = w.reshape(-1, self.dim)
        zero = ~np.any(flat, axis=1)
        if self.kind == "polyhedral":
            verts = self.unit_ball_vertices
            if verts is not None:
                v = verts[np.argmax(flat @ verts.T, axis=1)]
            else:
                v = np.array([self._lp_dual(row)[1] if np.any(row) else np.eye(self.dim)[0] for row in flat])
        else:
            scale = self.weights if self.kind == "weighted_lp" else np.ones(self.dim)
            u = flat / scale
            q = _conjugate(self.p)
            if math.isinf(q):
                v = np.zeros_like(u)
                i = np.argmax(np.abs(u), axis=1)
                v[np.arange(len(u)), i] = np.sign(u[np.arange(len(u)), i])
            elif q == 1:
                v = np.sign(u)
            else:
                nu = _pnorm(u, q)[:, None]
                a = np.abs(u) / np.where(nu > 0, nu, 1.0)
                v = np.sign(u) * a ** (q - 1)
            v = v / scale
        v = np.array(v, dtype=float)
        v[zero] = np.eye(self.dim)[0]
        v = v / self.norm(v)[:, None]
        return v.reshape(w.shape)

    def norm_gradient(self, v):
        """A norming functional of each ``v``: dual norm one and ``w . v = ||v||``.

        This is the gradient of the norm wherever it is differentiable; at
        ridge points one of the active functionals is returned.
        """
        v = self._check(v)
        flat = v.reshape(-1, self.dim)
        if self.kind == "polyhedral":
            s = flat @ self.functionals.T
            i = np.argmax(np.abs(s), axis=1)
            sgn = np.sign(s[np.arange(len(flat)), i])
            sgn[sgn == 0] = 1.0
            return (sgn[:, None] * self.functionals[i]).reshape(v.shape)
        w = self.weights if self.kind == "weighted_lp" else np.ones(self.dim)
        z = flat * w
        if math.isinf(self.p):
            g = np.zeros_like(z)
            i = np.argmax(np.abs(z), axis=1)
            s = np.sign(z[np.arange(len(z)), i])
            s[s == 0] = 1.0
            g[np.arange(len(z)), i] = s
        elif self.p == 1:
            g = np.sign(z)
        else:
            nz = _pnorm(z, self.p)[:, None]
            nz = np.where(nz > 0, nz, 1.0)
            g = np.sign(z) * (np.abs(z) / nz) ** (self.p - 1)
        return (g * w).reshape(v.shape)

    def _lp_dual(self, w):
        a = self.functionals
        res = linprog(
            -w,
            A_ub=np.vstack([a, -a]),
            b_ub=np.ones(2 * len(a)),
            bounds=[(None, None)] * self.dim,
            method="highs",
        )
        if res.status != 0:
            raise DualNormError(f"polyhedral dual norm LP failed: {res.message}")
        return -res.fun, np.asarray(res.x)

    # -- geometry -----------------------------------------------------------

    @cached_property
    def unit_ball_vertices(self):
        """Extreme points of the closed unit ball, or ``None`` for smooth balls."""
        d = self.dim
        if self.kind == "polyhedral":
            a = self.functionals
            if d == 1:
                r = 1.0 / np.abs(a).max()
                return np.array([[r], [-r]])
            pts = np.vstack([a, -a])
            try:
                hull = ConvexHull(pts)
            except QhullError:
                return self._enumerate_vertices()
            # facet n.x + b = 0 of conv(+-a) gives the polar vertex n / (-b)
            verts = hull.equations[:, :d] / (-hull.equations[:, d:])
            return _unique_rows(verts)
        if d == 1:
            r = 1.0 / float(self.norm(np.ones(1)))
            return np.array([[r], [-r]])
        w = self.weights if self.kind == "weighted_lp" else np.ones(d)
        if self.p == 1:
            return np.vstack([np.eye(d), -np.eye(d)]) / np.concatenate([w, w])[:, None]
        if math.isinf(self.p):
            signs = np.array(list(itertools.product((1.0, -1.0), repeat=d)))
            return signs / w
        return None

    def _enumerate_vertices(self, budget=200_000):
        a, d = self.functionals, self.dim
        if math.comb(len(a), d) * 2**d > budget:
            return None
        out = []
        for rows in itertools.combinations(range(len(a)), d):
            sub = a[list(rows)]
            if abs(np.linalg.det(sub)) < 1e-12:
                continue
            inv = np.linalg.inv(sub)
            for s in itertools.product((1.0, -1.0), repeat=d):
                v = inv @ np.array(s)
                if np.abs(a @ v).max() <= 1 + 1e-10:
                    out.append(v)
        return _unique_rows(np.array(out))

    @cached_property
    def euclidean_bounds(self):
        """Constants ``(lo, hi)`` with ``lo*|v|_2 <= ||v|| <= hi*|v|_2``."""
        d = self.dim
        if self.kind == "polyhedral":
            hi = float(np.sqrt((self.functionals**2).sum(axis=1)).max())
            verts = self.unit_ball_vertices
            if verts is not None:
                lo = 1.0 / float(np.sqrt((verts**2).sum(axis=1)).max())
            else:
                # inner bound through the bounding box of the unit ball
                box = self.ball_box(1.0)
                lo = 1.0 / float(np.sqrt((box**2).sum()))
            return lo, hi
        s = (0.0 if math.isinf(self.p) else 1.0 / self.p) - 0.5
        c_hi = d**s if s > 0 else 1.0
        c_lo = d**s if s < 0 else 1.0
        if self.kind == "weighted_lp":
            return c_lo * float(self.weights.min()), c_hi * float(self.weights.max())
        return c_lo, c_hi

    def ball_box(self, r):
        """Half-widths of the coordinate box circumscribing ``B_r(0)``."""
        return r * self.dual_norm(np.eye(self.dim))

    def sample_ball(self, center, r, size, rng):
        """Uniform samples from the open ball ``B_r(center)`` by rejection."""
        center = self._check(center)
        half = self.ball_box(r)
        out = np.empty((0, self.dim))
        while len(out) < size:
            want = max(64, 2 * (size - len(out)))
            cand = rng.uniform(-half, half, size=(want, self.dim))
            out = np.vstack([out, cand[self.norm(cand) < r]])
        return center + out[:size]


def _unique_rows(x, decimals=12):
    key = np.round(x, decimals) + 0.0
    _, idx = np.unique(key, axis=0, return_index=True)
    return x[np.sort(idx)]


def norm_eval(space, v):
    return space.norm(v)


def dual_norm_eval(space, w):
    return space.dual_norm(w)


def dual_norm_witness(space, w):
    return space.dual_norm_witness(w)


# -- dual nets ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DualNet:
    """Finite family of dual-norm-one functionals with distortion ``delta``.

    ``(1 - delta) * ||v|| <= max_j F[j] . v <= ||v||`` for every ``v``.
    """

    space: NormedSpace
    functionals: np.ndarray
    delta: float

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.functionals, dtype=float))
        if f.shape[1] != self.space.dim:
            raise DimensionError("net functionals do not match the space dimension")
        if not 0 <= self.delta < 1:
            raise ValueError("distortion must lie in [0, 1)")
        f.setflags(write=False)
        object.__setattr__(self, "functionals", f)

    @property
    def size(self):
        return len(self.functionals)


def _cube_surface_grid(d, step):
    """Points on the surface of ``[-1, 1]^d`` spaced at most ``step`` apart per face."""
    k = max(2, int(math.ceil(2.0 / step)) + 1)
    ticks = np.linspace(-1.0, 1.0, k)
    face = np.array(list(itertools.product(ticks, repeat=d - 1)))
    pts = []
    for axis in range(d):
        for s in (-1.0, 1.0):
            p = np.insert(face, axis, s, axis=1)
            pts.append(p)
    return _unique_rows(np.vstack(pts))


def _net_size_estimate(d, step):
    k = max(2, int(math.ceil(2.0 / step)) + 1)
    return 2 * d * k ** (d - 1)


def dual_sphere_net(space, delta=0.05, max_size=100_000):
    """Finite subset of the dual unit sphere with distortion at most ``delta``.

    Norms with polyhedral unit balls (polyhedral, l1, l-inf and their weighted
    forms, and every norm in dimension one) get their exact extreme dual
    functionals and ``delta = 0``. Smooth norms are handled by gridding
    direction space and taking the norming functional of each grid direction:

    * Euclidean type (p = 2) in dimension 2: angular step ``theta`` with
      ``1 - cos(theta / 2) <= delta``.
    * Euclidean type in dimension >= 3: cube-surface grid with Euclidean
      covering radius ``rho``, giving ``delta = rho**2 / 2``.
    * general p: cube-surface grid, ``delta <= 2 * rho * d**|1/p - 1/2|``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    d = space.dim
    if space.kind == "polyhedral":
        a = space.functionals
        keep = space.dual_norm(a) >= 1 - 1e-12
        f = _unique_rows(np.vstack([a[keep], -a[keep]]))
        return DualNet(space, f, 0.0)
    w = space.weights if space.kind == "weighted_lp" else np.ones(d)
    p = space.p
    if d == 1:
        n1 = float(space.norm(np.ones(1)))
        return DualNet(space, np.array([[n1], [-n1]]), 0.0)
    if p == 1:
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=d)))
        if len(signs) > max_size:
            raise NetBudgetError(f"sign net of size {len(signs)} exceeds budget {max_size}")
        return DualNet(space, signs * w, 0.0)
    if math.isinf(p):
        return DualNet(space, np.vstack([np.diag(w), -np.diag(w)]), 0.0)

    if p == 2 and d == 2:
        theta = 2.0 * math.acos(1.0 - delta)
        count = int(math.ceil(2 * math.pi / theta))
        if count > max_size:
            raise NetBudgetError(f"angular net of size {count} exceeds budget {max_size}")
        ang = 2 * math.pi * np.arange(count) / count
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
        achieved = 1.0 - math.cos(math.pi / count)
    else:
        if p == 2:
            rho = math.sqrt(2.0 * delta)
        else:
            rho = delta / (2.0 * d ** abs(1.0 / p - 0.5))
        step = 2.0 * rho / math.sqrt(d - 1)
        est = _net_size_estimate(d, step)
        if est > max_size:
            raise NetBudgetError(f"net of size ~{est} exceeds budget {max_size}")
        dirs = _cube_surface_grid(d, step)
        k = max(2, int(math.ceil(2.0 / step)) + 1)
        rho_done = (2.0 / (k - 1)) * math.sqrt(d - 1) / 2.0
        if p == 2:
            achieved = rho_done**2 / 2.0
        else:
            achieved = 2.0 * rho_done * d ** abs(1.0 / p - 0.5)
    f = np.array([_norming_functional(u, p) for u in dirs]) * w
    return DualNet(space, _unique_rows(f), float(achieved))


def _norming_functional(u, p):
    """Dual-norm-one functional attaining ``||u||_p`` at ``u`` (plain lp)."""
    a = np.abs(u) / _pnorm(u, p)
    return np.sign(u) * a ** (p - 1)


def embed(net, v):
    """``v -> (omega(v))_{omega in F}``; batched over leading axes."""
    v = net.space._check(v)
    return v @ net.functionals.T
