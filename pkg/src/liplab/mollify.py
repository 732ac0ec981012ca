"""Smoothing by a compactly supported bump on a finite-dimensional normed space.

The smoothed field is the normalized lattice convolution

    f_eps(x) = sum_z f(z) K(x - z) / sum_z K(x - z),   z in h Z^d,

with ``K(v) = phi(|v|_2 / rho)`` and ``phi(t) = exp(-1 / (1 - t^2))`` on
``t < 1``. The Euclidean support radius ``rho = eps / c_hi`` (``||v|| <= c_hi
|v|_2``) keeps the support inside the ``eps``-ball of the space's own norm, so

* ``f_eps(x)`` is a convex combination of values of ``f`` on ``B_eps(x)``:
  the range is preserved and ``|f_eps(x) - f(x)| <= Lip(f) eps`` hold exactly;
* ``f_eps`` is C-infinity and its gradient is the exact derivative of the
  quadrature formula, so finite differences agree with it to rounding;
* ``Lip(f_eps) <= Lip(f)`` and ``lip_a(f_eps)(x) <= Lip(f; B_eps(x))`` hold
  up to a quadrature slack ``tau_q`` measured on affine fields.

Beyond dimension three the lattice is replaced by a seeded jittered lattice
with a coarse spacing (a Monte Carlo rule); the mass check then reports the
deviation instead of enforcing it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.integrate import quad

from .lipschitz import ScalarField, ball_pairs_lip, _steep_directions
from .normed_space import NormedSpace

__all__ = [
    "QuadratureError",
    "MollifierKernel",
    "SmoothedField",
    "SlopeBulletCertificate",
    "mollify",
    "smoothed_gradient",
    "slope_bullet_check",
    "measure_tau_q",
    "DEFAULT_NODES_PER_RADIUS",
]

MASS_TOL = 1e-6
# lattice nodes per Euclidean support radius; dims above 3 use the jittered rule
DEFAULT_NODES_PER_RADIUS = {1: 50, 2: 24, 3: 18}
JITTER_NODES_PER_RADIUS = 4


class QuadratureError(RuntimeError):
    pass


def _phi(t):
    out = np.zeros_like(t)
    m = t < 1
    out[m] = np.exp(-1.0 / (1.0 - t[m] ** 2))
    return out


def _dphi_factor(t):
    """``phi'(t) / t`` on ``t < 1``."""
    out = np.zeros_like(t)
    m = t < 1
    u = 1.0 - t[m] ** 2
    out[m] = np.exp(-1.0 / u) * (-2.0 / u**2)
    return out


def _unit_mass(dim):
    """Integral of ``phi(|u|)`` over the Euclidean unit ball of R^dim."""
    sphere = 2 * math.pi ** (dim / 2) / math.gamma(dim / 2)
    radial = quad(lambda t: math.exp(-1.0 / (1.0 - t * t)) * t ** (dim - 1), 0, 1, epsabs=1e-15, epsrel=1e-13)[0]
    return sphere * radial


@dataclass(frozen=True, eq=False)
class MollifierKernel:
    """Radial bump of Euclidean radius ``rho`` with unit mass, supported in ``B_eps``."""

    space: NormedSpace
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @cached_property
    def rho(self):
        return self.eps / self.space.euclidean_bounds[1]

    @cached_property
    def const(self):
        return 1.0 / (_unit_mass(self.space.dim) * self.rho**self.space.dim)

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        t = np.sqrt((v * v).sum(axis=-1)) / self.rho
        return self.const * _phi(t)

    def gradient(self, v):
        v = np.asarray(v, dtype=float)
        t = np.sqrt((v * v).sum(axis=-1)) / self.rho
        return (self.const / self.rho**2) * _dphi_factor(t)[..., None] * v


def _splitmix(x):
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & np.uint64(0xFFFFFFFFFFFFFFFF)
    return x ^ (x >> np.uint64(31))


def _jitter(idx, seed):
    """Deterministic per-node offsets in ``[-0.3, 0.3]^d`` from integer node indices."""
    with np.errstate(over="ignore"):
        key = np.full(idx.shape[:-1], np.uint64(seed), dtype=np.uint64)
        for j in range(idx.shape[-1]):
            key = _splitmix(key ^ idx[..., j].astype(np.int64).view(np.uint64))
        out = np.empty(idx.shape, dtype=float)
        for j in range(idx.shape[-1]):
            key = _splitmix(key + np.uint64(j + 1))
            out[..., j] = (key >> np.uint64(11)).astype(float) / 2.0**53
    return 0.6 * out - 0.3


@dataclass(frozen=True, eq=False)
class SmoothedField:
    """``f_eps`` for a source field, a kernel and a lattice spacing ``h``."""

    source: ScalarField
    kernel: MollifierKernel
    h: float
    rule: str = "lattice"
    seed: int = 0
    tau_q: float = 0.0
    check_mass: bool = True
    chunk_nodes: int = field(default=2_000_000, repr=False)

    @property
    def space(self):
        return self.source.space

    @property
    def eps(self):
        return self.kernel.eps

    @cached_property
    def _stencil(self):
        d = self.space.dim
        margin = 1.6 if self.rule == "jitter" else 1.0
        reach = self.kernel.rho / self.h + margin * math.sqrt(d)
        m = int(math.ceil(reach))
        axes = [np.arange(-m, m + 1)] * d
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
        return grid[np.sqrt((grid.astype(float) ** 2).sum(axis=1)) <= reach]

    def _nodes(self, x):
        base = np.floor(x / self.h).astype(np.int64)
        idx = base[:, None, :] + self._stencil[None, :, :]
        z = idx.astype(float)
        if self.rule == "jitter":
            z = z + _jitter(idx, self.seed)
        return z * self.h

    def _eval(self, x, want_grad):
        d = self.space.dim
        s = len(self._stencil)
        step = max(1, self.chunk_nodes // s)
        vals = np.empty(len(x))
        grads = np.empty((len(x), d)) if want_grad else None
        mass = np.empty(len(x))
        for i0 in range(0, len(x), step):
            xb = x[i0 : i0 + step]
            z = self._nodes(xb)
            v = xb[:, None, :] - z
            t = np.sqrt((v * v).sum(axis=-1)) / self.kernel.rho
            inside = t < 1
            w = _phi(t)
            fz = np.zeros(t.shape)
            fz[inside] = self.source(z[inside])
            den = w.sum(axis=1)
            if np.any(den <= 0):
                raise QuadratureError("no quadrature node inside the kernel support")
            val = (w * fz).sum(axis=1) / den
            # exact convex combination: clamp rounding to the node range
            lo = np.where(inside, fz, np.inf).min(axis=1)
            hi = np.where(inside, fz, -np.inf).max(axis=1)
            val = np.clip(val, lo, hi)
            vals[i0 : i0 + step] = val
            mass[i0 : i0 + step] = den * self.kernel.const * self.h**d
            if want_grad:
                dk = _dphi_factor(t)[..., None] * v / self.kernel.rho**2
                grads[i0 : i0 + step] = ((fz - val[:, None])[..., None] * dk).sum(axis=1) / den[:, None]
        if self.check_mass and self.rule == "lattice":
            dev = float(np.abs(mass - 1).max())
            if dev > MASS_TOL:
                raise QuadratureError(f"quadrature mass deviates from 1 by {dev:.3g} (h too coarse)")
        return vals, grads, mass

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        v = self._eval(x.reshape(-1, self.space.dim), False)[0]
        return v[0] if single else v

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        g = self._eval(x.reshape(-1, self.space.dim), True)[1]
        return g[0] if single else g

    def value_and_gradient(self, x):
        v, g, _ = self._eval(np.asarray(x, dtype=float).reshape(-1, self.space.dim), True)
        return v, g

    def mass(self, x):
        return self._eval(np.asarray(x, dtype=float).reshape(-1, self.space.dim), False)[2]

    def as_field(self):
        lip = None if self.source.lip is None else self.source.lip + self.tau_q
        return ScalarField(self.space, self.__call__, self.gradient, lip=lip, bounds=self.source.bounds, name="smoothed")


def _space_key(space):
    return json.dumps(space.to_dict(), sort_keys=True)


@lru_cache(maxsize=256)
def _affine_defect(key, npr, rule, seed, points, directions):
    space = NormedSpace.from_dict(json.loads(key))
    rng = np.random.default_rng(seed)
    d = space.dim
    omegas = rng.standard_normal((directions, d))
    omegas /= np.linalg.norm(omegas, axis=1, keepdims=True)
    kernel = MollifierKernel(space, 1.0)
    h = kernel.rho / npr
    x = rng.uniform(-2.0, 2.0, (points, d))
    eta = 0.0
    for om in omegas:
        src = ScalarField(space, lambda z, om=om: z @ om, lip=1.0)
        sf = SmoothedField(src, kernel, h, rule, seed, 0.0, check_mass=False)
        eta = max(eta, float(np.linalg.norm(sf.gradient(x) - om, axis=1).max()))
    return eta


def measure_tau_q(space, eps, h, lip, rule="lattice", seed=0, points=64, directions=8):
    """Quadrature slack ``tau_q`` for a field of Lipschitz constant ``lip``.

    The gradient defect of the rule on Euclidean-unit affine fields,
    ``eta = max |grad(omega.x)_eps - omega|_2``, is measured at seeded random
    offsets. It depends on ``eps`` and ``h`` only through ``rho / h``, so it
    is measured once at unit scale. A norm-``lip`` field is at most
    ``lip * c_hi`` Euclidean Lipschitz and a Euclidean error ``e`` has dual
    norm at most ``e / c_lo``; ``tau_q = 2 * lip * eta * c_hi / c_lo`` (factor
    2 as safety margin).
    """
    npr = round(MollifierKernel(space, eps).rho / h, 9)
    eta = _affine_defect(_space_key(space), npr, rule, int(seed), points, directions)
    lo, hi = space.euclidean_bounds
    return 2.0 * lip * eta * hi / lo + 1e-12


def mollify(f, eps, h=None, nodes_per_radius=None, rule=None, seed=0, check_mass=True, tau_q=None):
    """Smooth ``f`` at scale ``eps``.

    ``h`` defaults to ``rho / nodes_per_radius`` with a per-dimension default
    (:data:`DEFAULT_NODES_PER_RADIUS`); dimensions above three use the
    jittered rule. ``tau_q`` is measured unless given.
    """
    if f.lip is None:
        raise ValueError("mollify needs a declared Lipschitz bound")
    kernel = MollifierKernel(f.space, eps)
    d = f.space.dim
    if rule is None:
        rule = "lattice" if d <= 3 else "jitter"
    if h is None:
        npr = nodes_per_radius or DEFAULT_NODES_PER_RADIUS.get(d, JITTER_NODES_PER_RADIUS)
        h = kernel.rho / npr
    if not h > 0:
        raise ValueError("grid spacing must be positive")
    if tau_q is None:
        tau_q = measure_tau_q(f.space, eps, h, f.lip, rule, seed)
    return SmoothedField(f, kernel, float(h), rule, int(seed), float(tau_q), check_mass)


def smoothed_gradient(sf, x):
    """Gradient of ``f_eps`` obtained by differentiating the kernel under the sum."""
    return sf.gradient(x)


@dataclass(frozen=True)
class SlopeBulletCertificate:
    points: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    slack: float
    seed: int

    @property
    def passed(self):
        return bool(np.all(self.lhs <= self.rhs + self.slack))

    def to_dict(self):
        return {
            "count": int(len(self.lhs)),
            "max_excess": float((self.lhs - self.rhs).max()) if len(self.lhs) else 0.0,
            "slack": self.slack,
            "seed": self.seed,
            "passed": self.passed,
        }


def slope_bullet_check(sf, points, samples=256, seed=0, slack=None):
    """Check ``||grad f_eps(x)||_* <= Lip(f; B_eps(x)) + slack`` at each point.

    The right side is a sampled lower estimate of ``Lip(f; B_eps(x))``: random
    ball pairs plus pairs along the unit-ball vertices and along the norming
    direction of ``grad f_eps(x)``. ``slack`` defaults to ``tau_q``.
    """
    points = np.asarray(points, dtype=float).reshape(-1, sf.space.dim)
    slack = sf.tau_q if slack is None else float(slack)
    grads = sf.gradient(points)
    lhs = sf.space.dual_norm(grads)
    rhs = np.empty(len(points))
    base_dirs = _steep_directions(sf.source, points[0]) if sf.source.has_gradient else None
    for i, x in enumerate(points):
        rng = np.random.default_rng([seed, i])
        dirs = [sf.space.dual_norm_witness(grads[i])[None, :]] if lhs[i] > 0 else []
        verts = sf.space.unit_ball_vertices
        if verts is not None and len(verts) <= 256:
            dirs.append(verts)
        if base_dirs is not None and len(base_dirs):
            dirs.append(_steep_directions(sf.source, x))
        dirs = np.vstack(dirs) if dirs else None
        rhs[i] = ball_pairs_lip(sf.source, x, sf.eps, samples, rng, dirs)
    return SlopeBulletCertificate(points, lhs, rhs, slack, int(seed))
