"""Named families of bounded Lipschitz fields used by configs, tests and demos."""
from __future__ import annotations

import itertools

import numpy as np

from .lipschitz import FiniteSampleFunction, ScalarField, lip_on_set, mcshane_extend

__all__ = [
    "affine",
    "norm_cone",
    "kink",
    "smooth_wave",
    "interval_indicator",
    "interval_ramp",
    "polygon_indicator",
    "polygon_ramp",
    "from_samples",
    "FAMILIES",
]


def affine(space, omega, c=0.0, radius=1.0):
    """``omega . x + c`` on ``B_radius(0)``, clamped to its range there (bounded)."""
    omega = np.asarray(omega, dtype=float).reshape(space.dim)
    L = float(space.dual_norm(omega))
    lo, hi = c - L * radius, c + L * radius

    def func(x):
        return np.clip(x @ omega + c, lo, hi)

    def grad(x):
        v = x @ omega + c
        g = np.tile(omega, (len(x), 1))
        g[(v < lo) | (v > hi)] = 0.0
        return g

    return ScalarField(space, func, grad, lip=L, bounds=(lo, hi), name="affine")


def _l1_lip(space):
    # ||x||_1 = max_s s.x over sign vectors, so Lip = max_s ||s||_*
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=space.dim)))
    return float(space.dual_norm(signs).max())


def norm_cone(space, cap=1.0):
    """``min(cap, ||x||_1)``."""
    L = _l1_lip(space)

    def func(x):
        return np.minimum(cap, np.abs(x).sum(axis=1))

    def grad(x):
        g = np.sign(x)
        g[np.abs(x).sum(axis=1) >= cap] = 0.0
        return g

    return ScalarField(space, func, grad, lip=L, bounds=(0.0, float(cap)), name="norm_cone")


def kink(space, center, cap=1.0):
    """``min(cap, ||x - center||)`` in the space's own norm (1-Lipschitz)."""
    center = np.asarray(center, dtype=float).reshape(space.dim)

    def func(x):
        return np.minimum(cap, space.norm(x - center))

    def grad(x):
        d = x - center
        g = space.norm_gradient(d)
        g[space.norm(d) >= cap] = 0.0
        return g

    return ScalarField(space, func, grad, lip=1.0, bounds=(0.0, float(cap)), name="kink")


def smooth_wave(space, omega, amplitude=1.0):
    """``amplitude * sin(omega . x)``."""
    omega = np.asarray(omega, dtype=float).reshape(space.dim)
    L = abs(amplitude) * float(space.dual_norm(omega))
    return ScalarField(
        space,
        lambda x: amplitude * np.sin(x @ omega),
        lambda x: amplitude * np.cos(x @ omega)[:, None] * omega,
        lip=L,
        bounds=(-abs(amplitude), abs(amplitude)),
        name="smooth_wave",
    )


def interval_indicator(space, a, b):
    """Indicator of ``[a, b]`` on the line (a BV, non-Lipschitz function)."""
    if space.dim != 1:
        raise ValueError("interval indicators live on the line")

    def func(x):
        return ((x[:, 0] >= a) & (x[:, 0] <= b)).astype(float)

    return ScalarField(space, func, None, lip=None, bounds=(0.0, 1.0), name="indicator")


def interval_ramp(space, a, b, width):
    """Lipschitz ramp approximating the indicator of ``[a, b]``.

    Each jump is replaced by a linear ramp of the given width centred on it.
    """
    if space.dim != 1:
        raise ValueError("interval ramps live on the line")
    w = float(width)

    def parts(x):
        return (x[:, 0] - a) / w + 0.5, (b - x[:, 0]) / w + 0.5

    def func(x):
        up, down = parts(x)
        return np.clip(np.minimum(up, down), 0.0, 1.0)

    def grad(x):
        up, down = parts(x)
        m = np.minimum(up, down)
        g = np.where(up <= down, 1.0 / w, -1.0 / w)
        g[(m <= 0) | (m >= 1)] = 0.0
        return g[:, None]

    # ||t e_1|| = |t| ||e_1||
    lip = 1.0 / (w * float(space.norm(np.ones(1))))
    return ScalarField(space, func, grad, lip=lip, bounds=(0.0, 1.0), name="ramp")


def _halfplanes(vertices):
    """Outward normals ``nu_i`` and offsets ``b_i`` with ``P = {nu_i . x <= b_i}``."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise ValueError("a polygon needs at least three planar vertices")
    e = np.roll(v, -1, axis=0) - v
    area2 = float(np.sum(v[:, 0] * np.roll(v, -1, axis=0)[:, 1] - np.roll(v, -1, axis=0)[:, 0] * v[:, 1]))
    if area2 == 0:
        raise ValueError("degenerate polygon")
    sgn = 1.0 if area2 > 0 else -1.0  # counterclockwise: outward normal is (e_y, -e_x)
    nu = sgn * np.stack([e[:, 1], -e[:, 0]], axis=1)
    b = (nu * v).sum(axis=1)
    if np.any(v @ nu.T > b[None, :] + 1e-12 * np.abs(b).max()):
        raise ValueError("polygon must be convex")
    return nu, b


def polygon_indicator(space, vertices):
    """Indicator of a closed convex polygon in the plane (a BV function)."""
    nu, b = _halfplanes(vertices)

    def func(x):
        return np.all(x @ nu.T <= b, axis=1).astype(float)

    return ScalarField(space, func, None, lip=None, bounds=(0.0, 1.0), name="polygon")


def polygon_ramp(space, vertices, width):
    """Lipschitz ramp across the boundary of a convex polygon ``{nu_i . x <= b_i}``.

    With the signed gauge ``s(x) = max_i (nu_i . x - b_i) / ||nu_i||_*``
    (minus the norm distance to the complement inside, at most the distance
    to ``P`` outside) the ramp is ``clip(1/2 - s/width, 0, 1)``, which is
    ``1/width`` Lipschitz. The sublevel sets of ``s`` are parallel polygons
    whose anisotropic perimeter is affine in the level, so the strip
    centred on the boundary carries exactly the perimeter of ``P``.
    """
    nu, b = _halfplanes(vertices)
    scale = space.dual_norm(nu)
    w = float(width)

    def gauge(x):
        s = (x @ nu.T - b[None, :]) / scale[None, :]
        i = np.argmax(s, axis=1)
        return s[np.arange(len(x)), i], i

    def func(x):
        s, _ = gauge(x)
        return np.clip(0.5 - s / w, 0.0, 1.0)

    def grad(x):
        s, i = gauge(x)
        g = -nu[i] / (scale[i] * w)[:, None]
        g[np.abs(s) >= w / 2] = 0.0
        return g

    return ScalarField(space, func, grad, lip=1.0 / w, bounds=(0.0, 1.0), name="polygon_ramp")


def from_samples(sample):
    """Clamped McShane extension of a :class:`FiniteSampleFunction`."""
    if not isinstance(sample, FiniteSampleFunction):
        raise TypeError("expected a FiniteSampleFunction")
    L = lip_on_set(sample)
    lo, hi = float(sample.values.min()), float(sample.values.max())
    return mcshane_extend(sample, L, clamp=(lo, hi))


FAMILIES = {
    "affine": affine,
    "norm_cone": norm_cone,
    "kink": kink,
    "smooth_wave": smooth_wave,
    "indicator": interval_indicator,
    "ramp": interval_ramp,
    "polygon": polygon_indicator,
}
