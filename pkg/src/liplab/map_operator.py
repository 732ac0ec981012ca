"""Partition-induced finite-rank operators on l_inf(S) for finite index sets S.

Given vectors ``a^1..a^n`` in ``l_inf(S)`` and ``eps > 0``, the index set is
split into blocks on which the tuple ``(a^1_x, ..., a^n_x)`` varies by at most
``eps`` in every coordinate; the operator copies the value at each block's
representative onto the whole block. It is linear, idempotent, of rank equal
to the number of blocks, fixes constants (so its norm is exactly one), and
moves each generating vector by at most ``eps`` in sup norm.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "BoundedSeq",
    "MapOperator",
    "AmplificationCertificate",
    "NetPremiseError",
    "partition_for_diameter",
    "apply",
    "net_amplification_certificate",
    "abs_diff_le",
]


class NetPremiseError(ValueError):
    pass


def abs_diff_le(x, y, bound, factor=1):
    """Elementwise ``|x - y| <= factor * bound`` decided exactly on the float inputs.

    Differences are computed in floating point; entries within a few ulps of
    the threshold are re-decided in rational arithmetic.
    """
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    shape = x.shape
    x, y = np.atleast_1d(x), np.atleast_1d(y)
    bound = np.broadcast_to(np.asarray(bound, float), shape).reshape(x.shape)
    d = np.abs(x - y)
    thr = factor * bound
    tol = 8 * np.finfo(float).eps * np.maximum(np.maximum(np.abs(x), np.abs(y)), np.abs(thr))
    out = d <= thr
    unsure = np.abs(d - thr) <= tol
    for idx in zip(*np.nonzero(unsure)):
        diff = abs(Fraction(float(x[idx])) - Fraction(float(y[idx])))
        out[idx] = diff <= factor * Fraction(float(bound[idx]))
    return out.reshape(shape)


@dataclass(frozen=True, eq=False)
class BoundedSeq:
    """An element of ``l_inf(S)``: one real value per label in ``S``."""

    labels: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        labels = tuple(self.labels)
        if len(labels) != len(v):
            raise ValueError("one value per label is required")
        if not np.all(np.isfinite(v)):
            raise ValueError("bounded sequences must have finite values")
        v.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, values, labels=None):
        values = np.asarray(values, dtype=float)
        if labels is None:
            labels = range(len(values))
        return cls(tuple(labels), values)

    @property
    def sup_norm(self):
        return float(np.abs(self.values).max()) if len(self.values) else 0.0

    def __add__(self, other):
        _same_index(self, other)
        return BoundedSeq(self.labels, self.values + other.values)

    def __sub__(self, other):
        _same_index(self, other)
        return BoundedSeq(self.labels, self.values - other.values)

    def __rmul__(self, alpha):
        return BoundedSeq(self.labels, float(alpha) * self.values)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["label", "value"])
        for lab, val in zip(self.labels, self.values):
            w.writerow([lab, repr(float(val))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0] != ["label", "value"]:
            raise ValueError("expected header 'label,value'")
        labels = tuple(_parse_label(r[0]) for r in rows[1:])
        return cls(labels, np.array([float(r[1]) for r in rows[1:]]))


def _parse_label(s):
    try:
        return int(s)
    except ValueError:
        return s


def _same_index(a, b):
    if a.labels != b.labels:
        raise ValueError("sequences are indexed by different label sets")


@dataclass(frozen=True, eq=False)
class MapOperator:
    """Partition of ``S`` into blocks plus one representative per block.

    ``block_of[i]`` is the block of the i-th label, ``reps[j]`` the label
    position of block j's representative.
    """

    labels: tuple
    block_of: np.ndarray
    reps: np.ndarray
    eps: float | None = None

    def __post_init__(self):
        b = np.asarray(self.block_of, dtype=np.int64)
        r = np.asarray(self.reps, dtype=np.int64)
        labels = tuple(self.labels)
        if len(b) != len(labels) or len(labels) == 0:
            raise ValueError("every label needs a block")
        k = len(r)
        if b.min() < 0 or b.max() >= k or len(np.unique(b)) != k:
            raise ValueError("blocks must be non-empty and numbered 0..k-1")
        if not np.array_equal(b[r], np.arange(k)):
            raise ValueError("each representative must lie in its own block")
        b.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "block_of", b)
        object.__setattr__(self, "reps", r)

    @property
    def rank(self):
        return len(self.reps)

    def blocks(self):
        return [np.flatnonzero(self.block_of == j) for j in range(self.rank)]

    def gather_index(self):
        """Position whose value each label receives: ``reps[block_of]``."""
        return self.reps[self.block_of]

    def apply_values(self, values):
        """Apply to raw value arrays of shape ``(..., |S|)``."""
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != len(self.labels):
            raise ValueError("value array does not match the index set")
        return values[..., self.gather_index()]

    def matrix(self):
        """Dense ``|S| x |S|`` matrix of the operator (small S only)."""
        n = len(self.labels)
        m = np.zeros((n, n))
        m[np.arange(n), self.gather_index()] = 1.0
        return m

    def to_json(self):
        return json.dumps(
            {
                "labels": list(self.labels),
                "block_of": self.block_of.tolist(),
                "representatives": self.reps.tolist(),
                "eps": self.eps,
                "rank": self.rank,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(tuple(d["labels"]), d["block_of"], d["representatives"], d.get("eps"))


def apply(op, a):
    """``p(a)_x = a_{x_j}`` for ``x`` in block ``j``."""
    if a.labels != op.labels:
        raise ValueError("sequence is not indexed by the operator's label set")
    return BoundedSeq(op.labels, op.apply_values(a.values))


def partition_for_diameter(vectors, eps, labels=None):
    """Bucket the index set so each block's value tuples have diameter <= eps.

    Parameters
    ----------
    vectors : list of BoundedSeq sharing one label set, or an array of shape
        ``(n, |S|)`` (then ``labels`` defaults to ``0..|S|-1``).
    eps : positive float, cell side.

    Indices are bucketed by the half-open cells ``[k eps, (k+1) eps)`` of each
    coordinate of their tuple; the first index seen in a cell becomes its
    representative. Membership is then confirmed with exact comparisons
    against the representative, so the guarantee ``|a_x - a_rep| <= eps`` holds
    for the float inputs as given; indices failing it (possible only at
    rounding boundaries) open a new block.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if isinstance(vectors, np.ndarray):
        arr = np.atleast_2d(np.asarray(vectors, dtype=float))
        labels = tuple(range(arr.shape[1])) if labels is None else tuple(labels)
    else:
        vectors = list(vectors)
        if not vectors:
            raise ValueError("at least one vector is required")
        labels = vectors[0].labels
        for v in vectors[1:]:
            _same_index(vectors[0], v)
        arr = np.vstack([v.values for v in vectors])
    if arr.shape[1] == 0:
        raise ValueError("empty index set")
    if arr.shape[1] != len(labels):
        raise ValueError("labels do not match the vectors")
    keys = np.floor(arr / eps).astype(np.int64).T  # one tuple key per index
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    # renumber cells by first appearance
    order = np.argsort(first, kind="stable")
    rank_of = np.empty_like(order)
    rank_of[order] = np.arange(len(order))
    cell = rank_of[inverse]
    first_of_cell = first[order]
    ok = np.all(abs_diff_le(arr, arr[:, first_of_cell[cell]], eps), axis=0)
    if ok.all():
        return MapOperator(labels, cell, first_of_cell, float(eps))
    # rounding-boundary stragglers: greedy split inside their cells
    block_of = np.empty(arr.shape[1], dtype=np.int64)
    reps = []
    rep_of_cell = {}
    for x in range(arr.shape[1]):
        cands = rep_of_cell.setdefault(int(cell[x]), [])
        for j in cands:
            if np.all(abs_diff_le(arr[:, x], arr[:, reps[j]], eps)):
                block_of[x] = j
                break
        else:
            cands.append(len(reps))
            block_of[x] = len(reps)
            reps.append(x)
    return MapOperator(labels, block_of, np.array(reps), float(eps))


@dataclass(frozen=True)
class AmplificationCertificate:
    eps: float
    errors: np.ndarray
    worst_ratio: float
    net_ok: bool
    base_ok: bool

    @property
    def passed(self):
        return self.net_ok and self.base_ok and self.worst_ratio <= 3.0

    def to_dict(self):
        return {
            "eps": self.eps,
            "worst_ratio": self.worst_ratio,
            "net_premise": self.net_ok,
            "base_premise": self.base_ok,
            "count": int(len(self.errors)),
            "max_error": float(self.errors.max()) if len(self.errors) else 0.0,
            "passed": self.passed,
        }


def net_amplification_certificate(K, F, op, eps, strict=True):
    """Check ``||p(a) - a|| <= 3 eps`` on ``K`` when ``p`` is eps-good on an eps-net ``F``.

    Premises (``F`` is an eps-net of ``K``; ``||p(a) - a|| <= eps`` on ``F``) are
    verified with exact comparisons. With ``strict`` a violated premise raises
    :class:`NetPremiseError`; otherwise it is recorded in the certificate.
    """
    Kv = np.vstack([k.values for k in K])
    Fv = np.vstack([f.values for f in F])
    net_ok = True
    for row in Kv:
        if not np.any(np.all(abs_diff_le(Fv, row[None, :], eps), axis=1)):
            net_ok = False
            break
    pF = op.apply_values(Fv)
    base_ok = bool(np.all(abs_diff_le(pF, Fv, eps)))
    if strict and not (net_ok and base_ok):
        raise NetPremiseError(
            "net premise violated: "
            + ("F is not an eps-net of K; " if not net_ok else "")
            + ("p moves a net point by more than eps" if not base_ok else "")
        )
    pK = op.apply_values(Kv)
    errors = np.abs(pK - Kv).max(axis=1)
    within = bool(np.all(abs_diff_le(pK, Kv, eps, factor=3)))
    ratio = float(errors.max() / eps) if len(errors) else 0.0
    if within:
        ratio = min(ratio, 3.0)
    return AmplificationCertificate(float(eps), errors, ratio, net_ok, base_ok)
