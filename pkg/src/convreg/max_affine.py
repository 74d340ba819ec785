"""Max-affine (piecewise-linear convex) functions.

A model holds pieces ``(anchor_i, value_i, slope_i)`` and evaluates to::

    f(x) = max_i  value_i + slope_i' (x - anchor_i)

Every estimator in this package returns its fit in this form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union

import numpy as np

# A piece is active at x when its affine value is within this relative gap of the max.
ACTIVATION_RTOL = 1e-8
# Ties at anchors that justify dropping a piece; tighter so pruning moves values by < 1e-9.
PRUNE_RTOL = 1e-9


class InvalidModelError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    """The hyperrectangle ``[a, b]^d``."""

    a: float
    b: float
    d: int

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"empty domain: a={self.a} >= b={self.b}")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.a - tol) and np.all(x <= self.b + tol))


@dataclass(frozen=True, eq=False)
class MaxAffineModel:
    anchors: np.ndarray  # (k, d)
    values: np.ndarray  # (k,)
    slopes: np.ndarray  # (k, d)
    grad_bound: float
    domain: Box

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        k = values.size
        if k == 0:
            raise InvalidModelError("a max-affine model needs at least one piece")
        d = self.domain.d
        anchors = np.array(self.anchors, dtype=float).reshape(k, d)
        slopes = np.array(self.slopes, dtype=float).reshape(k, d)
        for arr in (anchors, values, slopes):
            arr.setflags(write=False)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "grad_bound", float(self.grad_bound))
        if self.grad_bound < 0:
            raise InvalidModelError("grad_bound must be nonnegative")

    @property
    def num_pieces(self) -> int:
        return self.values.size

    @property
    def dim(self) -> int:
        return self.domain.d

    def _affine(self, x) -> np.ndarray:
        """Affine values of every piece; shape (m, k) for m query points."""
        X = np.asarray(x, dtype=float).reshape(-1, self.dim)
        offsets = self.values - np.einsum("kd,kd->k", self.slopes, self.anchors)
        return X @ self.slopes.T + offsets

    def __call__(self, x):
        return evaluate(self, x)

    def with_pieces(self, keep) -> "MaxAffineModel":
        keep = np.asarray(keep)
        return MaxAffineModel(self.anchors[keep], self.values[keep], self.slopes[keep],
                              self.grad_bound, self.domain)

    def to_dict(self) -> dict:
        return {
            "domain": {"a": self.domain.a, "b": self.domain.b, "d": self.domain.d},
            "grad_bound": self.grad_bound,
            "pieces": [
                {"anchor": a.tolist(), "value": float(v), "slope": s.tolist()}
                for a, v, s in zip(self.anchors, self.values, self.slopes)
            ],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MaxAffineModel":
        dom = obj["domain"]
        pieces = obj["pieces"]
        if not pieces:
            raise InvalidModelError("model JSON has no pieces")
        return cls(
            anchors=[p["anchor"] for p in pieces],
            values=[p["value"] for p in pieces],
            slopes=[p["slope"] for p in pieces],
            grad_bound=obj["grad_bound"],
            domain=Box(float(dom["a"]), float(dom["b"]), int(dom["d"])),
        )

    def to_json(self) -> str:
        # json writes floats with repr(), i.e. shortest round-trip digits (<= 17 significant)
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "MaxAffineModel":
        return cls.from_dict(json.loads(text))


def _check(model: MaxAffineModel):
    if not isinstance(model, MaxAffineModel) or model.num_pieces == 0:
        raise InvalidModelError("invalid max-affine model")


def evaluate(model: MaxAffineModel, x) -> Union[float, np.ndarray]:
    """``max_i value_i + slope_i'(x - anchor_i)``.

    A single point (scalar in d=1, or a length-d vector) gives a float; an
    ``(m, d)`` array (or length-m vector in d=1) gives an array of m values.
    Points outside the domain use the same formula.
    """
    _check(model)
    vals = model._affine(x).max(axis=1)
    return float(vals[0]) if _is_single(model, x) else vals


def _is_single(model, x) -> bool:
    arr = np.asarray(x)
    return arr.ndim == 0 or (arr.ndim == 1 and model.dim > 1 and arr.size == model.dim)


def active_pieces(model: MaxAffineModel, x) -> np.ndarray:
    """Indices of the pieces attaining the max at a single point ``x``."""
    _check(model)
    aff = model._affine(x)[0]
    top = aff.max()
    return np.flatnonzero(aff >= top - ACTIVATION_RTOL * (1.0 + abs(top)))


def subgradient(model: MaxAffineModel, x) -> np.ndarray:
    """Slope of the lowest-index active piece at ``x``."""
    return model.slopes[active_pieces(model, x)[0]].copy()


def subgradients(model: MaxAffineModel, X) -> np.ndarray:
    """Row-wise :func:`subgradient` for an ``(m, d)`` batch of points."""
    _check(model)
    aff = model._affine(X)
    top = aff.max(axis=1, keepdims=True)
    active = aff >= top - ACTIVATION_RTOL * (1.0 + np.abs(top))
    return model.slopes[np.argmax(active, axis=1)]


def subdifferential_extremes(model: MaxAffineModel, x) -> np.ndarray:
    """Slopes of all active pieces at ``x``; the subdifferential is their convex hull."""
    return model.slopes[active_pieces(model, x)].copy()


def j_inf(model: MaxAffineModel) -> float:
    """Largest sup-norm slope over the pieces.

    Equals the essential sup of the gradient's sup-norm as long as no piece is
    active only on a null set; fitted models are pruned so that this holds.
    """
    _check(model)
    return float(np.abs(model.slopes).max())


def prune_redundant(model: MaxAffineModel) -> MaxAffineModel:
    """Drop pieces that are not needed to reproduce the model on its own anchors.

    A piece is dropped when, at every anchor where it attains the max, some
    other kept piece ties with it (within ``PRUNE_RTOL``), so removing it leaves the function
    values at every anchor unchanged.  Pieces are examined from the largest
    slope norm down, so the oversized slopes that a solver may leave on a
    null set are the ones removed.
    """
    _check(model)
    aff = model._affine(model.anchors)  # aff[i, j]: piece j at anchor i
    top = aff.max(axis=1)
    thr = top - PRUNE_RTOL * (1.0 + np.abs(top))
    active = aff >= thr[:, None]
    keep = np.ones(model.num_pieces, dtype=bool)
    covered = active.sum(axis=1)  # active kept pieces per anchor
    norms = np.abs(model.slopes).max(axis=1)
    for j in np.argsort(-norms, kind="stable"):
        if np.any(active[:, j] & (covered <= 1)):
            continue
        keep[j] = False
        covered -= active[:, j]
    return model.with_pieces(np.flatnonzero(keep))
