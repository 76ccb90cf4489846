"""Multiplicative Bellman operators on strictly positive vectors.

A :class:`PositiveValueVector` stands for ``e^V``; it stores a mantissa
vector ``w`` and a scalar ``log_scale`` so that the represented vector is
``e^{log_scale} * w``. Repeated operator applications fold magnitude into
``log_scale`` instead of overflowing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ParameterError
from .model import Policy, check_policy
from .transform import TransformedMdp

FOLD_HI = 1e100
FOLD_LO = 1e-100
TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class PositiveValueVector:
    w: np.ndarray
    log_scale: float = 0.0

    def __post_init__(self):
        w = np.array(self.w, dtype=float, copy=True)
        if w.ndim != 1 or not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ParameterError("a positive value vector needs finite, strictly positive entries")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "log_scale", float(self.log_scale))

    @classmethod
    def uniform(cls, n: int) -> "PositiveValueVector":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def from_log(cls, v: np.ndarray) -> "PositiveValueVector":
        """Build ``e^v`` for a real vector ``v`` without overflow."""
        v = np.asarray(v, dtype=float)
        top = float(v.max())
        return cls(np.exp(v - top), top)

    def __len__(self):
        return self.w.size

    def log(self) -> np.ndarray:
        """``V`` such that the represented vector is ``e^V``."""
        return np.log(self.w) + self.log_scale

    def represented(self) -> np.ndarray:
        return self.w * math.exp(self.log_scale)

    def scaled(self, c: float) -> "PositiveValueVector":
        if not c > 0:
            raise ParameterError("scale factor must be positive")
        return PositiveValueVector(self.w, self.log_scale + math.log(c))


def _fold(w: np.ndarray, log_scale: float) -> PositiveValueVector:
    top = float(w.max())
    if top > FOLD_HI or top < FOLD_LO:
        return PositiveValueVector(w / top, log_scale + math.log(top))
    return PositiveValueVector(w, log_scale)


def weighted_matrix(tmdp: TransformedMdp, policy: Sequence[int]) -> np.ndarray:
    """``M[i, j] = e^{alpha d(i, f(i))} Q(j | i, f(i))``."""
    f = check_policy(policy, tmdp.n_states, tmdp.n_actions)
    rows = np.arange(tmdp.n_states)
    return np.exp(tmdp.alpha * tmdp.d[rows, f])[:, None] * tmdp.q[rows, f]


def apply_matrix(M: np.ndarray, v: PositiveValueVector) -> PositiveValueVector:
    return _fold(M @ v.w, v.log_scale)


def apply_policy_operator(tmdp: TransformedMdp, policy: Sequence[int],
                          v: PositiveValueVector) -> PositiveValueVector:
    """``(T_f e^V)(i) = e^{alpha d_f(i)} sum_j Q_f(j|i) e^{V(j)}``."""
    return apply_matrix(weighted_matrix(tmdp, policy), v)


def action_values(tmdp: TransformedMdp, w: np.ndarray) -> np.ndarray:
    """``vals[i, a] = e^{alpha d(i, a)} sum_j Q(j | i, a) w_j`` for a mantissa ``w``."""
    return tmdp.weights * (tmdp.q @ w)


def greedy_from_values(vals: np.ndarray, tie_break: str = "lowest") -> tuple[np.ndarray, Policy]:
    """Row minima of ``vals`` and the tie-broken minimizing actions."""
    best = vals.min(axis=1)
    near = vals <= best[:, None] * (1.0 + TIE_RTOL)
    if tie_break == "lowest":
        acts = near.argmax(axis=1)
    elif tie_break == "highest":
        acts = near.shape[1] - 1 - near[:, ::-1].argmax(axis=1)
    else:
        raise ParameterError(f"unknown tie_break rule {tie_break!r}")
    return best, tuple(int(a) for a in acts)


def apply_optimal_operator(tmdp: TransformedMdp, v: PositiveValueVector,
                           tie_break: str = "lowest") -> tuple[PositiveValueVector, Policy]:
    """``(T e^V)(i) = min_a ...`` together with the greedy policy.

    Ties within a relative 1e-12 of the minimum go to the lowest action index
    (or the highest, with ``tie_break="highest"``).
    """
    best, policy = greedy_from_values(action_values(tmdp, v.w), tie_break)
    return _fold(best, v.log_scale), policy


@dataclass(frozen=True, eq=False)
class BoundsTriple:
    g: np.ndarray
    u: float
    l: float


def bounds_triple(tmdp: TransformedMdp, v: PositiveValueVector) -> BoundsTriple:
    """Ratios ``g = (T e^V) / e^V`` with their max ``u`` and min ``l``.

    The ratio is scale-free, so only the mantissa of ``v`` is used.
    """
    best = action_values(tmdp, v.w).min(axis=1)
    g = best / v.w
    return BoundsTriple(g, float(g.max()), float(g.min()))


def normalize(v: PositiveValueVector) -> PositiveValueVector:
    """Rescale to unit sum and reset ``log_scale``."""
    return PositiveValueVector(v.w / v.w.sum(), 0.0)
