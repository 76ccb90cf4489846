"""Aperiodicity transformation of an MDP and the induced cost correspondence.

For a fixed ``kappa`` in (0, 1) each state-action pair gets

    d(i, a) = log((1 - kappa) e^{alpha c(i, a)} + kappa) / alpha
    Q(j | i, a) = ((1 - kappa) e^{alpha c(i, a)} P(j | i, a) + kappa [i == j])
                  / ((1 - kappa) e^{alpha c(i, a)} + kappa)

so that ``e^{alpha d_f} Q_f = (1 - kappa) diag(e^{alpha c_f}) P_f + kappa I``
for every policy, and every transformed kernel keeps a self-loop.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError
from .model import MdpModel, RiskParams

MAX_EXPONENT = 700.0


@dataclass(frozen=True, eq=False)
class TransformedMdp:
    q: np.ndarray
    d: np.ndarray
    alpha: float
    kappa: float
    source_digest: str
    cost_hi: float

    @property
    def n_states(self) -> int:
        return self.q.shape[0]

    @property
    def n_actions(self) -> int:
        return self.q.shape[1]

    @property
    def d_lo(self) -> float:
        return float(self.d.min())

    @property
    def d_hi(self) -> float:
        return float(self.d.max())

    @property
    def weights(self) -> np.ndarray:
        """``e^{alpha d[s, a]}``, the per-pair multiplicative cost."""
        return np.exp(self.alpha * self.d)

    def self_loop_floor(self) -> float:
        k = self.kappa
        return k / ((1.0 - k) * math.exp(self.alpha * self.cost_hi) + k)


def model_digest(model: MdpModel) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(model.transition).tobytes())
    h.update(np.ascontiguousarray(model.cost).tobytes())
    h.update(repr((model.n_states, model.n_actions, model.cost_lo, model.cost_hi)).encode())
    return h.hexdigest()[:16]


def transform(model: MdpModel, params: RiskParams) -> TransformedMdp:
    alpha, kappa = params.alpha, params.kappa
    if alpha * model.cost_hi > MAX_EXPONENT:
        raise ParameterError(
            f"alpha * cost_hi = {alpha * model.cost_hi:.4g} exceeds {MAX_EXPONENT:g}; "
            "rescale the costs or lower alpha"
        )
    c = model.cost
    # log((1-k) e^{ac} + k) without forming e^{ac} for very negative costs
    log_norm = np.logaddexp(math.log1p(-kappa) + alpha * c, math.log(kappa))
    d = log_norm / alpha
    scaled = np.exp(math.log1p(-kappa) + alpha * c - log_norm)  # (1-k) e^{ac} / norm
    loop = np.exp(math.log(kappa) - log_norm)                   # k / norm
    n = model.n_states
    q = scaled[:, :, None] * model.transition
    idx = np.arange(n)
    q[idx, :, idx] += loop
    q /= q.sum(axis=2, keepdims=True)
    q.setflags(write=False)
    d.setflags(write=False)
    return TransformedMdp(q, d, float(alpha), float(kappa), model_digest(model), model.cost_hi)


def forward_cost(lambda_star: float, kappa: float) -> float:
    """Map an original optimal cost to the transformed one: ``log((1-k) e^L + k)``."""
    _check_kappa(kappa)
    if lambda_star < 1.0:
        # 1 + (1-k)(e^L - 1): exact at L = 0 and accurate nearby
        return math.log1p((1.0 - kappa) * math.expm1(lambda_star))
    return float(np.logaddexp(math.log1p(-kappa) + lambda_star, math.log(kappa)))


def invert_cost(lambda_tilde: float, kappa: float) -> float:
    """Exact inverse of :func:`forward_cost`: ``log((e^L~ - k) / (1 - k))``."""
    _check_kappa(kappa)
    if not math.exp(lambda_tilde) >= kappa + 1e-15:
        raise DomainError(
            f"e^lambda_tilde = {math.exp(lambda_tilde):.6g} is below kappa = {kappa}; "
            "the transformed cost is inconsistent"
        )
    # (e^L~ - k)/(1 - k) - 1 = expm1(L~)/(1 - k)
    return math.log1p(math.expm1(lambda_tilde) / (1.0 - kappa))


def _check_kappa(kappa: float) -> None:
    if not (0.0 < kappa < 1.0):
        raise ParameterError(f"kappa must lie in (0, 1), got {kappa}")


@dataclass(frozen=True)
class PositivityCertificate:
    r_bound: int
    r_empirical: int | None
    witness_min_entry: float

    @property
    def horizon(self) -> int:
        """The horizon to use downstream: the certified one if found, else the analytic bound."""
        return self.r_empirical if self.r_empirical is not None else self.r_bound


def positivity_horizon(tmdp: TransformedMdp, search_cap: int = 1000) -> PositivityCertificate:
    """Certify a horizon ``r`` after which every product of ``r`` policy kernels is positive.

    Works with the entrywise minimum over actions ``K[i, j] = min_a Q[i, a, j]``:
    every policy kernel dominates ``K``, so ``K^r > 0`` certifies positivity of
    any ``r``-fold product and ``min K^r`` lower-bounds all their entries.
    """
    if search_cap < 1:
        raise ParameterError("search_cap must be >= 1")
    n, m = tmdp.n_states, tmdp.n_actions
    r_bound = (n - 1) * m ** n + 1
    K = tmdp.q.min(axis=1)
    support = K > 0
    reach = support.copy()
    prod = K.copy()
    for r in range(1, search_cap + 1):
        if reach.all():
            return PositivityCertificate(r_bound, r, float(prod.min()))
        if r == search_cap:
            break
        reach = (reach.astype(np.int64) @ support.astype(np.int64)) > 0
        prod = prod @ K
    return PositivityCertificate(r_bound, None, 0.0)
