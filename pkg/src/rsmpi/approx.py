"""Approximate modified policy iteration with controlled, seeded errors.

Both approximation steps are enforced componentwise:

* improvement returns a policy with ``1 <= (T_f e^h)(i) / (T e^h)(i) <= epsilon``
  for every state;
* evaluation divides the normalized iterate by factors drawn from
  ``[delta1, delta2]``, so every component of ``e^{h'} / e^{h}`` lies in that
  interval.

With ``epsilon = delta1 = delta2 = 1`` the iteration is exactly
:func:`rsmpi.mpi.run_mpi`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DiagnosticUnavailable, ParameterError
from .model import Policy
from .mpi import (
    MpiConfig,
    MpiIterationRecord,
    MpiTrace,
    SandwichReport,
    _check_init,
    _finish,
    _sandwich,
    SANDWICH_SLACK,
    partial_evaluation,
    q_measure,
    window_length,
    window_product,
    window_product_min_entry,
)
from .operators import PositiveValueVector, action_values, greedy_from_values, normalize, weighted_matrix
from .oracles import BruteForceResult, policy_lambda_cache
from .transform import PositivityCertificate, TransformedMdp

BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class ApproxConfig:
    epsilon: float = 1.0
    delta1: float = 1.0
    delta2: float = 1.0
    rng_seed: int = 0
    n_window: int | None = None

    def __post_init__(self):
        if not self.epsilon >= 1.0:
            raise ParameterError(f"epsilon must be >= 1, got {self.epsilon}")
        if not 0.0 < self.delta1 <= 1.0 <= self.delta2:
            raise ParameterError(f"need 0 < delta1 <= 1 <= delta2, got ({self.delta1}, {self.delta2})")
        if self.n_window is not None and self.n_window < 1:
            raise ParameterError("n_window must be >= 1")

    @property
    def error_factor(self) -> float:
        """``delta2 * epsilon / delta1``."""
        return self.delta2 * self.epsilon / self.delta1

    def snapshot(self) -> dict:
        return {"epsilon": self.epsilon, "delta1": self.delta1, "delta2": self.delta2,
                "rng_seed": self.rng_seed, "n_window": self.n_window}


def _improve(vals: np.ndarray, epsilon: float, rng: np.random.Generator,
             tie_break: str = "lowest") -> Policy:
    best, greedy = greedy_from_values(vals, tie_break)
    if epsilon <= 1.0:
        return greedy
    n, m = vals.shape
    policy = list(greedy)
    for i in range(n):
        if m == 1 or rng.random() >= 0.5:
            continue
        alt = int(rng.integers(m - 1))
        alt += alt >= greedy[i]
        if vals[i, alt] <= epsilon * best[i]:
            policy[i] = alt
    return tuple(policy)


def approx_improvement(tmdp: TransformedMdp, h: PositiveValueVector, epsilon: float,
                       rng: np.random.Generator, tie_break: str = "lowest") -> Policy:
    """Perturb the greedy policy while keeping every state's ratio within ``[1, epsilon]``.

    Each state independently, with probability 1/2, tries a uniformly drawn
    non-greedy action and keeps it only if admissible.
    """
    if epsilon < 1.0:
        raise ParameterError("epsilon must be >= 1")
    return _improve(action_values(tmdp, h.w), epsilon, rng, tie_break)


def approx_evaluation_perturb(h_prime: PositiveValueVector, delta1: float, delta2: float,
                              rng: np.random.Generator) -> PositiveValueVector:
    """Return ``e^{h'} / r`` with ``r_i ~ U[delta1, delta2]`` independently."""
    if not 0.0 < delta1 <= delta2:
        raise ParameterError(f"need 0 < delta1 <= delta2, got ({delta1}, {delta2})")
    r = rng.uniform(delta1, delta2, size=len(h_prime))
    return PositiveValueVector(h_prime.w / r, h_prime.log_scale)


def run_approx_mpi(tmdp: TransformedMdp, config: MpiConfig, approx: ApproxConfig,
                   init: PositiveValueVector | None = None) -> MpiTrace:
    h = _check_init(init, tmdp.n_states)
    rng = np.random.default_rng(approx.rng_seed)
    lam = policy_lambda_cache(tmdp) if config.diagnostics else None
    records: list[MpiIterationRecord] = []
    for k in range(config.max_outer):
        vals = action_values(tmdp, h.w)
        best = vals.min(axis=1)
        g = best / h.w
        u, l = float(g.max()), float(g.min())
        policy = _improve(vals, approx.epsilon, rng, config.tie_break)
        ratio = float((vals[np.arange(tmdp.n_states), list(policy)] / best).max())
        lam_f = lam(policy) if lam else None
        if u - l <= config.tol:
            records.append(MpiIterationRecord(k, policy, g, u, l, h, None, lam_f, ratio))
            return _finish(records, True)
        m_k = config.depth(k)
        evaluated = normalize(partial_evaluation(tmdp, policy, h, m_k))
        h_next = approx_evaluation_perturb(evaluated, approx.delta1, approx.delta2, rng)
        r = evaluated.w / h_next.w
        records.append(MpiIterationRecord(k, policy, g, u, l, h, m_k, lam_f, ratio, evaluated,
                                          float(r.min()), float(r.max())))
        h = h_next
    return _finish(records, False)


# --------------------------------------------------------------------------
# post-hoc checks

@dataclass(frozen=True)
class ContractViolation:
    index: int
    kind: str
    value: float


def verify_contracts(trace: MpiTrace, tmdp: TransformedMdp, approx: ApproxConfig,
                     rtol: float = 1e-12) -> list[ContractViolation]:
    """Recompute both ratio contracts from scratch for every recorded iteration."""
    out = []
    n = tmdp.n_states
    for rec in trace.records:
        h = rec.value.w
        M_f = weighted_matrix(tmdp, rec.policy)
        opt = np.min([weighted_matrix(tmdp, [a] * n) @ h for a in range(tmdp.n_actions)], axis=0)
        ratio = (M_f @ h) / opt
        if ratio.min() < 1.0 - rtol or ratio.max() > approx.epsilon * (1.0 + rtol):
            out.append(ContractViolation(rec.index, "improvement", float(ratio.max())))
        if rec.evaluated is not None and rec.index + 1 < len(trace.records):
            r = rec.evaluated.w / trace.records[rec.index + 1].value.w
            if r.min() < approx.delta1 * (1.0 - rtol) or r.max() > approx.delta2 * (1.0 + rtol):
                out.append(ContractViolation(rec.index, "evaluation", float(r.max())))
    return out


def check_approx_sandwich(trace: MpiTrace, tmdp: TransformedMdp, brute: BruteForceResult,
                          epsilon: float, slack: float = SANDWICH_SLACK) -> SandwichReport:
    """Check ``l_k <= e^{L~*} <= e^{L~_{f_{k+1}}} <= epsilon u_k`` at every iteration."""
    return _sandwich(trace, tmdp, brute, epsilon, slack)


@dataclass(frozen=True)
class ApproxBoundReport:
    n_window: int
    sigma: float
    gamma_prime: float
    gamma: float
    per_iteration_bound: tuple[tuple[int, float, float], ...]
    applicable: bool
    optimal_rho: float

    @property
    def violations(self) -> list[tuple[int, float, float]]:
        if not self.applicable:
            return []
        return [(k, rhs, lhs) for k, rhs, lhs in self.per_iteration_bound if lhs > rhs + BOUND_SLACK]

    @property
    def asymptotic_band(self) -> float:
        """``sigma e^{L~*} / (1 - gamma')``, the part of the bound that does not decay."""
        if not self.applicable:
            return math.inf
        return self.sigma * self.optimal_rho / (1.0 - self.gamma_prime)


def _window_size(depths, horizon: int, requested: int | None) -> int:
    if requested is not None:
        return requested
    total = 0
    for n, m in enumerate(depths, start=1):
        if m is None:
            break
        total += m
        if total >= horizon:
            return n
    raise DiagnosticUnavailable(f"trace depths never reach the horizon R = {horizon}")


def theorem_bound(trace: MpiTrace, tmdp: TransformedMdp, brute: BruteForceResult,
                  approx: ApproxConfig, cert: PositivityCertificate) -> ApproxBoundReport:
    """Evaluate the finite-time performance bound at every ``k`` that is a multiple of the window.

    ``gamma`` is the smallest ``min q`` over the windows ending at those ``k``;
    any value below each window's own minimum keeps the one-window inequality
    valid, so one constant serves the whole chain of windows. The bound is only
    claimed when ``gamma' = (delta2 eps / delta1)^n (1 - gamma) < 1``.
    """
    records = trace.records
    depths = trace.depths
    n = _window_size(depths, cert.horizon, approx.n_window)
    star = brute.optimal_rho
    eps = approx.epsilon
    ends = list(range(n, len(records), n))
    if not ends:
        raise DiagnosticUnavailable(f"trace of {len(records)} iterations is shorter than one window ({n})")
    gammas = []
    for end in ends:
        if sum(depths[end - n:end]) < cert.horizon:
            raise DiagnosticUnavailable(f"window ending at {end} sums to less than R = {cert.horizon}")
        H = window_product(tmdp, records, end, n)
        gammas.append(float(q_measure(H, records[end - n].value.w).min()))
    gamma = min(gammas)
    factor = approx.error_factor ** n
    gamma_prime = factor * (1.0 - gamma)
    sigma = factor * (1.0 + (eps - 1.0) * gamma) - 1.0
    applicable = gamma_prime < 1.0
    lam = policy_lambda_cache(tmdp)
    rows = []
    start = records[0].u * eps - star
    for k in [0] + ends:
        rec = records[k]
        lam_f = rec.policy_lambda_tilde if rec.policy_lambda_tilde is not None else lam(rec.policy)
        lhs = math.exp(lam_f) - star
        if applicable:
            rhs = gamma_prime ** (k / n) * start + sigma * star / (1.0 - gamma_prime)
        else:
            rhs = math.inf
        rows.append((k, rhs, lhs))
    return ApproxBoundReport(n, sigma, gamma_prime, gamma, tuple(rows), applicable, star)


@dataclass(frozen=True)
class FloorReport:
    observed: float
    floor: float | None
    windows_ok: bool = True

    @property
    def holds(self) -> bool:
        if not self.observed > 0 or not self.windows_ok:
            return False
        return self.floor is None or self.observed >= self.floor


def boundedness_floor(trace: MpiTrace, tmdp: TransformedMdp, approx: ApproxConfig,
                      cert: PositivityCertificate) -> FloorReport:
    """Observed ``min_{k,i} e^{h_k(i)}`` against a constructive positive floor.

    For each window of ``w`` iterations ending at ``k`` whose depths sum to at
    least the horizon, the iterate satisfies
    ``e^{h_k} >= (delta1/delta2)^w e^{alpha (d_lo - d_hi) sum m} lambda_H / (n delta2)``
    with ``lambda_H`` the min entry of the plain kernel product. ``floor`` is
    the smallest of these; ``windows_ok`` records whether every covered
    iterate met its own window's floor.
    """
    records = trace.records
    depths = trace.depths
    observed = min(float(r.value.w.min()) for r in records)
    ratio = approx.delta1 / approx.delta2
    floors = []
    windows_ok = True
    for end in range(1, len(records)):
        w = window_length(depths, end, cert.horizon)
        if w is None:
            continue
        lam_h = window_product_min_entry(tmdp, records, end, w)
        spread = math.exp(tmdp.alpha * (tmdp.d_lo - tmdp.d_hi) * sum(depths[end - w:end]))
        floor = ratio ** w * spread * lam_h / (tmdp.n_states * approx.delta2)
        floors.append(floor)
        windows_ok &= float(records[end].value.w.min()) >= floor
    return FloorReport(observed, min(floors) if floors else None, windows_ok)
