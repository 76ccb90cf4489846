"""Risk-sensitive modified policy iteration with tracing and invariant checks.

Each outer iteration ``n`` works on a unit-sum vector ``e^{V'_n}``:

1. greedy improvement picks ``f_{n+1}`` attaining ``T e^{V'_n}``;
2. the ratios ``g_n = T e^{V'_n} / e^{V'_n}`` give ``u_n = max g_n`` and
   ``l_n = min g_n``, which bracket ``e^{Lambda~*}``;
3. ``m_n`` applications of ``T_{f_{n+1}}`` followed by renormalization
   produce ``e^{V'_{n+1}}``.

The loop stops once ``u_n - l_n <= tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import DiagnosticUnavailable, ParameterError
from .model import MdpModel, Policy, RiskParams
from .operators import (
    PositiveValueVector,
    action_values,
    apply_matrix,
    greedy_from_values,
    normalize,
    weighted_matrix,
)
from .oracles import BruteForceResult, policy_lambda_cache
from .transform import PositivityCertificate, TransformedMdp, invert_cost, transform

Schedule = Union[int, Sequence[int], Callable[[int], int]]

SANDWICH_SLACK = 1e-10
MONOTONE_SLACK = 1e-12
RATE_SLACK = 1e-10


@dataclass(frozen=True)
class MpiConfig:
    """Solver settings.

    ``m_schedule`` is a constant depth, a sequence cycled over iterations
    (``(1, 20)`` alternates), or a callable ``k -> m_k``. ``m_cap`` bounds every
    depth; it defaults to the largest entry of an int/sequence schedule and is
    required for callables.
    """

    m_schedule: Schedule = 5
    m_cap: int | None = None
    tol: float = 1e-10
    max_outer: int = 10_000
    tie_break: str = "lowest"
    diagnostics: bool = False

    def __post_init__(self):
        sched = self.m_schedule
        if isinstance(sched, (int, np.integer)):
            cap_default = int(sched)
            if sched < 1:
                raise ParameterError("m must be >= 1")
        elif callable(sched):
            if self.m_cap is None:
                raise ParameterError("a callable m_schedule needs an explicit m_cap")
            cap_default = self.m_cap
        else:
            sched = tuple(int(x) for x in sched)
            if not sched or min(sched) < 1:
                raise ParameterError("m_schedule entries must be >= 1")
            object.__setattr__(self, "m_schedule", sched)
            cap_default = max(sched)
        if self.m_cap is None:
            object.__setattr__(self, "m_cap", cap_default)
        if self.tol <= 0 or self.max_outer < 1:
            raise ParameterError("tol must be positive and max_outer >= 1")

    def depth(self, k: int) -> int:
        sched = self.m_schedule
        if isinstance(sched, (int, np.integer)):
            m = int(sched)
        elif isinstance(sched, tuple):
            m = sched[k % len(sched)]
        else:
            m = int(sched(k))
        if not 1 <= m <= self.m_cap:
            raise ParameterError(f"m_{k} = {m} outside [1, m_cap={self.m_cap}]")
        return m

    def snapshot(self) -> dict:
        sched = self.m_schedule
        if isinstance(sched, (int, np.integer)):
            sched = int(sched)
        elif isinstance(sched, tuple):
            sched = list(sched)
        else:
            sched = repr(sched)
        return {"m_schedule": sched, "m_cap": self.m_cap, "tol": self.tol,
                "max_outer": self.max_outer, "tie_break": self.tie_break,
                "diagnostics": self.diagnostics}


@dataclass(frozen=True, eq=False)
class MpiIterationRecord:
    """Quantities of outer iteration ``index``.

    ``value`` is the unit-sum vector the ratios ``g`` were computed at, ``policy``
    the improvement chosen there and ``m`` the evaluation depth applied to it
    (``None`` on the stopping iteration). The approximate variant also fills the
    ratio fields and ``evaluated`` (the normalized vector before perturbation).
    """

    index: int
    policy: Policy
    g: np.ndarray
    u: float
    l: float
    value: PositiveValueVector
    m: int | None = None
    policy_lambda_tilde: float | None = None
    improvement_ratio_max: float | None = None
    evaluated: PositiveValueVector | None = None
    eval_ratio_min: float | None = None
    eval_ratio_max: float | None = None


@dataclass(frozen=True, eq=False)
class MpiTrace:
    records: tuple[MpiIterationRecord, ...]
    converged: bool
    final_policy: Policy
    final_lambda_tilde: float
    half_width: float
    beta_observed: float

    @property
    def u(self) -> np.ndarray:
        return np.array([r.u for r in self.records])

    @property
    def l(self) -> np.ndarray:
        return np.array([r.l for r in self.records])

    @property
    def depths(self) -> list[int | None]:
        return [r.m for r in self.records]


def _check_init(init: PositiveValueVector | None, n: int) -> PositiveValueVector:
    if init is None:
        return PositiveValueVector.uniform(n)
    if len(init) != n:
        raise ParameterError(f"init has {len(init)} entries, expected {n}")
    total = float(init.represented().sum())
    if abs(total - 1.0) > 1e-12:
        raise ParameterError(f"init must sum to 1, sums to {total!r}")
    return PositiveValueVector(init.represented())


def greedy_improvement(tmdp: TransformedMdp, v: PositiveValueVector, tie_break: str = "lowest") -> Policy:
    return greedy_from_values(action_values(tmdp, v.w), tie_break)[1]


def partial_evaluation(tmdp: TransformedMdp, policy: Sequence[int], v: PositiveValueVector,
                       m_k: int) -> PositiveValueVector:
    """``T_f^{m_k} v``."""
    if m_k < 1:
        raise ParameterError("m_k must be >= 1")
    M = weighted_matrix(tmdp, policy)
    for _ in range(m_k):
        v = apply_matrix(M, v)
    return v


def _finish(records: list[MpiIterationRecord], converged: bool) -> MpiTrace:
    last = records[-1]
    beta = min(float(r.value.w.min()) for r in records)
    mid = 0.5 * (last.u + last.l)
    return MpiTrace(tuple(records), converged, last.policy, math.log(mid),
                    0.5 * (math.log(last.u) - math.log(last.l)), beta)


def run_mpi(tmdp: TransformedMdp, config: MpiConfig = MpiConfig(),
            init: PositiveValueVector | None = None) -> MpiTrace:
    v = _check_init(init, tmdp.n_states)
    lam = policy_lambda_cache(tmdp) if config.diagnostics else None
    records: list[MpiIterationRecord] = []
    for n in range(config.max_outer):
        best, policy = greedy_from_values(action_values(tmdp, v.w), config.tie_break)
        g = best / v.w
        u, l = float(g.max()), float(g.min())
        done = u - l <= config.tol
        m_n = None if done else config.depth(n)
        records.append(MpiIterationRecord(
            n, policy, g, u, l, v, m_n, lam(policy) if lam else None))
        if done:
            return _finish(records, True)
        v = normalize(partial_evaluation(tmdp, policy, v, m_n))
    return _finish(records, False)


# --------------------------------------------------------------------------
# invariant checks

@dataclass(frozen=True)
class SandwichViolation:
    index: int
    inequality: str
    lhs: float
    rhs: float


@dataclass(frozen=True)
class SandwichReport:
    violations: tuple[SandwichViolation, ...]
    checked: int

    @property
    def ok(self) -> bool:
        return not self.violations


def _sandwich(trace: MpiTrace, tmdp: TransformedMdp, brute: BruteForceResult, epsilon: float,
              slack: float) -> SandwichReport:
    lam = policy_lambda_cache(tmdp)
    star = brute.optimal_rho
    out = []
    for r in trace.records:
        lam_f = r.policy_lambda_tilde if r.policy_lambda_tilde is not None else lam(r.policy)
        rho_f = math.exp(lam_f)
        chain = [("l <= rho*", r.l, star), ("rho* <= rho_f", star, rho_f),
                 ("rho_f <= eps*u", rho_f, epsilon * r.u)]
        for name, lhs, rhs in chain:
            if lhs > rhs + slack:
                out.append(SandwichViolation(r.index, name, lhs, rhs))
    return SandwichReport(tuple(out), len(trace.records))


def check_sandwich(trace: MpiTrace, tmdp: TransformedMdp, brute: BruteForceResult,
                   slack: float = SANDWICH_SLACK) -> SandwichReport:
    """Check ``l_n <= e^{L~*} <= e^{L~_{f_{n+1}}} <= u_n`` at every iteration.

    Policy costs missing from the trace are evaluated on demand.
    """
    return _sandwich(trace, tmdp, brute, 1.0, slack)


def check_monotone_u(trace: MpiTrace, slack: float = MONOTONE_SLACK) -> list[int]:
    """Iterations ``n`` where ``u_n > u_{n-1} + slack``."""
    u = trace.u
    return [int(i) + 1 for i in np.flatnonzero(u[1:] > u[:-1] + slack)]


# --------------------------------------------------------------------------
# windowed products

def window_length(depths: Sequence[int | None], end: int, horizon: int) -> int | None:
    """Smallest ``k`` with ``m_{end-1} + ... + m_{end-k} >= horizon`` (``None`` if none)."""
    total = 0
    for k in range(1, end + 1):
        total += depths[end - k]
        if total >= horizon:
            return k
    return None


def window_product(tmdp: TransformedMdp, records: Sequence[MpiIterationRecord], end: int, k: int,
                   weighted: bool = True) -> np.ndarray:
    """``H = K_{f_end}^{m_{end-1}} ... K_{f_{end-k+1}}^{m_{end-k}}``.

    ``K`` is the weighted matrix ``e^{alpha d_f} Q_f`` or, with
    ``weighted=False``, the plain kernel ``Q_f``. Record ``j`` holds ``f_{j+1}``
    and ``m_j``.
    """
    n = tmdp.n_states
    H = np.eye(n)
    rows = np.arange(n)
    for j in range(end - 1, end - k - 1, -1):
        rec = records[j]
        K = weighted_matrix(tmdp, rec.policy) if weighted else tmdp.q[rows, list(rec.policy)]
        H = H @ np.linalg.matrix_power(K, rec.m)
        H /= H.max()  # positive rescaling; q and min-entry ratios are unaffected by it
    return H


def window_product_min_entry(tmdp: TransformedMdp, records, end: int, k: int) -> float:
    """Min entry of the unweighted kernel product over the window (no rescaling)."""
    n = tmdp.n_states
    rows = np.arange(n)
    H = np.eye(n)
    for j in range(end - 1, end - k - 1, -1):
        rec = records[j]
        H = H @ np.linalg.matrix_power(tmdp.q[rows, list(rec.policy)], rec.m)
    return float(H.min())


def q_measure(H: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``q(j|i) = H(j|i) v(j) / sum_l H(l|i) v(l)``."""
    num = H * v[None, :]
    return num / num.sum(axis=1, keepdims=True)


def floor_bound(tmdp: TransformedMdp, depth_sum: int, min_entry: float) -> float:
    """Lower bound ``e^{alpha (d_lo - d_hi) sum m} eps_H / n`` on normalized iterates."""
    return math.exp(tmdp.alpha * (tmdp.d_lo - tmdp.d_hi) * depth_sum) * min_entry / tmdp.n_states


@dataclass(frozen=True)
class WindowCheck:
    end: int
    k: int
    gamma: float
    h_min_entry: float
    lhs: float
    rhs: float
    value_min: float
    value_floor: float

    @property
    def rate_ok(self) -> bool:
        return self.lhs <= self.rhs + RATE_SLACK

    @property
    def floor_ok(self) -> bool:
        return self.value_min >= self.value_floor


@dataclass(frozen=True)
class ContractionDiagnostic:
    k_window: int
    gamma: float
    rate_bound: float
    h_min_entry: float
    beta_floor: float
    windows: tuple[WindowCheck, ...]

    @property
    def violations(self) -> list[WindowCheck]:
        return [w for w in self.windows if not (w.rate_ok and w.floor_ok)]

    @property
    def ok(self) -> bool:
        return not self.violations


def contraction_diagnostic(trace: MpiTrace, tmdp: TransformedMdp, cert: PositivityCertificate,
                           brute: BruteForceResult) -> ContractionDiagnostic:
    """Rebuild the window products along a trace and check the geometric rate.

    For every iteration ``n`` with a window of ``k`` preceding iterations whose
    depths sum to at least the positivity horizon, forms ``H_{n,k}``, the
    measure ``q`` against ``e^{V'_{n-k}}`` and ``gamma = min q``, then checks
    ``u_n - e^{L~*} <= (1 - gamma)(u_{n-k} - e^{L~*})``. It also checks the
    normalized iterate ``e^{V'_n}`` against the floor built from the unweighted
    kernel product over the same window.
    """
    records = trace.records
    depths = trace.depths
    horizon = cert.horizon
    star = brute.optimal_rho
    windows = []
    for end in range(1, len(records)):
        k = window_length(depths, end, horizon)
        if k is None:
            continue
        H = window_product(tmdp, records, end, k)
        q = q_measure(H, records[end - k].value.w)
        gamma = float(q.min())
        eps_h = window_product_min_entry(tmdp, records, end, k)
        windows.append(WindowCheck(
            end, k, gamma, eps_h,
            lhs=records[end].u - star,
            rhs=(1.0 - gamma) * (records[end - k].u - star),
            value_min=float(records[end].value.w.min()),
            value_floor=floor_bound(tmdp, sum(depths[end - k:end]), eps_h),
        ))
    if not windows:
        raise DiagnosticUnavailable(
            f"no window of the {len(records)}-iteration trace reaches the horizon R = {horizon}")
    return ContractionDiagnostic(
        k_window=max(w.k for w in windows),
        gamma=min(w.gamma for w in windows),
        rate_bound=1.0 - min(w.gamma for w in windows),
        h_min_entry=min(w.h_min_entry for w in windows),
        beta_floor=min(w.value_floor for w in windows),
        windows=tuple(windows),
    )


# --------------------------------------------------------------------------
# end-to-end

@dataclass(frozen=True, eq=False)
class SolveResult:
    policy: Policy
    lambda_tilde_star_estimate: float
    lambda_star_estimate: float
    half_width: float
    trace: MpiTrace
    tmdp: TransformedMdp

    @property
    def converged(self) -> bool:
        return self.trace.converged


def solve(model: MdpModel, params: RiskParams, config: MpiConfig = MpiConfig()) -> SolveResult:
    """Transform, run MPI, and map the transformed cost back to the original problem."""
    tmdp = transform(model, params)
    trace = run_mpi(tmdp, config)
    return SolveResult(trace.final_policy, trace.final_lambda_tilde,
                       invert_cost(trace.final_lambda_tilde, params.kappa),
                       trace.half_width, trace, tmdp)
