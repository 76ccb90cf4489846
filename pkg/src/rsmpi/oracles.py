"""Ground-truth computations used to check the iterative solvers.

Everything here is exact up to floating point: policy costs come from the
Perron root of the policy's weighted matrix, optimal costs from enumerating
all deterministic policies.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, ParameterError, SizeCapError
from .model import MdpModel, Policy, check_policy
from .operators import PositiveValueVector, weighted_matrix
from .transform import TransformedMdp

PERRON_TOL = 1e-12
PERRON_MAX_ITER = 100_000
BRUTE_FORCE_CAP = 10 ** 6
ARGMIN_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PolicyEvaluation:
    lambda_tilde: float
    value: PositiveValueVector
    residual: float
    iterations: int


def perron_eigenpair(m: np.ndarray, tol: float = PERRON_TOL,
                     max_iter: int = PERRON_MAX_ITER) -> PolicyEvaluation:
    """Perron root and right eigenvector of a nonnegative irreducible matrix.

    Plain power iteration from the uniform vector. The eigenvalue estimate is
    ``sum(M v) / sum(v)``; iteration stops once
    ``||M v - rho v||_inf / ||v||_inf <= tol``. Needs a positive diagonal (or
    otherwise primitive support) to converge.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    v = np.full(n, 1.0 / n)
    residual = math.inf
    for it in range(1, max_iter + 1):
        y = m @ v
        rho = y.sum()
        residual = float(np.abs(y - rho * v).max() / v.max())
        if residual <= tol:
            return PolicyEvaluation(math.log(rho), PositiveValueVector(v), residual, it)
        v = y / rho
    raise ConvergenceError(f"power iteration did not reach tol={tol:g} in {max_iter} steps", residual)


def evaluate_policy(tmdp: TransformedMdp, policy: Sequence[int], tol: float = PERRON_TOL,
                    max_iter: int = PERRON_MAX_ITER) -> PolicyEvaluation:
    return perron_eigenpair(weighted_matrix(tmdp, policy), tol, max_iter)


def original_matrix(model: MdpModel, policy: Sequence[int], alpha: float) -> np.ndarray:
    """``diag(e^{alpha c_f}) P_f`` for the untransformed problem."""
    return np.exp(alpha * model.policy_cost(policy))[:, None] * model.policy_matrix(policy)


def evaluate_policy_original(model: MdpModel, policy: Sequence[int], alpha: float,
                             tol: float = PERRON_TOL,
                             max_iter: int = PERRON_MAX_ITER) -> PolicyEvaluation:
    """Risk-sensitive cost ``Lambda_f`` of the original problem (needs an aperiodic ``P_f``)."""
    return perron_eigenpair(original_matrix(model, policy, alpha), tol, max_iter)


@dataclass(frozen=True, eq=False)
class BruteForceResult:
    optimal_lambda_tilde: float
    optimal_policies: frozenset[Policy]
    per_policy: dict[Policy, float]
    value: PositiveValueVector

    @property
    def optimal_rho(self) -> float:
        """``e^{optimal_lambda_tilde}``."""
        return math.exp(self.optimal_lambda_tilde)


def all_policies(n_states: int, n_actions: int) -> itertools.product:
    """Every deterministic policy, in mixed-radix order (last state fastest)."""
    return itertools.product(range(n_actions), repeat=n_states)


def _enumerate(n: int, m: int, evaluate: Callable[[Policy], PolicyEvaluation], cap: int,
               argmin_tol: float) -> BruteForceResult:
    if m ** n > cap:
        raise SizeCapError(f"{m}^{n} = {m ** n} policies exceeds the cap {cap}; use MPI instead")
    per_policy: dict[Policy, float] = {}
    best: PolicyEvaluation | None = None
    for policy in all_policies(n, m):
        ev = evaluate(policy)
        per_policy[policy] = ev.lambda_tilde
        if best is None or ev.lambda_tilde < best.lambda_tilde:
            best = ev
    low = best.lambda_tilde
    optimal = frozenset(p for p, lam in per_policy.items() if lam <= low + argmin_tol)
    return BruteForceResult(low, optimal, per_policy, best.value)


def brute_force_optimal(tmdp: TransformedMdp, tol: float = PERRON_TOL, cap: int = BRUTE_FORCE_CAP,
                        argmin_tol: float = ARGMIN_TOL) -> BruteForceResult:
    """Optimal transformed cost by evaluating all ``m^n`` policies.

    ``value`` is the Perron vector of a minimizing policy, i.e. ``e^{V*}``.
    """
    return _enumerate(tmdp.n_states, tmdp.n_actions,
                      lambda p: evaluate_policy(tmdp, p, tol), cap, argmin_tol)


def brute_force_original(model: MdpModel, alpha: float, tol: float = PERRON_TOL,
                         cap: int = BRUTE_FORCE_CAP, argmin_tol: float = ARGMIN_TOL) -> BruteForceResult:
    """Same enumeration on the untransformed problem; costs are ``Lambda_f``."""
    return _enumerate(model.n_states, model.n_actions,
                      lambda p: evaluate_policy_original(model, p, alpha, tol), cap, argmin_tol)


def finite_horizon_log_mgf(model: MdpModel, policy: Sequence[int], alpha: float,
                           horizon: int, s0: int) -> float:
    """``(1/t) log E[exp(alpha sum_{k<t} c_f(s_k)) | s_0]`` by the exact linear recursion."""
    if horizon < 1:
        raise ParameterError("horizon must be >= 1")
    if not 0 <= s0 < model.n_states:
        raise ParameterError(f"start state {s0} out of range")
    M = original_matrix(model, policy, alpha)
    z = np.ones(model.n_states)
    log_scale = 0.0
    for _ in range(horizon):
        z = M @ z
        top = z.max()
        z /= top
        log_scale += math.log(top)
    return (math.log(z[s0]) + log_scale) / horizon


def span(x: np.ndarray) -> float:
    return float(np.max(x) - np.min(x))


@dataclass(frozen=True, eq=False)
class ValueIterationTrace:
    """Iterates of the log-space recursion.

    ``relative[k]`` is ``g_{k+1}`` minus its first entry and ``offsets[k]`` that
    entry, so ``values = relative + offsets[:, None]``. ``increments[k]`` is
    ``g_{k+1} - g_k`` computed in the relative frame.
    """

    relative: np.ndarray
    offsets: np.ndarray
    increments: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.relative + self.offsets[:, None]

    @property
    def increment_spans(self) -> np.ndarray:
        return self.increments.max(axis=1) - self.increments.min(axis=1)


def log_bellman(tmdp: TransformedMdp, g: np.ndarray) -> np.ndarray:
    """``min_a { alpha d(i, a) + log sum_j Q(j|i, a) e^{g(j)} }``."""
    top = g.max()
    inner = tmdp.q @ np.exp(g - top)
    return (tmdp.alpha * tmdp.d + np.log(inner)).min(axis=1) + top


def relative_value_iteration(tmdp: TransformedMdp, g0: np.ndarray, iters: int) -> ValueIterationTrace:
    g = np.asarray(g0, dtype=float)
    if g.shape != (tmdp.n_states,) or not np.all(np.isfinite(g)):
        raise ParameterError("g0 must be a finite vector with one entry per state")
    rel = g - g[0]
    offset = float(g[0])
    relative = np.empty((iters, g.size))
    offsets = np.empty(iters)
    increments = np.empty((iters, g.size))
    for k in range(iters):
        nxt = log_bellman(tmdp, rel)
        increments[k] = nxt - rel
        shift = float(nxt[0])
        rel = nxt - shift
        offset += shift
        relative[k] = rel
        offsets[k] = offset
    return ValueIterationTrace(relative, offsets, increments)


def policy_lambda_cache(tmdp: TransformedMdp, tol: float = PERRON_TOL) -> Callable[[Policy], float]:
    """Memoized ``policy -> lambda_tilde`` evaluator."""
    cache: dict[Policy, float] = {}

    def lam(policy: Sequence[int]) -> float:
        key = tuple(int(a) for a in check_policy(policy, tmdp.n_states, tmdp.n_actions))
        if key not in cache:
            cache[key] = evaluate_policy(tmdp, key, tol).lambda_tilde
        return cache[key]

    return lam
