"""Finite MDP data model, validation, random generation and risk-neutral baselines.

Policies are plain tuples of action indices, one per state. Transition tensors
are indexed ``P[s, a, s']`` and cost matrices ``c[s, a]``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterError, PreconditionError

ROW_SUM_TOL = 1e-12

Policy = tuple[int, ...]


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MdpModel:
    """Finite state/action MDP.

    ``cost_lo`` and ``cost_hi`` default to the extreme finite entries of
    ``cost``. Construction only checks shapes; use :func:`validate_model` for
    the probabilistic invariants.
    """

    transition: np.ndarray
    cost: np.ndarray
    cost_lo: float | None = None
    cost_hi: float | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        P = _frozen(self.transition)
        c = _frozen(self.cost)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] == 0 or P.shape[1] == 0:
            raise ParameterError(f"transition must have shape (n, m, n) with n, m >= 1, got {P.shape}")
        if c.shape != P.shape[:2]:
            raise ParameterError(f"cost must have shape {P.shape[:2]}, got {c.shape}")
        finite = c[np.isfinite(c)]
        lo = self.cost_lo if self.cost_lo is not None else (float(finite.min()) if finite.size else 0.0)
        hi = self.cost_hi if self.cost_hi is not None else (float(finite.max()) if finite.size else 0.0)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "cost", c)
        object.__setattr__(self, "cost_lo", float(lo))
        object.__setattr__(self, "cost_hi", float(hi))
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != P.shape[0]:
                raise ParameterError(f"expected {P.shape[0]} labels, got {len(labels)}")
            object.__setattr__(self, "labels", labels)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def policy_matrix(self, policy: Sequence[int]) -> np.ndarray:
        """Transition matrix ``P_f[s, s'] = P[s, f(s), s']``."""
        f = check_policy(policy, self.n_states, self.n_actions)
        return self.transition[np.arange(self.n_states), f]

    def policy_cost(self, policy: Sequence[int]) -> np.ndarray:
        f = check_policy(policy, self.n_states, self.n_actions)
        return self.cost[np.arange(self.n_states), f]

    def __eq__(self, other):
        if not isinstance(other, MdpModel):
            return NotImplemented
        return (
            np.array_equal(self.transition, other.transition)
            and np.array_equal(self.cost, other.cost)
            and self.cost_lo == other.cost_lo
            and self.cost_hi == other.cost_hi
            and self.labels == other.labels
        )

    __hash__ = None


@dataclass(frozen=True)
class RiskParams:
    alpha: float
    kappa: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ParameterError(f"alpha must be positive, got {self.alpha}")
        if not (0.0 < self.kappa < 1.0):
            raise ParameterError(f"kappa must lie in (0, 1), got {self.kappa}")


def check_policy(policy: Sequence[int], n_states: int, n_actions: int) -> np.ndarray:
    f = np.asarray(policy)
    if f.shape != (n_states,) or not np.issubdtype(f.dtype, np.integer):
        raise ParameterError(f"policy must be {n_states} integer action indices, got {policy!r}")
    if f.size and (f.min() < 0 or f.max() >= n_actions):
        raise ParameterError(f"policy {tuple(int(a) for a in f)} has an action outside [0, {n_actions})")
    return f


def parse_policy(spec: str) -> Policy:
    """Parse a dash-joined policy such as ``"0-2-1"``."""
    try:
        return tuple(int(tok) for tok in spec.strip().split("-"))
    except ValueError:
        raise ParameterError(f"malformed policy spec {spec!r}; expected e.g. 0-1-0") from None


def format_policy(policy: Sequence[int]) -> str:
    return "-".join(str(int(a)) for a in policy)


# --------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    kind: str
    index: tuple[int, ...]
    detail: str
    amount: float = 0.0

    def __str__(self):
        return f"{self.kind} at {self.index}: {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __iter__(self):
        return iter(self.violations)

    def __len__(self):
        return len(self.violations)


def validate_model(model: MdpModel, tol: float = ROW_SUM_TOL) -> ValidationReport:
    """List every violated invariant of ``model``; never raises."""
    out: list[Violation] = []
    P, c = model.transition, model.cost
    n, m = model.n_states, model.n_actions
    for s in range(n):
        for a in range(m):
            row = P[s, a]
            if not np.all(np.isfinite(row)):
                out.append(Violation("nonfinite_probability", (s, a), "row contains NaN or inf"))
                continue
            for sp in np.flatnonzero(row < 0):
                out.append(Violation("negative_probability", (s, a, int(sp)),
                                     f"P = {row[sp]!r}", float(row[sp])))
            deficit = 1.0 - float(row.sum())
            if abs(deficit) > tol:
                out.append(Violation("row_sum", (s, a), f"row sums to {row.sum()!r} (deficit {deficit:.3g})",
                                     deficit))
    if not model.cost_lo <= model.cost_hi:
        out.append(Violation("cost_bounds", (), f"cost_lo {model.cost_lo} > cost_hi {model.cost_hi}"))
    for s in range(n):
        for a in range(m):
            v = c[s, a]
            if not math.isfinite(v):
                out.append(Violation("nonfinite_cost", (s, a), f"c = {v!r}"))
            elif not model.cost_lo <= v <= model.cost_hi:
                out.append(Violation("cost_out_of_bounds", (s, a),
                                     f"c = {v!r} outside [{model.cost_lo}, {model.cost_hi}]", float(v)))
    return ValidationReport(tuple(out))


# --------------------------------------------------------------------------
# construction helpers

def apply_mixing(model: MdpModel, epsilon_mix: float) -> MdpModel:
    """Mix every transition row with the uniform kernel: ``(1-eps) P + eps/n``.

    Every entry of the result is at least ``eps/n``. Input rows are
    renormalized first so that small serialization drift does not propagate.
    """
    if not (0.0 < epsilon_mix < 1.0):
        raise ParameterError(f"epsilon_mix must lie in (0, 1), got {epsilon_mix}")
    n = model.n_states
    P = model.transition / model.transition.sum(axis=2, keepdims=True)
    mixed = (1.0 - epsilon_mix) * P + epsilon_mix / n
    return MdpModel(mixed, model.cost, model.cost_lo, model.cost_hi, model.labels)


def generate_random(
    seed: int,
    n_states: int,
    n_actions: int,
    cost_range: tuple[float, float] = (0.0, 1.0),
    epsilon_mix: float = 1e-3,
) -> MdpModel:
    """Seeded random MDP: Dirichlet(1) rows, uniform costs, then uniform mixing."""
    lo, hi = map(float, cost_range)
    if n_states < 1 or n_actions < 1:
        raise ParameterError("n_states and n_actions must be positive")
    if not lo < hi:
        raise ParameterError(f"cost range must satisfy lo < hi, got [{lo}, {hi}]")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    c = rng.uniform(lo, hi, size=(n_states, n_actions))
    return apply_mixing(MdpModel(P, c, lo, hi), epsilon_mix)


# --------------------------------------------------------------------------
# chain structure

def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u] & ~seen):
            seen[v] = True
            queue.append(v)
    return seen


def chain_period(P: np.ndarray) -> int:
    """Period of an irreducible chain: gcd of ``level[u] + 1 - level[v]`` over support edges."""
    adj = np.asarray(P) > 0
    n = adj.shape[0]
    level = np.full(n, -1)
    level[0] = 0
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
    g = 0
    for u, v in zip(*np.nonzero(adj)):
        if level[u] >= 0 and level[v] >= 0:
            g = math.gcd(g, int(level[u] + 1 - level[v]))
    return g


def is_irreducible_aperiodic(P: np.ndarray) -> bool:
    adj = np.asarray(P) > 0
    if not (_reachable(adj, 0).all() and _reachable(adj.T.copy(), 0).all()):
        return False
    return chain_period(P) == 1


def check_policy_irreducible_aperiodic(model: MdpModel, policy: Sequence[int]) -> bool:
    return is_irreducible_aperiodic(model.policy_matrix(policy))


def stationary_distribution(model: MdpModel, policy: Sequence[int]) -> np.ndarray:
    """Stationary distribution of ``P_f`` by a bordered linear solve."""
    P = model.policy_matrix(policy)
    if not is_irreducible_aperiodic(P):
        raise PreconditionError(f"chain of policy {format_policy(policy)} is reducible or periodic")
    return _stationary(P)


def _stationary(P: np.ndarray) -> np.ndarray:
    n = P.shape[0]
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def risk_neutral_average_cost(model: MdpModel, policy: Sequence[int]) -> float:
    """Long-run average cost ``J_f = sum_s pi(s) c(s, f(s))``."""
    pi = stationary_distribution(model, policy)
    return float(pi @ model.policy_cost(policy))
