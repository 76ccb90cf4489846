"""Acceptance suite: the twelve end-to-end checks, each at its stated tolerance.

Run under pytest (one PASS/FAIL line per criterion in the terminal summary)
or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import functools
import math
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

from rsmpi import (
    ApproxConfig,
    MpiConfig,
    RiskParams,
    boundedness_floor,
    brute_force_optimal,
    brute_force_original,
    check_approx_sandwich,
    check_monotone_u,
    check_sandwich,
    contraction_diagnostic,
    evaluate_policy,
    evaluate_policy_original,
    finite_horizon_log_mgf,
    generate_random,
    invert_cost,
    positivity_horizon,
    relative_value_iteration,
    risk_neutral_average_cost,
    run_approx_mpi,
    run_mpi,
    theorem_bound,
    transform,
)
from rsmpi.oracles import span

ALPHAS = (0.5, 1.0, 2.0)


def _instance(seed: int):
    """Seed -> (model, alpha) covering n in 2..5, m in {2, 3}, alpha in {0.5, 1, 2}."""
    n = 2 + seed % 4
    m = 2 + (seed // 4) % 2
    return generate_random(seed, n, m), ALPHAS[seed % 3]


@functools.lru_cache(maxsize=None)
def _optimality_run(seed: int, schedule=5):
    model, alpha = _instance(seed)
    tmdp = transform(model, RiskParams(alpha, 0.5))
    trace = run_mpi(tmdp, MpiConfig(m_schedule=schedule, tol=1e-10, max_outer=10_000, diagnostics=True))
    return tmdp, trace, brute_force_optimal(tmdp)


# --------------------------------------------------------------------------
# criteria; each returns (passed, one-line detail)

def criterion_1():
    bad, worst = [], 0.0
    for seed in range(50):
        _, trace, brute = _optimality_run(seed)
        err = abs(trace.final_lambda_tilde - brute.optimal_lambda_tilde)
        worst = max(worst, err)
        if not (trace.converged and trace.records[-1].u - trace.records[-1].l <= 1e-10
                and trace.final_policy in brute.optimal_policies and err <= 1e-8):
            bad.append(seed)
    return not bad, f"optimality on 50 runs; max |lambda~ - lambda~*| = {worst:.2e}; failing seeds {bad}"


def criterion_2():
    total, checked = 0, 0
    for seed in range(50):
        tmdp, trace, brute = _optimality_run(seed)
        report = check_sandwich(trace, tmdp, brute, slack=1e-10)
        total += len(report.violations)
        checked += report.checked
    return total == 0, f"sandwich over {checked} iterations; {total} violations"


def criterion_3():
    bad = []
    for seed in range(50):
        for schedule in (5, (1, 20)):
            _, trace, _ = _optimality_run(seed, schedule)
            if check_monotone_u(trace, slack=1e-12):
                bad.append((seed, schedule))
    return not bad, f"u non-increasing on 100 runs (m=5 and alternating 1/20); failing {bad}"


def criterion_4():
    bad, windows = [], 0
    for seed in range(50):
        for schedule in (5, (1, 20)):
            tmdp, trace, brute = _optimality_run(seed, schedule)
            diag = contraction_diagnostic(trace, tmdp, positivity_horizon(tmdp), brute)
            windows += len(diag.windows)
            if not trace.beta_observed > 0 or not all(w.floor_ok for w in diag.windows):
                bad.append((seed, schedule))
    return not bad, f"min value entry > 0 and above window floor ({windows} windows); failing {bad}"


def criterion_5():
    bad, windows, gmin = [], 0, math.inf
    for seed in range(20):
        tmdp, trace, brute = _optimality_run(seed)
        diag = contraction_diagnostic(trace, tmdp, positivity_horizon(tmdp), brute)
        windows += len(diag.windows)
        gmin = min(gmin, diag.gamma)
        if not (diag.gamma > 0 and all(w.rate_ok for w in diag.windows)):
            bad.append(seed)
    return not bad, f"geometric rate on 20 runs, {windows} windows, min gamma {gmin:.3g}; failing {bad}"


def criterion_6():
    bad, worst = [], 0.0
    for seed in range(20):
        model = generate_random(1000 + seed, 2 + seed % 3, 2 + seed % 2)
        alpha = ALPHAS[seed % 3]
        original = brute_force_original(model, alpha)
        for kappa in (0.1, 0.5, 0.9):
            tb = brute_force_optimal(transform(model, RiskParams(alpha, kappa)))
            err = abs(invert_cost(tb.optimal_lambda_tilde, kappa) - original.optimal_lambda_tilde)
            worst = max(worst, err)
            if tb.optimal_policies != original.optimal_policies or err > 1e-10:
                bad.append((seed, kappa))
    return not bad, f"optimal sets equal, max inversion error {worst:.2e} (60 cases); failing {bad}"


def criterion_7():
    bad, worst = [], 0.0
    for seed in range(10):
        model = generate_random(2000 + seed, 3 + seed % 3, 2)
        alpha = ALPHAS[seed % 3]
        policy = tuple(int(a) for a in np.random.default_rng(seed).integers(0, 2, model.n_states))
        exact = invert_cost(evaluate_policy(transform(model, RiskParams(alpha)), policy).lambda_tilde, 0.5)
        gap2000 = abs(finite_horizon_log_mgf(model, policy, alpha, 2000, 0) - exact)
        gap500 = abs(finite_horizon_log_mgf(model, policy, alpha, 500, 0) - exact)
        worst = max(worst, gap2000)
        if not (gap2000 <= 1e-3 and gap2000 < gap500):
            bad.append(seed)
    return not bad, f"truncated growth rate within {worst:.2e} at t=2000 and shrinking; failing {bad}"


def criterion_8():
    bad = []
    for seed in range(10):
        model = generate_random(3000 + seed, 3 + seed % 3, 2)
        policy = tuple(int(a) for a in np.random.default_rng(seed).integers(0, 2, model.n_states))
        j = risk_neutral_average_cost(model, policy)
        gaps = [abs(evaluate_policy_original(model, policy, a, tol=1e-15).lambda_tilde / a - j)
                for a in (1e-2, 1e-3, 1e-4)]
        if not (gaps[0] > gaps[1] > gaps[2]):
            bad.append((seed, gaps))
    return not bad, f"|Lambda/alpha - J| decreasing over alpha = 1e-2, 1e-3, 1e-4 on 10 pairs; failing {bad}"


def criterion_9():
    worst, bad = 0.0, []
    for seed in range(10):
        model, alpha = _instance(seed)
        tmdp = transform(model, RiskParams(alpha))
        config = MpiConfig(m_schedule=(2, 7))
        a = run_mpi(tmdp, config)
        b = run_approx_mpi(tmdp, config, ApproxConfig(1.0, 1.0, 1.0, rng_seed=seed))
        if len(a.records) != len(b.records):
            bad.append(seed)
            continue
        for ra, rb in zip(a.records, b.records):
            diff = max(abs(ra.u - rb.u), abs(ra.l - rb.l), float(np.abs(ra.g - rb.g).max()),
                       float(np.abs(ra.value.w - rb.value.w).max()))
            worst = max(worst, diff)
            if ra.policy != rb.policy or diff > 1e-14:
                bad.append(seed)
                break
    return not bad, f"zero-error approximate run equals exact run, max diff {worst:.1e}; failing {bad}"


APPROX = dict(epsilon=1.02, delta1=0.99, delta2=1.01)


def criterion_10():
    bad, applicable = [], 0
    for seed in range(10):
        model = generate_random(4000 + seed, 3, 2)
        tmdp = transform(model, RiskParams(ALPHAS[seed % 3]))
        approx = ApproxConfig(**APPROX, rng_seed=seed)
        trace = run_approx_mpi(tmdp, MpiConfig(m_schedule=5, max_outer=40, diagnostics=True), approx)
        brute = brute_force_optimal(tmdp)
        cert = positivity_horizon(tmdp)
        chain = check_approx_sandwich(trace, tmdp, brute, approx.epsilon, slack=1e-10)
        floor = boundedness_floor(trace, tmdp, approx, cert)
        bound = theorem_bound(trace, tmdp, brute, approx, cert)
        applicable += bound.applicable
        if not (chain.ok and floor.holds and not bound.violations):
            bad.append(seed)
    return not bad, (f"perturbed bounds on 10 seeds ({applicable} with gamma' < 1, "
                     f"rest chain and floor only); failing {bad}")


# spans bottom out near 1e-15, where rounding alone moves them by ~1e-16
SPAN_ROUNDING = 1e-13


def criterion_11():
    bad, worst_tail, worst_rise = [], 0.0, 0.0
    for seed in range(10):
        model, alpha = _instance(seed)
        tmdp = transform(model, RiskParams(alpha))
        r = positivity_horizon(tmdp).horizon
        rng = np.random.default_rng(seed)
        n = tmdp.n_states
        a = relative_value_iteration(tmdp, rng.normal(0, 3, n), 10_000)
        b = relative_value_iteration(tmdp, rng.normal(0, 3, n), 10_000)
        spans = np.array([span(x) for x in a.relative - b.relative])
        tail = spans[r:]
        rise = float(np.max(np.diff(tail), initial=0.0))
        worst_rise = max(worst_rise, rise)
        worst_tail = max(worst_tail, float(spans.min()))
        if rise > SPAN_ROUNDING or spans.min() >= 1e-8:
            bad.append(seed)
    return not bad, (f"span of difference non-increasing after R (max rise {worst_rise:.1e}), "
                     f"min span {worst_tail:.1e}; failing {bad}")


def _cli(*args: str, cwd: Path) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, "-m", "rsmpi", *args], cwd=cwd, capture_output=True, text=True)


def criterion_12():
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        runs = [
            ("m.json.manifest.json", ["generate", "--seed", "7", "--n-states", "4", "--n-actions", "3",
                                      "--out", "m.json"]),
            ("t.csv.manifest.json", ["solve", "m.json", "--alpha", "1", "--trace-out", "t.csv",
                                     "--diagnostics"]),
            ("a.csv.manifest.json", ["solve", "m.json", "--alpha", "1", "--mode", "approx", "--epsilon",
                                     "1.02", "--delta1", "0.99", "--delta2", "1.01", "--seed", "3",
                                     "--max-outer", "30", "--trace-out", "a.csv"]),
            ("m.json.brute.manifest.json", ["brute", "m.json", "--alpha", "2", "--report", "b.txt"]),
            ("m.json.eval.manifest.json", ["eval", "m.json", "--alpha", "2", "--policy", "0-1-2-0",
                                           "--report", "e.txt"]),
        ]
        outputs = []
        for manifest, argv in runs:
            proc = _cli(*argv, cwd=root)
            if proc.returncode not in (0, 3):
                return False, f"{argv[0]} exited {proc.returncode}: {proc.stderr.strip()}"
            outputs.append(argv[argv.index("--out") + 1] if "--out" in argv
                           else argv[argv.index("--trace-out") + 1] if "--trace-out" in argv
                           else argv[argv.index("--report") + 1])
        mismatched = []
        for (manifest, argv), out in zip(runs, outputs):
            proc = _cli("rerun", manifest, "--out-dir", "replay", "--verify", cwd=root)
            if proc.returncode not in (0, 3) or (root / out).read_bytes() != (root / "replay" / out).read_bytes():
                mismatched.append(argv[0])
    return not mismatched, f"{len(runs)} commands replayed from manifests byte-identically; mismatched {mismatched}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12]


@pytest.mark.parametrize("number", range(1, 13))
def test_acceptance_criterion(number, criterion):
    passed, detail = CRITERIA[number - 1]()
    criterion(number, passed, detail)
    assert passed, detail


if __name__ == "__main__":
    failures = 0
    for i, fn in enumerate(CRITERIA, start=1):
        passed, detail = fn()
        failures += not passed
        print(f"[{'PASS' if passed else 'FAIL'}] criterion {i:2d}: {detail}")
    sys.exit(1 if failures else 0)
