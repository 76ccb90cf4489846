import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsmpi import (
    ApproxConfig,
    DiagnosticUnavailable,
    MdpModel,
    MpiConfig,
    ParameterError,
    PositiveValueVector,
    RiskParams,
    approx_evaluation_perturb,
    approx_improvement,
    boundedness_floor,
    brute_force_optimal,
    check_approx_sandwich,
    check_sandwich,
    generate_random,
    greedy_improvement,
    positivity_horizon,
    run_approx_mpi,
    run_mpi,
    theorem_bound,
    transform,
    verify_contracts,
)
from rsmpi.operators import action_values


def tm(seed, n=3, m=2, alpha=1.0):
    return transform(generate_random(seed, n, m), RiskParams(alpha))


ERRORS = ApproxConfig(1.02, 0.99, 1.01)


class TestConfig:
    @pytest.mark.parametrize("args", [(0.99, 1, 1), (1, 0, 1), (1, 1.1, 1.2), (1, 0.9, 0.95), (1, 1, 1, 0, 0)])
    def test_rejects(self, args):
        with pytest.raises(ParameterError):
            ApproxConfig(*args)

    def test_error_factor(self):
        assert ERRORS.error_factor == pytest.approx(1.01 * 1.02 / 0.99)


class TestImprovement:
    def test_exact_when_epsilon_one(self):
        t = tm(3, 4, 3)
        v = PositiveValueVector([0.1, 0.2, 0.3, 0.4])
        rng = np.random.default_rng(0)
        assert approx_improvement(t, v, 1.0, rng) == greedy_improvement(t, v)

    def test_single_action(self):
        t = tm(3, 4, 1)
        assert approx_improvement(t, PositiveValueVector.uniform(4), 2.0, np.random.default_rng(0)) == (0,) * 4

    @given(st.integers(0, 10_000), st.integers(0, 1000), st.floats(1.0, 1.5))
    @settings(max_examples=50, deadline=None)
    def test_ratio_contract(self, seed, rng_seed, eps):
        t = tm(seed, 4, 3)
        v = PositiveValueVector(np.random.default_rng(seed).random(4) + 0.05)
        f = approx_improvement(t, v, eps, np.random.default_rng(rng_seed))
        vals = action_values(t, v.w)
        ratio = vals[np.arange(4), list(f)] / vals.min(axis=1)
        assert ratio.min() >= 1.0 - 1e-15 and ratio.max() <= eps * (1 + 1e-15)

    def test_large_epsilon_explores(self):
        t = tm(5, 5, 3)
        v = PositiveValueVector.uniform(5)
        rng = np.random.default_rng(1)
        greedy = greedy_improvement(t, v)
        assert any(approx_improvement(t, v, 10.0, rng) != greedy for _ in range(10))


class TestEvaluationPerturb:
    def test_identity(self):
        v = PositiveValueVector([0.2, 0.8])
        assert np.array_equal(approx_evaluation_perturb(v, 1.0, 1.0, np.random.default_rng(0)).w, v.w)

    def test_fixed_ratio(self):
        v = PositiveValueVector([0.2, 0.8])
        out = approx_evaluation_perturb(v, 2.0, 2.0, np.random.default_rng(0))
        assert np.allclose(out.w, [0.1, 0.4])

    @given(st.integers(0, 10_000), st.floats(0.5, 1.0), st.floats(1.0, 2.0))
    def test_ratio_bounds(self, seed, d1, d2):
        v = PositiveValueVector(np.random.default_rng(seed).random(5) + 0.01)
        r = v.w / approx_evaluation_perturb(v, d1, d2, np.random.default_rng(seed)).w
        assert r.min() >= d1 * (1 - 1e-15) and r.max() <= d2 * (1 + 1e-15)

    def test_rejects(self):
        with pytest.raises(ParameterError):
            approx_evaluation_perturb(PositiveValueVector([1.0]), 1.2, 1.1, np.random.default_rng(0))


class TestRun:
    def test_zero_error_matches_exact(self):
        t = tm(8, 4, 2)
        cfg = MpiConfig((3, 1))
        a, b = run_mpi(t, cfg), run_approx_mpi(t, cfg, ApproxConfig(rng_seed=99))
        assert [r.policy for r in a.records] == [r.policy for r in b.records]
        for ra, rb in zip(a.records, b.records):
            assert np.array_equal(ra.value.w, rb.value.w) and ra.u == rb.u and ra.l == rb.l

    def test_single_state(self):
        t = transform(MdpModel(np.ones((1, 2, 1)), [[0.3, 0.1]]), RiskParams(1.0))
        trace = run_approx_mpi(t, MpiConfig(), ApproxConfig(1.5, 0.5, 2.0))
        assert trace.converged
        assert trace.final_lambda_tilde == pytest.approx(t.d[0].min(), abs=1e-12)

    def test_seeded_reproducible(self):
        t = tm(9, 4, 2)
        cfg = MpiConfig(5, max_outer=15)
        a = run_approx_mpi(t, cfg, ApproxConfig(1.05, 0.95, 1.05, rng_seed=4))
        b = run_approx_mpi(t, cfg, ApproxConfig(1.05, 0.95, 1.05, rng_seed=4))
        assert all(np.array_equal(x.value.w, y.value.w) for x, y in zip(a.records, b.records))

    @given(st.integers(0, 10_000), st.integers(0, 100), st.floats(1.0, 1.1), st.floats(0.9, 1.0),
           st.floats(1.0, 1.1))
    @settings(max_examples=30, deadline=None)
    def test_contracts_and_chain(self, seed, rng_seed, eps, d1, d2):
        t = tm(seed, 3, 2)
        approx = ApproxConfig(eps, d1, d2, rng_seed)
        trace = run_approx_mpi(t, MpiConfig(3, max_outer=25, diagnostics=True), approx)
        assert verify_contracts(trace, t, approx) == []
        brute = brute_force_optimal(t)
        assert check_approx_sandwich(trace, t, brute, eps).ok
        assert boundedness_floor(trace, t, approx, positivity_horizon(t)).holds


class TestApproxSandwich:
    def test_reduces_to_exact_chain(self):
        t = tm(11, 4, 2)
        trace = run_mpi(t, MpiConfig(diagnostics=True))
        brute = brute_force_optimal(t)
        a, b = check_approx_sandwich(trace, t, brute, 1.0), check_sandwich(trace, t, brute)
        assert a.ok and b.ok and a.checked == b.checked

    def test_seeded_epsilon(self):
        t = tm(12, 4, 2)
        approx = ApproxConfig(1.05, 1.0, 1.0, rng_seed=2)
        trace = run_approx_mpi(t, MpiConfig(3, max_outer=30, diagnostics=True), approx)
        assert check_approx_sandwich(trace, t, brute_force_optimal(t), 1.05).ok


class TestTheoremBound:
    def test_zero_error_reduces_to_exact_rate(self):
        t = tm(13, 3, 2)
        trace = run_approx_mpi(t, MpiConfig(5), ApproxConfig())
        report = theorem_bound(trace, t, brute_force_optimal(t), ApproxConfig(), positivity_horizon(t))
        assert report.sigma == 0.0
        assert report.gamma_prime == pytest.approx(1 - report.gamma)
        assert report.applicable and not report.violations

    def test_seeded_admissible(self):
        t = tm(14, 3, 2)
        approx = ApproxConfig(1.02, 0.99, 1.01, rng_seed=1)
        trace = run_approx_mpi(t, MpiConfig(5, max_outer=40, diagnostics=True), approx)
        brute = brute_force_optimal(t)
        report = theorem_bound(trace, t, brute, approx, positivity_horizon(t))
        assert report.applicable and not report.violations
        rho_f = math.exp(trace.records[-1].policy_lambda_tilde)
        assert rho_f - brute.optimal_rho <= report.asymptotic_band + 1e-9

    def test_not_applicable_flagged(self):
        t = tm(15, 3, 2)
        approx = ApproxConfig(3.0, 0.5, 2.0)
        trace = run_approx_mpi(t, MpiConfig(5, max_outer=10), approx)
        report = theorem_bound(trace, t, brute_force_optimal(t), approx, positivity_horizon(t))
        assert not report.applicable
        assert report.violations == [] and report.asymptotic_band == math.inf

    def test_sigma_formula(self):
        t = tm(16, 3, 2)
        approx = ApproxConfig(1.02, 0.99, 1.01, n_window=2)
        trace = run_approx_mpi(t, MpiConfig(3, max_outer=12), approx)
        r = theorem_bound(trace, t, brute_force_optimal(t), approx, positivity_horizon(t))
        rho = approx.error_factor ** 2
        assert r.n_window == 2
        assert r.sigma == pytest.approx(rho * (1 + 0.02 * r.gamma) - 1)
        assert r.gamma_prime == pytest.approx(rho * (1 - r.gamma))

    def test_short_trace(self):
        t = transform(MdpModel(np.ones((1, 2, 1)), [[0.3, 0.1]]), RiskParams(1.0))
        trace = run_approx_mpi(t, MpiConfig(), ApproxConfig())
        with pytest.raises(DiagnosticUnavailable):
            theorem_bound(trace, t, brute_force_optimal(t), ApproxConfig(), positivity_horizon(t))


class TestFloor:
    def test_zero_error_matches_observed_min(self):
        t = tm(17, 4, 2)
        trace = run_mpi(t)
        report = boundedness_floor(trace, t, ApproxConfig(), positivity_horizon(t))
        assert report.observed == trace.beta_observed and report.holds

    def test_single_state(self):
        t = transform(MdpModel(np.ones((1, 2, 1)), [[0.3, 0.1]]), RiskParams(1.0))
        approx = ApproxConfig(1.0, 0.5, 2.0)
        trace = run_approx_mpi(t, MpiConfig(), approx)
        assert boundedness_floor(trace, t, approx, positivity_horizon(t)).observed >= 1 / approx.delta2

    def test_floor_below_observed(self):
        t = tm(18, 4, 2)
        approx = ApproxConfig(1.05, 0.9, 1.1, rng_seed=3)
        trace = run_approx_mpi(t, MpiConfig((1, 4), max_outer=30), approx)
        report = boundedness_floor(trace, t, approx, positivity_horizon(t))
        assert report.floor is not None and 0 < report.floor <= report.observed
