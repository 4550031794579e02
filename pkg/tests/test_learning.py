import math

import numpy as np
import pytest

from freeferm import dense, learning, skew, states
from freeferm.errors import (
    InfeasibleThresholds,
    PromiseNotCertified,
    TooManyLocalModes,
    ValidationError,
)
from freeferm.sampling import DenseSource, ExactGaussianSource, RngStream


def ghz_plus_vacuum_source(n_extra=1, rotation=None, rng=None):
    """GHZ3 (x) |0...0>, optionally conjugated by a random Gaussian unitary."""
    rho = dense.ghz3().rho
    for _ in range(n_extra):
        rho = np.kron(rho, dense.computational_basis(1, [0]).rho)
    n = 3 + n_extra
    if rotation is None and rng is not None:
        rotation = skew.random_orthogonal(2 * n, rng)
    if rotation is not None:
        u = dense.gaussian_unitary(rotation)
        rho = u @ rho @ u.conj().T
    return DenseSource(dense.DenseState(n, rho))


def test_config_validation():
    with pytest.raises(ValidationError):
        learning.TestConfig(eps_a=0.3, eps_b=0.2, delta=0.1)
    with pytest.raises(ValidationError):
        learning.TestConfig(eps_a=0.0, eps_b=0.5, delta=1.5)
    with pytest.raises(ValidationError):
        learning.TestConfig(eps_a=0.0, eps_b=0.5, delta=0.1, gaussian_set="bogus")


def test_pure_thresholds_formulas():
    cfg = learning.TestConfig(eps_a=0.01, eps_b=0.8, delta=0.1, gaussian_set="mixed_set")
    eps_t, eps_stat = learning.pure_test_thresholds(cfg, 4)
    assert eps_t == pytest.approx(0.5 * (0.64 / 8 + 0.02))
    assert eps_stat == pytest.approx(0.9 * 0.5 * (0.64 / 8 - 0.02))
    cfg2 = learning.TestConfig(eps_a=0.01, eps_b=0.8, delta=0.1, gaussian_set="pure_set")
    eps_t2, eps_stat2 = learning.pure_test_thresholds(cfg2, 4)
    assert eps_t2 == pytest.approx(0.5 * (0.64 / 8 + 0.01))
    assert eps_stat2 == pytest.approx(0.25 * (0.64 / 8 - 0.01))


def test_pure_thresholds_infeasible():
    # eps_b = 0.2 < 2 sqrt(n eps_a) at n=4, eps_a=0.1
    cfg = learning.TestConfig(eps_a=0.1, eps_b=0.2, delta=0.1, gaussian_set="mixed_set")
    with pytest.raises(InfeasibleThresholds):
        learning.pure_test_thresholds(cfg, 4)


def test_rank_thresholds_formulas():
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.8, delta=0.1, r=1, gaussian_set="rank_set")
    eps_t, eps_stat, eps_tom, eps_t2 = learning.rank_test_thresholds(cfg, 4)
    assert eps_t == pytest.approx(0.64 / (64 * 3))
    assert eps_stat == pytest.approx(0.9 * 0.5 * 0.64 / (32 * 3))
    assert eps_tom == pytest.approx(0.9 * (1 / 6) * 0.4)
    assert eps_t2 == pytest.approx((5 / 6) * 0.4)


def test_rank_thresholds_degenerate_r():
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.5, delta=0.1, r=4, gaussian_set="rank_set")
    with pytest.raises(InfeasibleThresholds):
        learning.rank_test_thresholds(cfg, 4)


def test_pure_exact_scheme_deterministic(rng):
    s = states.random_gaussian_state(4, "pure", rng)
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.9, delta=0.05)
    v1 = learning.test_pure(ExactGaussianSource(s), cfg, RngStream(0), scheme="exact")
    v2 = learning.test_pure(ExactGaussianSource(s), cfg, RngStream(99), scheme="exact")
    assert v1.verdict == learning.CASE_A == v2.verdict
    assert v1.shots_used == 0
    assert v1.evidence.lambda_hat_relevant == v2.evidence.lambda_hat_relevant


def test_pure_sampled_case_a(rng):
    s = states.random_gaussian_state(4, "pure", rng)
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.9, delta=0.05)
    v = learning.test_pure(ExactGaussianSource(s), cfg, RngStream(1))
    assert v.verdict == learning.CASE_A
    assert v.evidence.stage == "eigenvalue_stage"
    assert v.evidence.threshold == pytest.approx(
        learning.pure_test_thresholds(cfg, 4)[0]
    )


def test_pure_sampled_case_b(rng):
    # GHZ (x) |0>: a pure state 1/2-far from every Gaussian state
    src = ghz_plus_vacuum_source(rng=rng)
    lam = skew.normal_eigenvalues(src.gamma())
    assert 0.5 * (1.0 - lam[0]) > 0.45  # lower-bound certificate for the promise
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.45, delta=0.05)
    v = learning.test_pure(src, cfg, RngStream(2))
    assert v.verdict == learning.CASE_B


def test_pure_set_variant_runs(rng):
    src = ghz_plus_vacuum_source(rng=rng)
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.45, delta=0.05, gaussian_set="pure_set")
    v = learning.test_pure(src, cfg, RngStream(3))
    assert v.verdict == learning.CASE_B


def test_rank_case_a_reaches_stage_two(rng):
    q = skew.random_orthogonal(8, rng)
    s = states.from_correlation(q @ skew.lambda_blocks([0.5, 1, 1, 1]) @ q.T)
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.8, delta=0.05, r=1, gaussian_set="rank_set")
    v = learning.test_bounded_rank(ExactGaussianSource(s), cfg, RngStream(4))
    assert v.verdict == learning.CASE_A
    assert v.evidence.stage == "tomography_stage"
    assert v.evidence.local_distance < 0.05


def test_rank_case_b_stage_one(rng):
    src = ghz_plus_vacuum_source(rng=rng)
    # lemma certificate: distance to rank-2 Gaussian states >= 1 - lambda_2
    lam = skew.normal_eigenvalues(src.gamma())
    assert 1.0 - lam[1] > 0.8
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.8, delta=0.05, r=1, gaussian_set="rank_set")
    v = learning.test_bounded_rank(src, cfg, RngStream(5))
    assert v.verdict == learning.CASE_B
    assert v.evidence.stage == "eigenvalue_stage"


def test_rank_case_b_stage_two(rng):
    # X-polarized qubit (x) vacuum: every lambda is 0 or 1, yet the state is
    # 0.8-far from all Gaussian states since Tr(X_1 sigma) = 0 for Gaussian sigma
    rho_x = 0.5 * (np.eye(2, dtype=complex) + 0.8 * np.array([[0, 1], [1, 0]]))
    rho = np.kron(rho_x, dense.computational_basis(3, [0, 0, 0]).rho)
    src = DenseSource(dense.DenseState(4, rho))
    x1 = dense.majoranas(4).matrix(0)
    assert abs(np.trace(x1 @ rho).real) == pytest.approx(0.8)
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.7, delta=0.05, r=1, gaussian_set="rank_set")
    v = learning.test_bounded_rank(src, cfg, RngStream(6))
    assert v.verdict == learning.CASE_B
    assert v.evidence.stage == "tomography_stage"
    assert v.evidence.local_distance == pytest.approx(0.8, abs=0.05)


def test_rank_exact_scheme_deterministic(rng):
    q = skew.random_orthogonal(8, rng)
    s = states.from_correlation(q @ skew.lambda_blocks([0.5, 1, 1, 1]) @ q.T)
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.8, delta=0.05, r=1, gaussian_set="rank_set")
    v1 = learning.test_bounded_rank(ExactGaussianSource(s), cfg, RngStream(40), scheme="exact")
    v2 = learning.test_bounded_rank(ExactGaussianSource(s), cfg, RngStream(41), scheme="exact")
    assert v1.verdict == v2.verdict == learning.CASE_A
    assert v1.shots_used == 0
    assert v1.evidence.local_distance == v2.evidence.local_distance


def test_reduce_identity_exact_scheme():
    mm = ExactGaussianSource(states.product_state([0, 0, 0]))
    v1, shots = learning.reduce_identity_testing(mm, 0.5, 0.1, RngStream(42), scheme="exact")
    assert v1 == learning.MAXIMALLY_MIXED and shots == 0


def test_rank_threshold_echo(rng):
    src = ghz_plus_vacuum_source(rng=rng)
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.8, delta=0.05, r=1, gaussian_set="rank_set")
    eps_t, _, _, eps_t2 = learning.rank_test_thresholds(cfg, 4)
    v = learning.test_bounded_rank(src, cfg, RngStream(43), scheme="exact")
    assert v.evidence.stage == "eigenvalue_stage"
    assert v.evidence.threshold == eps_t
    q = skew.random_orthogonal(8, rng)
    s = states.from_correlation(q @ skew.lambda_blocks([0.5, 1, 1, 1]) @ q.T)
    v2 = learning.test_bounded_rank(ExactGaussianSource(s), cfg, RngStream(44), scheme="exact")
    assert v2.evidence.stage == "tomography_stage"
    assert v2.evidence.threshold == eps_t2


def test_rank_mixed_set_variant(rng):
    q = skew.random_orthogonal(8, rng)
    s = states.from_correlation(q @ skew.lambda_blocks([0.5, 1, 1, 1]) @ q.T)
    cfg = learning.TestConfig(eps_a=0.0, eps_b=0.3, delta=0.05, r=1, gaussian_set="mixed_set")
    v = learning.test_bounded_rank(ExactGaussianSource(s), cfg, RngStream(7))
    assert v.verdict == learning.CASE_A


def test_local_tomography(rng):
    vac = ExactGaussianSource(states.vacuum(2))
    rho = learning.local_full_tomography(vac, 1, 0.1, 0.1, RngStream(8))
    assert dense.state_metrics(rho, dense.computational_basis(1, [0])).trace_dist < 0.1

    mm = ExactGaussianSource(states.product_state([0, 0, 0]))
    rho2 = learning.local_full_tomography(mm, 2, 0.1, 0.1, RngStream(9))
    assert dense.state_metrics(rho2, dense.maximally_mixed(2)).trace_dist < 0.1

    with pytest.raises(TooManyLocalModes):
        learning.local_full_tomography(vac, 7, 0.1, 0.1, RngStream(10))


def test_local_tomography_matches_partial_trace(rng):
    # oracle: exact dense partial trace of the rotated state
    hits = 0
    for t in range(20):
        s = states.random_gaussian_state(3, "mixed", rng)
        src = ExactGaussianSource(s)
        q = skew.random_orthogonal(6, rng)
        rho_hat = learning.local_full_tomography(src, 1, 0.15, 0.1, RngStream(11, (t,)),
                                                 rotation=q)
        truth = dense.partial_trace(
            dense.gaussian_to_dense(states.rotate(s, q)), 1
        )
        if dense.state_metrics(rho_hat, truth).trace_dist <= 0.15:
            hits += 1
    assert hits >= 18  # 1 - delta with slack


def test_reduce_identity_testing():
    mm = ExactGaussianSource(states.product_state([0, 0, 0]))
    verdict, shots = learning.reduce_identity_testing(mm, 0.5, 0.1, RngStream(12))
    assert verdict == learning.MAXIMALLY_MIXED
    assert shots > 0
    vac = ExactGaussianSource(states.vacuum(3))
    verdict2, _ = learning.reduce_identity_testing(vac, 0.5, 0.1, RngStream(13))
    assert verdict2 == learning.FAR_FROM_MAXIMALLY_MIXED


def test_reduce_identity_budget_overflow():
    from freeferm.errors import BudgetOverflow

    mm = ExactGaussianSource(states.product_state([0, 0, 0]))
    with pytest.raises(BudgetOverflow):
        learning.reduce_identity_testing(mm, 0.05, 0.1, RngStream(14), shot_cap=1000)


def test_tomograph_pure(rng):
    s = states.random_gaussian_state(3, "pure", rng)
    src = ExactGaussianSource(s)
    exact = learning.tomograph_pure(src, 0.2, 0.1, RngStream(15), scheme="exact")
    err0 = dense.state_metrics(
        dense.gaussian_to_dense(exact.learned), dense.gaussian_to_dense(s)
    ).trace_dist
    assert err0 < 1e-8
    assert exact.learned.is_pure(tol=1e-9)

    sampled = learning.tomograph_pure(src, 0.25, 0.1, RngStream(16))
    err = dense.state_metrics(
        dense.gaussian_to_dense(sampled.learned), dense.gaussian_to_dense(s)
    ).trace_dist
    assert err <= 0.25
    assert sampled.shots_used == learning.pure_tomography_shots(3, 0.25, 0.1)


def test_tomograph_mixed(rng):
    s = states.random_gaussian_state(3, "mixed", rng)
    src = ExactGaussianSource(s)
    exact = learning.tomograph_mixed(src, 0.2, 0.1, RngStream(17), scheme="exact")
    err0 = dense.state_metrics(
        dense.gaussian_to_dense(exact.learned), dense.gaussian_to_dense(s)
    ).trace_dist
    assert err0 < 1e-8

    sampled = learning.tomograph_mixed(src, 0.2, 0.1, RngStream(18))
    err = dense.state_metrics(
        dense.gaussian_to_dense(sampled.learned), dense.gaussian_to_dense(s)
    ).trace_dist
    assert err <= 0.2
    assert sampled.shots_used == learning.mixed_tomography_shots(3, 0.2, 0.1)


def test_tomography_error_scaling(rng):
    # quadrupling the shot budget should halve the median dense error
    s = states.random_gaussian_state(3, "pure", rng)
    src = ExactGaussianSource(s)
    rho_true = dense.gaussian_to_dense(s)
    grids = [2000, 8000, 32000, 128000]
    medians = []
    for shots in grids:
        errs = []
        for t in range(15):
            est = learning.estimate_gamma(src, 0.0, 0.5, "commuting",
                                          RngStream(50, (shots, t)), total_shots=shots)
            nf = skew.normal_form(est.gamma_hat).with_lambdas(np.ones(3))
            learned = states.from_correlation(nf.reconstruct())
            errs.append(dense.state_metrics(
                dense.gaussian_to_dense(learned), rho_true
            ).trace_dist)
        medians.append(np.median(errs))
    slope = np.polyfit(np.log(grids), np.log(medians), 1)[0]
    assert -0.6 <= slope <= -0.4


def test_clipping_rule():
    # an injected estimate with a normal eigenvalue above 1 snaps to exactly 1
    gamma_hat = 1.03 * skew.canonical_lambda(2)
    learned = states.clip_to_valid(gamma_hat)
    assert np.all(learned.lambdas == 1.0)


def test_tomography_learns_gaussianification(rng):
    src = DenseSource(dense.ghz3())
    report = learning.tomograph_mixed(src, 0.2, 0.1, RngStream(19))
    g = dense.gaussianification(dense.ghz3()).g
    err = dense.state_metrics(
        dense.gaussian_to_dense(report.learned), dense.gaussian_to_dense(g)
    ).trace_dist
    assert err <= 0.2


def test_robustness_zero_noise_matches_tomograph(rng):
    base = states.random_gaussian_state(3, "mixed", rng)
    res = learning.robustness_experiment(base, ("depolarizing", 0.0), 0.3, 0.1,
                                         RngStream(20))
    direct = learning.tomograph_mixed(ExactGaussianSource(base), 0.3, 0.1, RngStream(20))
    assert np.array_equal(res.learned.corr.mat, direct.learned.corr.mat)
    assert res.promise_value < 1e-8


def test_robustness_depolarizing(rng):
    base = states.random_gaussian_state(3, "mixed", rng)
    res = learning.robustness_experiment(base, ("depolarizing", 0.02), 0.3, 0.1,
                                         RngStream(21))
    assert res.dense_error <= 0.3


def test_robustness_trace_perturbation(rng):
    base = states.random_gaussian_state(2, "mixed", rng)
    res = learning.robustness_experiment(base, ("trace_perturbation", 0.02), 0.3, 0.1,
                                         RngStream(22))
    assert res.dense_error <= 0.3
    assert res.promise_value <= 0.3 / 6.0


def test_robustness_promise_not_certified(rng):
    base = states.random_gaussian_state(2, "pure", rng)
    with pytest.raises(PromiseNotCertified):
        learning.robustness_experiment(base, ("trace_perturbation", 0.9), 0.2, 0.1,
                                       RngStream(23))


def test_relative_entropy_promise(rng):
    base = states.random_gaussian_state(3, "mixed", rng)
    res = learning.robustness_experiment(base, ("depolarizing", 0.02), 0.3, 0.1,
                                         RngStream(24), promise="relative_entropy")
    assert res.promise_value <= 0.09
    assert res.dense_error <= 0.3
