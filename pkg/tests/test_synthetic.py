from dataclasses import replace

import numpy as np
import pytest

import metakrr as mk
from metakrr.kernels import Gaussian, Polynomial
from metakrr.regression import TaskRegressor, SplitTaskFit, fit_split
from metakrr.subspace import pretrain
from metakrr.synthetic import (
    davis_kahan_check,
    exact_chat_minus_cn,
    exact_sin_theta,
    excess_risk,
    generate_world,
    population_covariance_eigenvalues,
    sample_task,
    true_subspace_model,
)

GAUSS = Gaussian(1.0)


def exact_fits(world, lam=1.0):
    """Split fits whose both halves equal the true task functions exactly."""
    fits = []
    for i in range(world.n_tasks):
        reg = TaskRegressor(
            kernel=world.kernel,
            lam=lam,
            anchors=world.anchors,
            dual_coeffs=world.task_coeffs[i].copy(),
            rkhs_norm_sq=float(
                world.task_coeffs[i] @ world.gram_anchors @ world.task_coeffs[i]
            ),
        )
        fits.append(SplitTaskFit(first_half=reg, second_half=reg))
    return fits


class TestGenerateWorld:
    def test_deterministic_in_seed(self):
        w1 = generate_world(d=3, s_true=2, n_tasks=5, kernel=GAUSS, seed=42)
        w2 = generate_world(d=3, s_true=2, n_tasks=5, kernel=GAUSS, seed=42)
        assert np.array_equal(w1.anchors, w2.anchors)
        assert np.array_equal(w1.task_coeffs, w2.task_coeffs)
        assert np.array_equal(w1.target_coeffs, w2.target_coeffs)

    def test_minimal_world(self):
        w = generate_world(d=1, s_true=1, n_tasks=1, kernel=GAUSS, seed=0)
        assert w.task_coeffs.shape == (1, 1)
        assert w.task_coeffs[0, 0] != 0.0

    def test_coefficients_have_full_rank(self):
        w = generate_world(d=2, s_true=3, n_tasks=20, kernel=GAUSS, seed=5)
        svals = np.linalg.svd(w.task_coeffs, compute_uv=False)
        assert svals.shape[0] == 3
        assert svals[-1] > 1e-8 * svals[0]

    def test_normalization_gives_unit_norms(self):
        w = generate_world(d=2, s_true=2, n_tasks=6, kernel=GAUSS, seed=6)
        norms = np.einsum("ik,kl,il->i", w.task_coeffs, w.gram_anchors, w.task_coeffs)
        assert np.allclose(norms, 1.0, atol=1e-10)

    def test_y_inf_bounds_samples(self):
        w = generate_world(d=2, s_true=2, n_tasks=4, kernel=GAUSS, sigma_y=0.7, seed=7)
        for idx in [0, 1, "T"]:
            _, Y = sample_task(w, idx, 500, subseed=3)
            assert np.all(np.abs(Y) <= w.y_inf)

    def test_invalid_sizes(self):
        with pytest.raises(ValueError):
            generate_world(d=2, s_true=3, n_tasks=2, kernel=GAUSS, seed=0)


class TestSampleTask:
    def test_noiseless_sampling_is_exact(self):
        w = generate_world(d=2, s_true=2, n_tasks=3, kernel=GAUSS, sigma_y=0.0, seed=1)
        X, Y = sample_task(w, 1, 50, subseed=0)
        assert np.array_equal(Y, w.task_values(1, X))

    def test_zero_target_gives_pure_noise(self):
        w = generate_world(d=2, s_true=2, n_tasks=3, kernel=GAUSS, sigma_y=0.2, seed=2)
        w = replace(w, target_coeffs=np.zeros(2))
        _, Y = sample_task(w, "T", 200, subseed=0)
        assert np.all(np.abs(Y) <= 0.2)

    def test_task_values_match_section_sum_loop(self):
        w = generate_world(d=2, s_true=3, n_tasks=4, kernel=GAUSS, seed=3)
        X = w.dist.sample(np.random.default_rng(0), 10, 2)
        vals = w.task_values(2, X)
        for j, x in enumerate(X):
            manual = sum(
                w.task_coeffs[2, k] * GAUSS.eval(w.anchors[k], x) for k in range(3)
            )
            assert vals[j] == pytest.approx(manual, abs=1e-12)

    def test_streams_are_independent_of_order(self):
        w = generate_world(d=2, s_true=2, n_tasks=3, kernel=GAUSS, seed=4)
        X1, Y1 = sample_task(w, 2, 10, subseed=0)
        sample_task(w, 0, 99, subseed=5)  # interleaved draw must not matter
        X2, Y2 = sample_task(w, 2, 10, subseed=0)
        assert np.array_equal(X1, X2) and np.array_equal(Y1, Y2)

    def test_bad_index(self):
        w = generate_world(d=2, s_true=2, n_tasks=3, kernel=GAUSS, seed=4)
        with pytest.raises(ValueError):
            sample_task(w, 3, 5)
        with pytest.raises(ValueError):
            sample_task(w, "X", 5)


class TestExactSinTheta:
    def test_true_subspace_recovers_zero(self):
        # float64 floor for this closed form is ~sqrt(s*eps); 1e-7 covers it
        w = generate_world(d=2, s_true=2, n_tasks=5, kernel=GAUSS, seed=8)
        assert exact_sin_theta(w, true_subspace_model(w)) < 1e-7

    def test_orthogonal_single_directions(self):
        # model span from a section far away from the world anchor: the two
        # one-dimensional spans are nearly orthogonal, sin-theta near 1
        w = generate_world(d=2, s_true=1, n_tasks=1, kernel=GAUSS, seed=9)
        far = w.anchors + 10.0
        reg = TaskRegressor(GAUSS, 1.0, far, np.ones(1), 1.0)
        model_far = pretrain_like_single(reg)
        got = exact_sin_theta(w, model_far)
        overlap = GAUSS.eval(w.anchors[0], far[0])  # explicit Gram computation
        expected = np.sqrt(1.0 - overlap**2)
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(1.0, abs=1e-3)

    def test_polynomial_world_matches_explicit_projector(self):
        kernel = Polynomial(degree=1, offset=1.0, radius=3.0)
        w = generate_world(d=3, s_true=2, n_tasks=8, kernel=kernel, sigma_y=0.2, seed=10)
        datasets = [sample_task(w, i, 40, subseed=0) for i in range(8)]
        model = pretrain(kernel, datasets, 1e-3, 2)
        got = exact_sin_theta(w, model)
        V = np.column_stack([
            kernel.feature_map(f.second_half.anchors).T @ f.second_half.dual_coeffs
            for f in model.source_fits
        ]) @ model.beta
        Q, _ = np.linalg.qr(V)
        P_true = kernel.feature_map(w.anchors).T @ w.gram_inv_sqrt
        resid = P_true - Q @ (Q.T @ P_true)
        assert got == pytest.approx(np.linalg.norm(resid), abs=1e-8)

    def test_kernel_mismatch(self):
        w = generate_world(d=2, s_true=2, n_tasks=5, kernel=GAUSS, seed=8)
        w2 = generate_world(d=2, s_true=2, n_tasks=5, kernel=Gaussian(0.5), seed=8)
        with pytest.raises(ValueError, match="kernel"):
            exact_sin_theta(w, true_subspace_model(w2))


def pretrain_like_single(reg):
    """SubspaceModel holding a single normalized basis function."""
    from metakrr.subspace import SubspaceModel, assemble_jq, solve_subspace

    fits = [SplitTaskFit(first_half=reg, second_half=reg)]
    J, Q = assemble_jq(fits)
    alpha, beta, gammas = solve_subspace(J, Q, 1)
    return SubspaceModel(s=1, kernel=reg.kernel, lam=reg.lam, source_fits=fits,
                         beta=beta, alpha=alpha, singular_values=gammas,
                         J=J, Q=Q, spectrum=gammas)


class TestExactChatMinusCn:
    def test_exact_fits_give_zero(self):
        w = generate_world(d=2, s_true=2, n_tasks=5, kernel=GAUSS, seed=11)
        assert exact_chat_minus_cn(w, exact_fits(w), 1.0) < 1e-6

    def test_zero_fit_gives_population_norm(self):
        w = generate_world(d=2, s_true=1, n_tasks=1, kernel=GAUSS, seed=12)
        reg = TaskRegressor(GAUSS, 1.0, w.anchors, np.zeros(1), 0.0)
        fits = [SplitTaskFit(first_half=reg, second_half=reg)]
        norm_f1_sq = float(w.task_coeffs[0] @ w.gram_anchors @ w.task_coeffs[0])
        assert exact_chat_minus_cn(w, fits, 1.0) == pytest.approx(norm_f1_sq, rel=1e-10)

    def test_polynomial_world_matches_explicit_matrices(self):
        kernel = Polynomial(degree=1, offset=1.0, radius=3.0)
        w = generate_world(d=3, s_true=2, n_tasks=6, kernel=kernel, sigma_y=0.3, seed=13)
        n = 20
        datasets = [sample_task(w, i, 2 * n, subseed=0) for i in range(6)]
        lam = 0.01
        fits = [fit_split(kernel, X, Y, lam) for X, Y in datasets]
        got = exact_chat_minus_cn(w, fits, lam)
        # explicit k x k matrices
        def weights(reg):
            return kernel.feature_map(reg.anchors).T @ reg.dual_coeffs
        C_hat = sum(
            np.outer(weights(f.first_half), weights(f.second_half)) for f in fits
        ) / 6.0
        W_true = kernel.feature_map(w.anchors).T @ w.task_coeffs.T  # k x N
        C_N = W_true @ W_true.T / 6.0
        assert got == pytest.approx(np.linalg.norm(C_hat - C_N), abs=1e-8)

    def test_lambda_mismatch_rejected(self):
        w = generate_world(d=2, s_true=2, n_tasks=3, kernel=GAUSS, seed=14)
        datasets = [sample_task(w, i, 20, subseed=0) for i in range(3)]
        fits = [fit_split(GAUSS, X, Y, 0.05) for X, Y in datasets]
        with pytest.raises(ValueError):
            exact_chat_minus_cn(w, fits, 0.06)


class TestDavisKahan:
    def test_perfect_recovery(self):
        # noiseless labels and a vanishing ridge: the fitted operator nearly
        # equals the population one and the learned span nearly equals the truth
        w = generate_world(d=2, s_true=2, n_tasks=5, kernel=GAUSS, sigma_y=0.0, seed=15)
        datasets = [sample_task(w, i, 120, subseed=0) for i in range(5)]
        lam = 1e-7
        fits = [fit_split(GAUSS, X, Y, lam) for X, Y in datasets]
        model = pretrain(GAUSS, datasets, lam, 2)
        res = davis_kahan_check(w, model, fits, lam)
        assert res.lhs < 1e-2
        assert res.holds

    def test_rhs_formula_on_handmade_spectrum(self):
        w = generate_world(d=2, s_true=2, n_tasks=4, kernel=GAUSS, seed=16)
        gammas = population_covariance_eigenvalues(w)
        g1, gs = gammas[0], gammas[-1]
        datasets = [sample_task(w, i, 30, subseed=0) for i in range(4)]
        fits = [fit_split(GAUSS, X, Y, 0.05) for X, Y in datasets]
        model = pretrain(GAUSS, datasets, 0.05, 2)
        res = davis_kahan_check(w, model, fits, 0.05)
        delta = exact_chat_minus_cn(w, fits, 0.05)
        assert res.rhs == pytest.approx(2.0 / gs**2 * (2.0 * g1 + delta) * delta, rel=1e-12)
        assert res.gamma_1 == pytest.approx(g1) and res.gamma_s == pytest.approx(gs)

    def test_holds_across_seeds(self):
        for seed in range(10):
            w = generate_world(d=2, s_true=2, n_tasks=6, kernel=GAUSS, seed=seed)
            datasets = [sample_task(w, i, 30, subseed=0) for i in range(6)]
            fits = [fit_split(GAUSS, X, Y, 0.02) for X, Y in datasets]
            model = pretrain(GAUSS, datasets, 0.02, 2)
            assert davis_kahan_check(w, model, fits, 0.02).holds


class TestExcessRisk:
    def test_exact_predictor_is_zero(self):
        w = generate_world(d=2, s_true=2, n_tasks=3, kernel=GAUSS, seed=17)
        risk, se = excess_risk(w, lambda X: w.task_values("T", X), 2000, subseed=0)
        assert risk == 0.0 and se == 0.0

    def test_constant_shift(self):
        w = generate_world(d=2, s_true=2, n_tasks=3, kernel=GAUSS, seed=18)
        risk, se = excess_risk(
            w, lambda X: w.task_values("T", X) + 0.5, 10_000, subseed=1
        )
        assert abs(risk - 0.5) <= max(3 * se, 1e-12)

    def test_zero_predictor_consistent_with_larger_run(self):
        w = generate_world(d=2, s_true=2, n_tasks=3, kernel=GAUSS, seed=19)
        r_small, se_small = excess_risk(w, lambda X: np.zeros(len(X)), 2000, subseed=2)
        r_big, se_big = excess_risk(w, lambda X: np.zeros(len(X)), 20_000, subseed=3)
        assert abs(r_small - r_big) <= 3 * (se_small + se_big)


class TestBiasVarianceInstrumentation:
    def test_variance_shrinks_with_tasks_bias_does_not(self):
        # Explicit-feature world: average the empirical operator over many
        # dataset draws; the spread around the mean falls with N, the distance
        # from the mean to the population operator does not.
        kernel = Polynomial(degree=1, offset=1.0, radius=3.0)
        n, lam, draws = 15, 0.05, 30

        def operators(N, seed):
            w = generate_world(d=3, s_true=2, n_tasks=N, kernel=kernel,
                               sigma_y=0.4, seed=seed)
            W_true = kernel.feature_map(w.anchors).T @ w.task_coeffs.T
            C_N = W_true @ W_true.T / N
            mats = []
            for draw in range(draws):
                C_hat = np.zeros_like(C_N)
                for i in range(N):
                    X, Y = sample_task(w, i, 2 * n, subseed=draw)
                    f = fit_split(kernel, X, Y, lam)
                    w1 = kernel.feature_map(f.first_half.anchors).T @ f.first_half.dual_coeffs
                    w2 = kernel.feature_map(f.second_half.anchors).T @ f.second_half.dual_coeffs
                    C_hat += np.outer(w1, w2) / N
                mats.append(C_hat)
            mean = np.mean(mats, axis=0)
            variance_proxy = np.median([np.linalg.norm(m - mean) for m in mats])
            bias_proxy = np.linalg.norm(mean - C_N)
            return variance_proxy, bias_proxy

        var5, bias5 = operators(5, seed=0)
        var50, bias50 = operators(50, seed=0)
        assert var50 < 0.6 * var5  # variance falls roughly like 1/sqrt(N)
        assert bias50 < 3 * bias5 and bias5 < 3 * bias50  # bias N-independent
