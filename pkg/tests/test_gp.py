"""Kernel, hyperparameter fitting, and posterior tests for the surrogate."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy.spatial.distance import pdist, squareform

from cellbo.gp import (
    NOISE_VAR_FLOOR,
    GpFitError,
    GpHyper,
    GpModel,
    ObservationDataset,
    _neg_log_map,
    fit,
    kernel_matern52,
    kernel_matrix,
    matern52,
)


def make_dataset(rng, n, d, box=(0.0, 1.0), values=None):
    lo = np.full(d, box[0])
    hi = np.full(d, box[1])
    points = rng.uniform(box[0], box[1], (n, d))
    if values is None:
        values = rng.normal(0.0, 2.0, n)
    return ObservationDataset(points=points, values=values, box_lo=lo, box_hi=hi)


def dense_posterior_oracle(model, q):
    """Explicit-inverse posterior on the model's effective covariance.

    Independently recomputes the standardized-space mean/variance with
    ``np.linalg.inv`` and the model's stabilizing diagonal, then maps
    back to original units.
    """
    x, y = model.x_norm, model.y_std
    h = model.hyper
    n = x.shape[0]
    cov = kernel_matrix(x, x, h) + (h.noise_var + model.jitter_var) * np.eye(n)
    cov_inv = np.linalg.inv(cov)
    k_vec = np.array([kernel_matern52(model.norm.normalize_x(q), xi, h) for xi in x])
    mean_std = k_vec @ cov_inv @ y
    var_std = h.signal_var - k_vec @ cov_inv @ k_vec
    return (
        model.norm.destandardize_mean(mean_std),
        model.norm.destandardize_var(var_std),
    )


class TestKernel:
    def test_zero_distance_gives_signal_var(self):
        h = GpHyper(0.3, 2.5, 0.01)
        u = np.array([0.2, 0.7, 0.1])
        assert kernel_matern52(u, u, h) == pytest.approx(2.5)

    def test_monotone_decay(self):
        r = np.linspace(0.0, 20.0, 400)
        k = matern52(r)
        assert np.all(np.diff(k) < 0)
        assert k[-1] < 1e-8

    def test_matches_independent_closed_form(self):
        h = GpHyper(0.42, 1.7, 0.05)
        rng = np.random.default_rng(1)
        for _ in range(30):
            u = rng.uniform(0, 1, 5)
            v = rng.uniform(0, 1, 5)
            r = math.sqrt(sum((a - b) ** 2 for a, b in zip(u, v))) / h.lengthscale
            expected = (
                h.signal_var
                * (1.0 + math.sqrt(5) * r + 5.0 * r * r / 3.0)
                * math.exp(-math.sqrt(5) * r)
            )
            assert kernel_matern52(u, v, h) == pytest.approx(expected, rel=1e-12)

    def test_matrix_agrees_with_pairwise(self):
        h = GpHyper(0.3, 1.0, 0.01)
        rng = np.random.default_rng(2)
        a = rng.uniform(0, 1, (4, 3))
        b = rng.uniform(0, 1, (5, 3))
        mat = kernel_matrix(a, b, h)
        for i in range(4):
            for j in range(5):
                assert mat[i, j] == pytest.approx(kernel_matern52(a[i], b[j], h))


class TestDataset:
    def test_append_and_validation(self):
        rng = np.random.default_rng(3)
        ds = make_dataset(rng, 4, 2)
        ds.append([0.5, 0.5], 1.0)
        assert len(ds) == 5
        with pytest.raises(ValueError):
            ds.append([1.5, 0.5], 1.0)
        with pytest.raises(ValueError):
            ObservationDataset(
                points=np.empty((0, 2)),
                values=np.empty(0),
                box_lo=np.zeros(2),
                box_hi=np.ones(2),
            )

    def test_csv_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(4)
        ds = make_dataset(rng, 6, 3)
        path = tmp_path / "dataset.csv"
        ds.to_csv(path)
        back = ObservationDataset.from_csv(path, ds.box_lo, ds.box_hi)
        assert_array_equal(back.points, ds.points)
        assert_array_equal(back.values, ds.values)

    def test_normalization_invertible(self):
        rng = np.random.default_rng(5)
        ds = make_dataset(rng, 5, 4, box=(-90.0, 90.0))
        norm = ds.normalization()
        u = norm.normalize_x(ds.points)
        assert np.all((u >= 0) & (u <= 1))
        assert_allclose(norm.denormalize_x(u), ds.points, rtol=1e-12)


class TestFit:
    def test_recovers_synthetic_lengthscale(self):
        rng = np.random.default_rng(6)
        n, d, true_ell, true_noise = 200, 2, 0.2, 0.01
        x = rng.uniform(0, 1, (n, d))
        cov = matern52(squareform(pdist(x)) / true_ell) + true_noise * np.eye(n)
        y = rng.multivariate_normal(np.zeros(n), cov)
        ds = ObservationDataset(
            points=x, values=y, box_lo=np.zeros(d), box_hi=np.ones(d)
        )
        h = fit(ds)
        assert true_ell / 2 <= h.lengthscale <= true_ell * 2

    def test_constant_outputs_collapse(self):
        # degenerate zero-variance data: the noise variance hits its
        # floor; the signal variance shrinks as far as the log-normal
        # prior allows (the likelihood is flat in it for all-zero data,
        # so the prior keeps it away from the hard floor)
        rng = np.random.default_rng(7)
        ds = make_dataset(rng, 200, 2, values=np.full(200, 3.7))
        h = fit(ds)
        assert h.noise_var == pytest.approx(NOISE_VAR_FLOOR)
        assert h.signal_var < 0.5

    def test_output_scale_invariance(self):
        rng = np.random.default_rng(8)
        ds = make_dataset(rng, 40, 3)
        doubled = ObservationDataset(
            points=ds.points.copy(),
            values=2.0 * ds.values,
            box_lo=ds.box_lo,
            box_hi=ds.box_hi,
        )
        h1 = fit(ds)
        h2 = fit(doubled)
        assert h1 == h2

    def test_requires_two_observations(self):
        rng = np.random.default_rng(9)
        with pytest.raises(ValueError):
            fit(make_dataset(rng, 1, 2))

    def test_failure_returns_previous_or_raises(self):
        rng = np.random.default_rng(10)
        ds = make_dataset(rng, 3, 2, values=np.array([np.inf, 1.0, 2.0]))
        keep = GpHyper(0.5, 1.0, 0.01)
        assert fit(ds, previous=keep) == keep
        with pytest.raises(GpFitError):
            fit(ds)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        ds = make_dataset(rng, 25, 3)
        norm = ds.normalization()
        dist = squareform(pdist(norm.normalize_x(ds.points)))
        y = norm.standardize_y(ds.values)
        mu = np.log([0.3, 1.0, 0.05])
        z = np.log([0.7, 1.3, 0.02])
        _, grad = _neg_log_map(z, dist, y, mu, 1.0)
        eps = 1e-6
        for j in range(3):
            zp, zm = z.copy(), z.copy()
            zp[j] += eps
            zm[j] -= eps
            fp, _ = _neg_log_map(zp, dist, y, mu, 1.0)
            fm, _ = _neg_log_map(zm, dist, y, mu, 1.0)
            assert grad[j] == pytest.approx((fp - fm) / (2 * eps), rel=1e-4)


class TestPosterior:
    def test_interpolates_at_noise_floor(self):
        rng = np.random.default_rng(12)
        ds = make_dataset(rng, 8, 3)
        model = GpModel(ds, GpHyper(0.3, 1.0, NOISE_VAR_FLOOR))
        mu, _ = model.posterior(ds.points)
        std_err = np.abs(model.norm.standardize_y(mu) - model.y_std)
        assert np.all(std_err <= 1e-4)

    def test_reverts_to_prior_far_away(self):
        rng = np.random.default_rng(13)
        ds = make_dataset(rng, 6, 2, box=(0.0, 100.0))
        h = GpHyper(0.01, 2.0, 0.01)  # tiny lengthscale: queries decorrelate
        model = GpModel(ds, h)
        mu, var = model.posterior(np.array([55.5, 44.4]))
        assert mu == pytest.approx(model.norm.y_mean, abs=1e-6)
        assert var == pytest.approx(model.norm.destandardize_var(h.signal_var), rel=1e-6)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(14)
        for trial in range(20):
            n = int(rng.integers(2, 9))
            ds = make_dataset(rng, n, 4, box=(-3.0, 7.0))
            h = GpHyper(
                lengthscale=float(rng.uniform(0.1, 1.0)),
                signal_var=float(rng.uniform(0.5, 3.0)),
                noise_var=float(rng.uniform(1e-4, 0.1)),
            )
            model = GpModel(ds, h)
            for _ in range(5):
                q = rng.uniform(-3.0, 7.0, 4)
                mu, var = model.posterior(q)
                mu_o, var_o = dense_posterior_oracle(model, q)
                assert mu == pytest.approx(mu_o, rel=1e-8, abs=1e-10)
                assert var == pytest.approx(var_o, rel=1e-8, abs=1e-10)

    def test_variance_bounded_by_prior(self):
        rng = np.random.default_rng(15)
        ds = make_dataset(rng, 30, 3)
        h = GpHyper(0.4, 1.5, 0.01)
        model = GpModel(ds, h)
        q = rng.uniform(0, 1, (200, 3))
        _, var = model.posterior(q)
        assert np.all(var <= model.norm.destandardize_var(h.signal_var) + 1e-10)
        assert np.all(var >= 0.0)

    def test_mean_linear_in_values(self):
        rng = np.random.default_rng(16)
        points = rng.uniform(0, 1, (12, 2))
        y1 = rng.normal(0, 2, 12)
        y2 = rng.normal(0, 2, 12)
        a, b = 0.6, -1.7
        h = GpHyper(0.5, 1.0, 0.05)
        box = (np.zeros(2), np.ones(2))

        def mean_at(values, q):
            ds = ObservationDataset(
                points=points, values=values, box_lo=box[0], box_hi=box[1]
            )
            return GpModel(ds, h).posterior(q)[0]

        q = rng.uniform(0, 1, (10, 2))
        combo = np.array([mean_at(a * y1 + b * y2, qi) for qi in q])
        parts = np.array(
            [a * mean_at(y1, qi) + b * mean_at(y2, qi) for qi in q]
        )
        assert_allclose(combo, parts, rtol=1e-8, atol=1e-10)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(17)
        ds = make_dataset(rng, 10, 3)
        perm = rng.permutation(10)
        shuffled = ObservationDataset(
            points=ds.points[perm],
            values=ds.values[perm],
            box_lo=ds.box_lo,
            box_hi=ds.box_hi,
        )
        h = GpHyper(0.4, 1.2, 0.02)
        q = rng.uniform(0, 1, (7, 3))
        mu1, var1 = GpModel(ds, h).posterior(q)
        mu2, var2 = GpModel(shuffled, h).posterior(q)
        assert_allclose(mu1, mu2, rtol=1e-10, atol=1e-12)
        assert_allclose(var1, var2, rtol=1e-10, atol=1e-12)

    def test_added_observation_never_raises_variance(self):
        # raw-space oracle check of information monotonicity at fixed
        # hyperparameters and noise
        rng = np.random.default_rng(18)
        h = GpHyper(0.4, 1.0, 0.01)
        for _ in range(10):
            n = int(rng.integers(3, 8))
            x = rng.uniform(0, 1, (n, 3))
            x_new = rng.uniform(0, 1, (n + 1, 3))
            x_new[:n] = x

            def oracle_var(pts, q):
                cov = kernel_matrix(pts, pts, h) + h.noise_var * np.eye(len(pts))
                k_vec = kernel_matrix(pts, q[None, :], h)[:, 0]
                return h.signal_var - k_vec @ np.linalg.inv(cov) @ k_vec

            for _ in range(10):
                q = rng.uniform(0, 1, 3)
                assert oracle_var(x_new, q) <= oracle_var(x, q) + 1e-10

    def test_cholesky_reconstructs_covariance(self):
        rng = np.random.default_rng(19)
        ds = make_dataset(rng, 20, 3)
        model = GpModel(ds, GpHyper(0.3, 1.0, 0.05))
        rebuilt = model.chol @ model.chol.T
        assert_allclose(rebuilt, model.noisy_cov, rtol=1e-8)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(20)
        ds = make_dataset(rng, 15, 2)
        model = GpModel(ds, GpHyper(0.5, 1.0, 0.02))
        q = rng.uniform(0, 1, (9, 2))
        mu_b, var_b = model.posterior(q)
        for i in range(9):
            mu_s, var_s = model.posterior(q[i])
            assert mu_s == pytest.approx(mu_b[i], rel=1e-14)
            assert var_s == pytest.approx(var_b[i], rel=1e-14)
