import math

import numpy as np
import pytest

from conftest import SPECS, random_whitened_dataset
from ebreg import (
    Dataset,
    MCConfig,
    RegularizerSpec,
    asymptote,
    log_z,
    mc_curve,
    mc_log_z,
    reduce,
    sample_prior,
)
from ebreg.errors import EbregError


class TestSamplers:
    def test_gaussian_moments(self):
        w = sample_prior(SPECS["ridge"], 2, 200_000, seed=1)
        se = math.sqrt(1.0 / len(w))
        assert np.max(np.abs(w.mean(axis=0))) < 5 * se
        cov = w.T @ w / len(w)
        assert np.max(np.abs(cov - np.eye(2))) < 5 * math.sqrt(3.0 / len(w))

    def test_laplace_variance_two(self):
        w = sample_prior(SPECS["lasso"], 1, 200_000, seed=2)
        # Var of w^2 for Laplace: E w^4 - (E w^2)^2 = 24 - 4 = 20
        se = math.sqrt(20.0 / len(w))
        assert abs(float(np.mean(w**2)) - 2.0) < 5 * se

    def test_joint_norm_radius_gamma_mean(self):
        m = 3
        w = sample_prior(SPECS["group-lasso"], m, 200_000, seed=3)
        radii = np.linalg.norm(w, axis=1)
        # Gamma(shape m, rate 1): mean m, variance m
        se = math.sqrt(m / len(w))
        assert abs(float(radii.mean()) - m) < 5 * se

    def test_gamma_radius_matches_sum_of_exponentials(self):
        # for integer order the radial law equals a sum of m unit exponentials
        m = 3
        w = sample_prior(SPECS["group-lasso"], m, 120_000, seed=4)
        radii = np.sort(np.linalg.norm(w, axis=1))
        rng = np.random.default_rng(5)
        ref = np.sort(rng.exponential(size=(120_000, m)).sum(axis=1))
        # compare quantiles well inside the bulk
        qs = np.linspace(0.02, 0.98, 25)
        got = np.quantile(radii, qs)
        want = np.quantile(ref, qs)
        np.testing.assert_allclose(got, want, rtol=0.03)

    def test_off_diagonal_covariance_vanishes(self):
        for spec in SPECS.values():
            w = sample_prior(spec, 3, 150_000, seed=6)
            cov = w.T @ w / len(w)
            off = cov[~np.eye(3, dtype=bool)]
            # crude SE bound for cross moments
            se = np.sqrt(np.mean(w**4)) / math.sqrt(len(w))
            assert np.max(np.abs(off)) < 4 * se

    def test_custom_requires_sampler(self):
        spec = RegularizerSpec.custom(
            h=lambda w: np.sum(np.abs(np.asarray(w)), axis=-1), kappa=1.0
        )
        with pytest.raises(ValueError, match="custom_sampler"):
            sample_prior(spec, 2, 10, seed=0)

    def test_chunked_draws_deterministic(self):
        a = sample_prior(SPECS["ridge"], 2, 5000, seed=9, chunk_size=1000)
        b = sample_prior(SPECS["ridge"], 2, 5000, seed=9, chunk_size=1000)
        np.testing.assert_array_equal(a, b)


class TestMCLogZ:
    def test_large_strength_hits_anchor(self, rng):
        ds = random_whitened_dataset(rng, 6, 3)
        spec = SPECS["group-lasso"]
        est = mc_log_z(ds, spec, 1e12, MCConfig(samples=5000, seed=0))
        asy = asymptote(ds, spec)
        assert est.log_z == pytest.approx(asy.log_z_inf, abs=1e-6)

    def test_matches_closed_form_within_3se(self, rng):
        # reduced data (2, 0, 0) realized through the whitened identity design
        n = 3
        ds = Dataset(design=math.sqrt(n) * np.eye(n), response=np.array([2.0, 0.0, 0.0]))
        spec = SPECS["group-lasso"]
        problem = reduce(ds)
        np.testing.assert_allclose(problem.y_tilde, [2.0, 0.0, 0.0])
        config = MCConfig(samples=1_000_000, seed=21)
        for lam in (0.7, 1.0, 5.0):
            est = mc_log_z(ds, spec, lam, config)
            closed = log_z(problem, spec, lam)
            assert abs(est.log_z - closed) <= 3 * est.std_error_log
            assert est.effective_samples > 1000

    def test_matches_closed_form_random_whitened(self, rng):
        ds = random_whitened_dataset(rng, 6, 3)
        spec = SPECS["group-lasso"]
        problem = reduce(ds)
        offset = -0.5 * (float(ds.response @ ds.response) - problem.y_norm**2)
        config = MCConfig(samples=400_000, seed=21)
        for lam in (0.7, 5.0):
            est = mc_log_z(ds, spec, lam, config)
            closed = log_z(problem, spec, lam) + offset
            assert abs(est.log_z - closed) <= 3 * est.std_error_log

    def test_chunking_invariant_bitwise(self, rng):
        ds = random_whitened_dataset(rng, 5, 2)
        config = MCConfig(samples=64_000, seed=5, chunk_size=8_000)
        one = mc_log_z(ds, SPECS["lasso"], 2.0, config, workers=1)
        eight = mc_log_z(ds, SPECS["lasso"], 2.0, config, workers=8)
        assert one.log_z == eight.log_z
        assert one.std_error_log == eight.std_error_log

    def test_rejects_bad_lambda(self, rng):
        ds = random_whitened_dataset(rng, 4, 2)
        with pytest.raises(ValueError):
            mc_log_z(ds, SPECS["ridge"], 0.0, MCConfig(samples=10, seed=0))

    def test_convergence_rate_halves_when_n_quadruples(self, rng):
        ds = random_whitened_dataset(rng, 4, 2)
        spec = SPECS["lasso"]
        ratios = []
        for seed in range(10):
            small = mc_log_z(ds, spec, 1.0, MCConfig(samples=100_000, seed=seed))
            large = mc_log_z(ds, spec, 1.0, MCConfig(samples=400_000, seed=seed + 100))
            ratios.append(small.std_error_log / large.std_error_log)
        assert 1.8 <= float(np.mean(ratios)) <= 2.2


class TestMCCurve:
    def test_singleton_grid_equals_pointwise(self, rng):
        ds = random_whitened_dataset(rng, 5, 2)
        config = MCConfig(samples=20_000, seed=8)
        curve = mc_curve(ds, SPECS["ridge"], [1.5], config)
        point = mc_log_z(ds, SPECS["ridge"], 1.5, config)
        assert curve.points[0].log_z == point.log_z
        assert curve.std_errors[0] == point.std_error_log

    def test_common_samples_keep_monotone_curve_smooth(self, rng):
        # divergent-branch data: the closed form is nondecreasing and the
        # common-random-number curve must not show spurious interior modes
        y = rng.standard_normal(3)
        y *= 0.6 * math.sqrt(3) / np.linalg.norm(y)
        ds = Dataset(design=math.sqrt(3) * np.eye(3), response=y)
        config = MCConfig(samples=1_000_000, seed=12)
        curve = mc_curve(ds, SPECS["group-lasso"], np.logspace(-2, 2, 21), config)
        from ebreg import scan_unimodal

        assert scan_unimodal(curve.lambdas, curve.log_zs) <= 1

    def test_csv_has_std_error_column(self, rng):
        ds = random_whitened_dataset(rng, 4, 2)
        curve = mc_curve(ds, SPECS["ridge"], [0.5, 1.0], MCConfig(samples=1000, seed=0))
        lines = curve.to_csv().strip().split("\n")
        assert lines[0] == "lambda,log_z,branch,std_error_log"
        assert all(",mc," in line for line in lines[1:])

    def test_empty_grid_rejected(self, rng):
        ds = random_whitened_dataset(rng, 4, 2)
        with pytest.raises(ValueError):
            mc_curve(ds, SPECS["ridge"], [], MCConfig(samples=10, seed=0))


def test_config_validation():
    with pytest.raises(ValueError):
        MCConfig(samples=0, seed=1)
    cfg = MCConfig(samples=10, seed=1, chunk_size=64)
    assert cfg.chunk_size == 10  # clamped to the sample count
    assert [s for _, s in MCConfig(samples=25, seed=0, chunk_size=10).chunks()] == [10, 10, 5]
