import math

import numpy as np
import pytest

from conftest import SPECS
from ebreg import (
    QuadratureConvergenceError,
    RegularizerSpec,
    WhitenedProblem,
    argmax_lambda_oracle,
    log_z_group_lasso,
    polar_log_z_gl3,
    quad_log_z,
    quad_log_z_grid,
    quad_moments,
)
from ebreg.oracle import _BoxEngine, log_norm_constant

# Reference optima frozen from argmax_lambda_oracle (regenerated below).
FROZEN_LASSO_STAR = 0.7072312424590912  # m=1, n=1, y_tilde=2
FROZEN_GL3_STAR = 3.884798159128914  # m=3, n=1, y_tilde=(2,0,0)


def test_flat_penalty_recovers_gaussian_normalizer():
    # with the penalty term switched off the integrand is a pure Gaussian,
    # whose integral over the truncated box is (2 pi)^(m/2)
    for m in (1, 2, 3):
        engine = _BoxEngine(np.array([0.3, -0.2, 0.4][:m]), SPECS["ridge"])
        val = engine._evaluate("A", 8, beta=0.0)
        assert val == pytest.approx(0.5 * m * math.log(2 * math.pi), abs=1e-10)


def test_gl3_reference_point_matches_closed_form():
    problem = WhitenedProblem(np.array([2.0, 0.0, 0.0]), 1, 3)
    res = quad_log_z(problem, SPECS["group-lasso"], 1.0, tol=1e-8)
    assert res.abs_error_estimate <= 1e-8
    assert res.log_value == pytest.approx(log_z_group_lasso(problem, 1.0), abs=1e-7)


def test_lasso_separability_2d_vs_1d():
    spec = SPECS["lasso"]
    joint = WhitenedProblem(np.array([1.2, -0.7]), 2, 2)
    lam = 0.9
    got = quad_log_z(joint, spec, lam, tol=1e-9).log_value
    parts = [
        quad_log_z(WhitenedProblem(np.array([t]), 2, 1), spec, lam, tol=1e-9).log_value
        for t in joint.y_tilde
    ]
    # each anchored 1-D evidence carries its own -(n/2) log(2 pi) term
    const = 0.5 * joint.n * math.log(2 * math.pi)
    assert got == pytest.approx(sum(parts) + const, abs=1e-8)


def test_self_consistency_under_tighter_tolerance(rng):
    problem = WhitenedProblem(rng.standard_normal(3), 2, 3)
    for lam in (0.3, 30.0):
        loose = quad_log_z(problem, SPECS["group-lasso"], lam, tol=1e-6)
        tight = quad_log_z(problem, SPECS["group-lasso"], lam, tol=5e-7)
        assert abs(loose.log_value - tight.log_value) <= 1e-6
        assert tight.subdivisions >= loose.subdivisions


def test_polar_form_agreement(rng):
    spec = SPECS["group-lasso"]
    for _ in range(3):
        problem = WhitenedProblem(rng.standard_normal(3) * 1.3, int(rng.integers(1, 4)), 3)
        for lam in (0.2, 2.0):
            box = quad_log_z(problem, spec, lam, tol=1e-9).log_value
            polar = polar_log_z_gl3(problem, lam)
            assert box == pytest.approx(polar, abs=1e-7)


def test_polar_oracle_rejects_large_strength():
    problem = WhitenedProblem(np.ones(3), 1, 3)
    with pytest.raises(ValueError):
        polar_log_z_gl3(problem, 100.0)


def test_grid_runs_across_scales(rng):
    problem = WhitenedProblem(rng.standard_normal(3), 4, 3)
    lams = np.logspace(-3, 3, 7)
    results = quad_log_z_grid(problem, SPECS["group-lasso"], lams, tol=1e-7)
    assert len(results) == 7
    assert all(r.abs_error_estimate <= 1e-7 for r in results)


class TestMoments:
    def test_ridge_m2_identity(self):
        mean, second = quad_moments(SPECS["ridge"], 2, tol=1e-9)
        np.testing.assert_allclose(mean, 0.0, atol=1e-9)
        np.testing.assert_allclose(second, np.eye(2), atol=1e-9)

    def test_lasso_m1_second_moment_two(self):
        mean, second = quad_moments(SPECS["lasso"], 1, tol=1e-9)
        assert abs(mean[0]) <= 1e-9
        assert second[0, 0] == pytest.approx(2.0, abs=1e-9)

    def test_group_lasso_m3_second_moment_four(self):
        mean, second = quad_moments(SPECS["group-lasso"], 3, tol=1e-8)
        np.testing.assert_allclose(mean, 0.0, atol=1e-7)
        np.testing.assert_allclose(second, 4.0 * np.eye(3), atol=1e-7)

    def test_custom_penalty_measured(self):
        # h = ||w||_1 declared as custom must reproduce the separable moments
        spec = RegularizerSpec.custom(
            h=lambda w: np.sum(np.abs(np.asarray(w)), axis=-1), kappa=1.0
        )
        mean, second = quad_moments(spec, 2, tol=1e-8)
        np.testing.assert_allclose(second, 2.0 * np.eye(2), atol=1e-6)

    def test_m_cap(self):
        with pytest.raises(ValueError):
            quad_moments(SPECS["ridge"], 4)


def test_norm_constant_group_lasso_m3():
    # surface area of the 2-sphere times Gamma(3): 4 pi * 2 = 8 pi
    assert log_norm_constant(SPECS["group-lasso"], 3) == pytest.approx(
        math.log(8 * math.pi), rel=1e-13
    )


class TestArgmax:
    def test_ridge_reference(self):
        problem = WhitenedProblem(np.array([2.0]), 1, 1)
        star = argmax_lambda_oracle(problem, SPECS["ridge"])
        assert star == pytest.approx(1.0 / 3.0, abs=1e-8)

    def test_lasso_frozen_constant_regenerates(self):
        problem = WhitenedProblem(np.array([2.0]), 1, 1)
        star = argmax_lambda_oracle(problem, SPECS["lasso"])
        assert star == pytest.approx(FROZEN_LASSO_STAR, abs=1e-7)
        assert 0.0 < star < 2.0 / math.sqrt(3.0)

    @pytest.mark.slow
    def test_gl3_frozen_constant_regenerates(self):
        problem = WhitenedProblem(np.array([2.0, 0.0, 0.0]), 1, 3)
        star = argmax_lambda_oracle(problem, SPECS["group-lasso"])
        assert star == pytest.approx(FROZEN_GL3_STAR, abs=1e-7)
        assert 0.0 < star < math.sqrt(18.0)
