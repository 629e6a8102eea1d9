import math

import numpy as np
import pytest

from conftest import random_whitened_dataset
from ebreg import (
    Dataset,
    GroupStructure,
    RegularizerSpec,
    SingularDesignError,
    WhitenedProblem,
    WhiteningError,
    check_whitened,
    decompose_by_groups,
    quad_log_z,
    reduce,
    whiten,
)


def test_check_whitened_scaled_identity():
    n = 2
    ok, residual = check_whitened(math.sqrt(n) * np.eye(2))
    assert ok and residual <= 1e-15


def test_check_whitened_rejects_correlated_design():
    ok, residual = check_whitened(np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert not ok and residual > 0.5


def test_whiten_pure_scaling_case():
    n = 4
    design = 2.0 * math.sqrt(n) * np.eye(n)
    report = whiten(design)
    np.testing.assert_allclose(report.transform, 0.5 * np.eye(n), atol=1e-12)
    assert report.gram_residual <= 1e-9 * n


def test_whiten_random_design_passes_check(rng):
    design = rng.standard_normal((50, 3))
    report = whiten(design)
    ok, residual = check_whitened(report.transformed_design)
    assert ok
    assert report.gram_residual <= 1e-9 * 50
    # transform is invertible and reproduces the whitened design
    np.testing.assert_allclose(design @ report.transform, report.transformed_design)
    assert abs(np.linalg.det(report.transform)) > 0


def test_whiten_rank_deficient_errors():
    design = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(SingularDesignError) as err:
        whiten(design)
    assert err.value.numerical_rank == 1


def test_reduce_identity_projection():
    n = 4
    design = math.sqrt(n) * np.eye(n)[:, :2]
    y = np.array([2.0, 0.0, 0.0, 0.0])
    # design^T y = (4, 0) when y projects fully on the first feature
    problem = reduce(Dataset(design=design, response=y))
    np.testing.assert_allclose(problem.y_tilde, [2.0, 0.0])
    assert problem.n == 4 and problem.m == 2


def test_reduce_zero_response():
    n = 4
    ds = Dataset(design=math.sqrt(n) * np.eye(n), response=np.zeros(n))
    np.testing.assert_array_equal(reduce(ds).y_tilde, np.zeros(n))


def test_reduce_norm_identity(rng):
    ds = random_whitened_dataset(rng, 50, 3)
    problem = reduce(ds)
    # ||y_tilde||^2 == y^T design design^T y / n
    direct = ds.response @ ds.design @ ds.design.T @ ds.response / ds.n
    assert problem.y_norm**2 == pytest.approx(direct, rel=1e-12)


def test_reduce_requires_whitening(rng):
    ds = Dataset(design=rng.standard_normal((10, 2)), response=rng.standard_normal(10))
    with pytest.raises(WhiteningError, match="whiten"):
        reduce(ds)


def test_rewhitening_preserves_reduced_norm(rng):
    design = rng.standard_normal((40, 4))
    y = rng.standard_normal(40)
    first = whiten(design).transformed_design
    problem1 = reduce(Dataset(design=first, response=y))
    second = whiten(first).transformed_design
    problem2 = reduce(Dataset(design=second, response=y))
    assert problem1.y_norm == pytest.approx(problem2.y_norm, rel=1e-10)


class TestDecompose:
    def test_split_shapes(self, rng):
        ds = random_whitened_dataset(rng, 20, 3)
        gs = GroupStructure.from_lists([[0], [1, 2]], m=3)
        parts = decompose_by_groups(ds, gs)
        assert [p.m for _, p in parts] == [1, 2]
        joint = reduce(ds)
        np.testing.assert_allclose(parts[0][1].y_tilde, joint.y_tilde[:1])
        np.testing.assert_allclose(parts[1][1].y_tilde, joint.y_tilde[1:])

    def test_single_group_equals_reduce(self, rng):
        ds = random_whitened_dataset(rng, 12, 3)
        (_, sub), = decompose_by_groups(ds, GroupStructure.single(3))
        np.testing.assert_array_equal(sub.y_tilde, reduce(ds).y_tilde)

    def test_mismatched_m_rejected(self, rng):
        ds = random_whitened_dataset(rng, 12, 3)
        with pytest.raises(WhiteningError, match="m=2"):
            decompose_by_groups(ds, GroupStructure.from_lists([[0], [1]], m=2))

    def test_group_evidence_factorizes(self, rng):
        # joint evidence of the grouped penalty equals the product of the
        # per-group evidences, up to the shared anchoring constant; verified
        # against the quadrature oracle at m = 3 (1 + 2 split)
        ds = random_whitened_dataset(rng, 9, 3)
        gs = GroupStructure.from_lists([[0], [1, 2]], m=3)
        parts = decompose_by_groups(ds, gs)
        gl = RegularizerSpec.group_lasso()
        grouped = RegularizerSpec.custom(
            h=lambda w: np.abs(np.asarray(w)[..., 0])
            + np.sqrt(np.sum(np.asarray(w)[..., 1:] ** 2, axis=-1)),
            kappa=1.0,
            probe=False,
        )
        joint_problem = reduce(ds)
        lam = 0.8
        joint = quad_log_z(joint_problem, grouped, lam, tol=1e-8).log_value
        per_group = sum(
            quad_log_z(sub, gl, lam, tol=1e-8).log_value for _, sub in parts
        )
        # each anchored sub-evidence carries its own -(n/2) log(2 pi)
        const = 0.5 * ds.n * math.log(2 * math.pi) * (len(parts) - 1)
        assert joint == pytest.approx(per_group + const, abs=1e-6)
