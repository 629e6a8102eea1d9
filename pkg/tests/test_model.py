import json

import numpy as np
import pytest

from ebreg import (
    Dataset,
    GroupStructure,
    GroupStructureError,
    IngestionError,
    RegularizerKind,
    RegularizerSpec,
    builtin_sigma_w_sq,
    load_dataset,
    load_groups,
    quad_moments,
)
from ebreg.model import check_homogeneity, save_dataset_csv


def test_load_csv_basic(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,0,2\n0,1,3\n0,0,0\n")
    ds = load_dataset(path)
    assert ds.n == 3 and ds.m == 2
    np.testing.assert_array_equal(ds.response, [2.0, 3.0, 0.0])
    np.testing.assert_array_equal(ds.design, [[1, 0], [0, 1], [0, 0]])


def test_load_csv_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(IngestionError, match="no rows"):
        load_dataset(path)


def test_load_csv_nan_cell_names_location(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,0,2\n0,nan,3\n")
    with pytest.raises(IngestionError, match="row 2, column 2"):
        load_dataset(path)


def test_load_csv_ragged_rows(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("1,0,2\n0,1\n")
    with pytest.raises(IngestionError, match="ragged"):
        load_dataset(path)


def test_json_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(design=rng.standard_normal((4, 3)), response=rng.standard_normal(4))
    path = tmp_path / "d.json"
    path.write_text(
        json.dumps({"design": ds.design.tolist(), "response": ds.response.tolist()})
    )
    back = load_dataset(path)
    np.testing.assert_array_equal(back.design, ds.design)
    np.testing.assert_array_equal(back.response, ds.response)


def test_csv_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    ds = Dataset(design=rng.standard_normal((5, 2)), response=rng.standard_normal(5))
    path = tmp_path / "d.csv"
    save_dataset_csv(ds, path)
    back = load_dataset(path)
    np.testing.assert_array_equal(back.design, ds.design)
    np.testing.assert_array_equal(back.response, ds.response)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(design=np.ones((2, 2)), response=np.ones(3))
    with pytest.raises(ValueError):
        Dataset(design=np.array([[np.inf, 0.0]]), response=np.array([1.0]))


def test_dataset_immutable():
    ds = Dataset(design=np.eye(2), response=np.ones(2))
    with pytest.raises(ValueError):
        ds.design[0, 0] = 5.0


class TestBuiltinSigmaWSq:
    def test_ridge_is_unit(self):
        for m in (1, 2, 7):
            assert builtin_sigma_w_sq(RegularizerKind.RIDGE, m) == 1.0

    def test_lasso_is_two(self):
        # Laplace second moment; confirmed against the quadrature oracle below
        for m in (1, 4):
            assert builtin_sigma_w_sq(RegularizerKind.LASSO, m) == 2.0

    def test_group_lasso_m3_is_four(self):
        assert builtin_sigma_w_sq(RegularizerKind.GROUP_LASSO, 3) == 4.0
        assert builtin_sigma_w_sq(RegularizerKind.GROUP_LASSO, 2) == 3.0

    def test_custom_directs_to_oracle(self):
        with pytest.raises(ValueError, match="quad_moments"):
            builtin_sigma_w_sq(RegularizerKind.CUSTOM, 2)

    @pytest.mark.parametrize(
        "spec,m",
        [
            (RegularizerSpec.lasso(), 1),
            (RegularizerSpec.group_lasso(), 3),
        ],
    )
    def test_confirmed_by_quadrature(self, spec, m):
        _, second = quad_moments(spec, m, tol=1e-9)
        expected = builtin_sigma_w_sq(spec.kind, m) * np.eye(m)
        np.testing.assert_allclose(second, expected, atol=1e-7)


def test_builtin_kappa_enforced():
    with pytest.raises(ValueError):
        RegularizerSpec(RegularizerKind.RIDGE, kappa=1.0)
    with pytest.raises(ValueError):
        RegularizerSpec(RegularizerKind.LASSO, kappa=2.0)


class TestCustomSpec:
    def test_homogeneity_probe_passes_for_scaled_norm(self):
        spec = RegularizerSpec.custom(
            h=lambda w: 2.0 * np.sqrt(np.sum(np.asarray(w) ** 2, axis=-1)),
            kappa=1.0,
        )
        check_homogeneity(spec, m=3, probes=100, seed=5)

    def test_homogeneity_probe_rejects_affine_offset(self):
        with pytest.raises(ValueError, match="homogeneous"):
            RegularizerSpec.custom(
                h=lambda w: 1.0 + np.sum(np.abs(np.asarray(w)), axis=-1),
                kappa=1.0,
            )

    def test_sigma_w_sq_required_for_custom(self):
        spec = RegularizerSpec.custom(
            h=lambda w: np.sum(np.abs(np.asarray(w)), axis=-1), kappa=1.0
        )
        with pytest.raises(ValueError, match="quad_moments"):
            spec.sigma_w_sq_for(2)


class TestGroupStructure:
    def test_partition_ok(self):
        gs = GroupStructure.from_lists([[0], [1, 2]], m=3)
        assert gs.groups == ((0,), (1, 2))

    def test_overlap_rejected(self):
        with pytest.raises(GroupStructureError, match="two groups"):
            GroupStructure.from_lists([[0, 1], [1, 2]], m=3)

    def test_missing_rejected(self):
        with pytest.raises(GroupStructureError, match="cover"):
            GroupStructure.from_lists([[0]], m=2)

    def test_load_groups_one_based(self, tmp_path):
        path = tmp_path / "g.json"
        path.write_text(json.dumps({"groups": [[1, 2, 3], [4, 5, 6]]}))
        gs = load_groups(path, m=6)
        assert gs.groups == ((0, 1, 2), (3, 4, 5))
