"""Data model: datasets, regularizer descriptions, and reduced problems."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import GroupStructureError, IngestionError


def _frozen_array(values, dtype=float):
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """A regression dataset: n-by-m design matrix and length-n response."""

    design: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        design = _frozen_array(self.design)
        response = _frozen_array(self.response)
        if design.ndim != 2:
            raise ValueError("design must be a 2-D matrix")
        if response.ndim != 1:
            raise ValueError("response must be a 1-D vector")
        n, m = design.shape
        if n < 1 or m < 1:
            raise ValueError("design must have at least one row and one column")
        if response.shape[0] != n:
            raise ValueError(
                f"design has {n} rows but response has {response.shape[0]} entries"
            )
        if not np.all(np.isfinite(design)):
            raise ValueError("design contains non-finite entries")
        if not np.all(np.isfinite(response)):
            raise ValueError("response contains non-finite entries")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "response", response)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def m(self) -> int:
        return self.design.shape[1]


class RegularizerKind(enum.Enum):
    RIDGE = "ridge"
    LASSO = "lasso"
    GROUP_LASSO = "group-lasso"
    CUSTOM = "custom"


# Homogeneity degree of each built-in penalty.
_BUILTIN_KAPPA = {
    RegularizerKind.RIDGE: 2.0,
    RegularizerKind.LASSO: 1.0,
    RegularizerKind.GROUP_LASSO: 1.0,
}


@dataclass(frozen=True)
class RegularizerSpec:
    """Description of the penalty h and the unit-strength prior it induces.

    ``kappa`` is the degree of absolute homogeneity, h(a*w) = |a|^kappa h(w).
    ``sigma_w_sq`` is the per-coordinate second moment of the unit-strength
    prior; for built-ins it is known in closed form (possibly m-dependent)
    and may be left unset.  Custom penalties must declare their symmetry
    flags explicitly; they are structural assumptions, not inferred.
    """

    kind: RegularizerKind
    kappa: float
    sigma_w_sq: float | None = None
    custom_h: Callable[[np.ndarray], np.ndarray] | None = None
    sign_invariant: bool = True
    permutation_invariant: bool = True
    custom_sampler: Callable[[np.random.Generator, int, int], np.ndarray] | None = None

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.kind is RegularizerKind.CUSTOM:
            if self.custom_h is None:
                raise ValueError("custom regularizers need an explicit h callable")
        else:
            expected = _BUILTIN_KAPPA[self.kind]
            if self.kappa != expected:
                raise ValueError(
                    f"{self.kind.value} has homogeneity degree {expected}, got {self.kappa}"
                )
            if self.sigma_w_sq is not None and self.sigma_w_sq < 0:
                raise ValueError("sigma_w_sq must be nonnegative")

    @classmethod
    def ridge(cls) -> "RegularizerSpec":
        return cls(RegularizerKind.RIDGE, kappa=2.0)

    @classmethod
    def lasso(cls) -> "RegularizerSpec":
        return cls(RegularizerKind.LASSO, kappa=1.0)

    @classmethod
    def group_lasso(cls) -> "RegularizerSpec":
        return cls(RegularizerKind.GROUP_LASSO, kappa=1.0)

    @classmethod
    def custom(
        cls,
        h: Callable[[np.ndarray], np.ndarray],
        kappa: float,
        sigma_w_sq: float | None = None,
        sign_invariant: bool = True,
        permutation_invariant: bool = True,
        sampler=None,
        probe: bool = True,
    ) -> "RegularizerSpec":
        spec = cls(
            RegularizerKind.CUSTOM,
            kappa=kappa,
            sigma_w_sq=sigma_w_sq,
            custom_h=h,
            sign_invariant=sign_invariant,
            permutation_invariant=permutation_invariant,
            custom_sampler=sampler,
        )
        if probe:
            check_homogeneity(spec, m=2, probes=8, seed=20260810)
        return spec

    def h_value(self, w: np.ndarray) -> np.ndarray:
        """Penalty value(s); w has shape (..., m)."""
        w = np.asarray(w, dtype=float)
        if self.kind is RegularizerKind.RIDGE:
            return 0.5 * np.sum(w * w, axis=-1)
        if self.kind is RegularizerKind.LASSO:
            return np.sum(np.abs(w), axis=-1)
        if self.kind is RegularizerKind.GROUP_LASSO:
            return np.sqrt(np.sum(w * w, axis=-1))
        return np.asarray(self.custom_h(w), dtype=float)

    def sigma_w_sq_for(self, m: int) -> float:
        """Per-coordinate prior second moment, resolving built-ins by m."""
        if self.kind is RegularizerKind.CUSTOM:
            if self.sigma_w_sq is None:
                raise ValueError(
                    "sigma_w_sq is unknown for this custom regularizer; "
                    "measure it with ebreg.oracle.quad_moments and pass it in"
                )
            return self.sigma_w_sq
        return builtin_sigma_w_sq(self.kind, m)


def builtin_sigma_w_sq(kind: RegularizerKind, m: int) -> float:
    """Per-coordinate second moment of the unit-strength prior.

    Gaussian prior gives 1, Laplace gives 2, and the joint-norm prior has a
    Gamma(m) radial law with E[r^2] = m(m+1), hence (m+1) per coordinate.
    """
    if m < 1:
        raise ValueError("m must be positive")
    if kind is RegularizerKind.RIDGE:
        return 1.0
    if kind is RegularizerKind.LASSO:
        return 2.0
    if kind is RegularizerKind.GROUP_LASSO:
        return float(m + 1)
    raise ValueError(
        "sigma_w_sq has no built-in value for custom regularizers; "
        "measure it with ebreg.oracle.quad_moments"
    )


def check_homogeneity(spec: RegularizerSpec, m: int = 3, probes: int = 100,
                      seed: int = 0, tol: float = 1e-9) -> None:
    """Probe |h(a*w) - |a|^kappa h(w)| on random (a, w); raise if violated."""
    rng = np.random.default_rng(seed)
    for _ in range(probes):
        w = rng.standard_normal(m) * rng.uniform(0.1, 3.0)
        a = rng.uniform(-3.0, 3.0)
        hw = float(spec.h_value(w))
        haw = float(spec.h_value(a * w))
        if abs(haw - abs(a) ** spec.kappa * hw) > tol * (1.0 + abs(hw)):
            raise ValueError(
                f"h is not absolutely homogeneous of degree {spec.kappa}: "
                f"h({a}*w)={haw}, |a|^kappa*h(w)={abs(a) ** spec.kappa * hw}"
            )


@dataclass(frozen=True)
class GroupStructure:
    """Disjoint feature groups partitioning {0, ..., m-1} (0-based)."""

    groups: tuple[tuple[int, ...], ...]
    m: int

    @classmethod
    def from_lists(cls, groups: Sequence[Sequence[int]], m: int) -> "GroupStructure":
        seen: set[int] = set()
        norm = []
        for g in groups:
            idx = tuple(int(i) for i in g)
            if len(idx) == 0:
                raise GroupStructureError("empty group")
            for i in idx:
                if i < 0 or i >= m:
                    raise GroupStructureError(f"group index {i} outside 0..{m - 1}")
                if i in seen:
                    raise GroupStructureError(f"feature {i} appears in two groups")
                seen.add(i)
            norm.append(idx)
        if len(seen) != m:
            missing = sorted(set(range(m)) - seen)
            raise GroupStructureError(f"groups do not cover features {missing}")
        return cls(groups=tuple(norm), m=m)

    @classmethod
    def single(cls, m: int) -> "GroupStructure":
        return cls.from_lists([list(range(m))], m)


@dataclass(frozen=True)
class WhitenedProblem:
    """Reduced data after whitening: y_tilde = design^T y / sqrt(n), plus sizes.

    This triple is the sufficient statistic consumed by every closed form.
    """

    y_tilde: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        y_tilde = _frozen_array(self.y_tilde)
        if y_tilde.ndim != 1:
            raise ValueError("y_tilde must be a vector")
        if not np.all(np.isfinite(y_tilde)):
            raise ValueError("y_tilde contains non-finite entries")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.m != y_tilde.shape[0]:
            raise ValueError("m must equal len(y_tilde)")
        object.__setattr__(self, "y_tilde", y_tilde)

    @property
    def y_norm(self) -> float:
        return float(np.linalg.norm(self.y_tilde))


def _parse_cell(text: str, row: int, col: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise IngestionError(
            f"row {row}, column {col}: cannot parse {text!r} as a number"
        ) from None
    if not math.isfinite(value):
        raise IngestionError(f"row {row}, column {col}: non-finite value {text!r}")
    return value


def load_dataset(path, format: str | None = None) -> Dataset:
    """Load a dataset from CSV (last column = response) or JSON.

    The JSON layout is {"design": [[...], ...], "response": [...]}.  Errors
    name the offending row/column so bad files can be fixed quickly.
    """
    path = Path(path)
    if format is None:
        format = "json" if path.suffix.lower() == ".json" else "csv"
    if format == "json":
        return _load_json(path)
    if format == "csv":
        return _load_csv(path)
    raise ValueError(f"unknown dataset format {format!r}")


def _load_csv(path: Path) -> Dataset:
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        width = None
        for i, raw in enumerate(reader, start=1):
            cells = [c.strip() for c in raw]
            if not any(cells):
                continue
            if width is None:
                width = len(cells)
                if width < 2:
                    raise IngestionError(
                        f"row {i}: need at least one feature column plus the response"
                    )
            elif len(cells) != width:
                raise IngestionError(
                    f"row {i}: expected {width} columns, found {len(cells)} (ragged file)"
                )
            rows.append([_parse_cell(c, i, j) for j, c in enumerate(cells, start=1)])
    if not rows:
        raise IngestionError(f"{path}: no rows")
    data = np.array(rows, dtype=float)
    return Dataset(design=data[:, :-1], response=data[:, -1])


def _load_json(path: Path) -> Dataset:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(payload, dict) or "design" not in payload or "response" not in payload:
        raise IngestionError(f"{path}: expected object with 'design' and 'response'")
    design = payload["design"]
    response = payload["response"]
    if not design:
        raise IngestionError(f"{path}: no rows")
    width = None
    for i, row in enumerate(design, start=1):
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise IngestionError(f"row {i}: ragged design matrix")
        for j, cell in enumerate(row, start=1):
            _parse_cell(str(cell), i, j)
    for i, cell in enumerate(response, start=1):
        _parse_cell(str(cell), i, 0)
    try:
        return Dataset(design=np.array(design, float), response=np.array(response, float))
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from None


def save_dataset_csv(dataset: Dataset, path) -> None:
    """Write the dataset back out in the canonical CSV layout."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i in range(dataset.n):
            writer.writerow(
                [repr(float(v)) for v in dataset.design[i]]
                + [repr(float(dataset.response[i]))]
            )


def load_groups(path, m: int) -> GroupStructure:
    """Read a groups file: {"groups": [[1,2],[3]]} with 1-based indices."""
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(payload, dict) or "groups" not in payload:
        raise IngestionError(f"{path}: expected object with a 'groups' field")
    zero_based = [[int(i) - 1 for i in g] for g in payload["groups"]]
    return GroupStructure.from_lists(zero_based, m)
