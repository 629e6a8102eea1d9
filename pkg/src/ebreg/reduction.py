"""Whitening of the design matrix and reduction to sufficient statistics.

The closed forms downstream are exact only when the design satisfies the
whitening condition design^T design = n*I.  This module checks and enforces
that condition and performs the reduction y_tilde = design^T y / sqrt(n),
including the per-group split for disjoint feature groups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularDesignError, WhiteningError
from .model import Dataset, GroupStructure, WhitenedProblem

# Fixed relative tolerance for "whitened": max |design^T design - n I| <= WHITEN_RTOL * n.
WHITEN_RTOL = 1e-9


@dataclass(frozen=True)
class WhiteningReport:
    """Result of whitening: transformed design, the applied transform, residual."""

    transformed_design: np.ndarray
    transform: np.ndarray
    gram_residual: float


def gram_residual(design: np.ndarray) -> float:
    """max-abs deviation of design^T design from n*I."""
    design = np.asarray(design, dtype=float)
    n, m = design.shape
    gram = design.T @ design
    return float(np.max(np.abs(gram - n * np.eye(m))))


def check_whitened(design: np.ndarray, tolerance: float | None = None):
    """Return (is_whitened, residual); tolerance defaults to WHITEN_RTOL * n."""
    design = np.asarray(design, dtype=float)
    n = design.shape[0]
    if tolerance is None:
        tolerance = WHITEN_RTOL * n
    residual = gram_residual(design)
    return residual <= tolerance, residual


def scale_factor(design: np.ndarray, rtol: float = WHITEN_RTOL):
    """If design^T design = s*I for some s > 0, return s, else None.

    Designs that are whitened up to a scalar admit an exact mapping between
    the raw and whitened regularization strengths, so they get special
    treatment in the estimator.
    """
    design = np.asarray(design, dtype=float)
    n, m = design.shape
    gram = design.T @ design
    s = float(np.trace(gram) / m)
    if s <= 0:
        return None
    if np.max(np.abs(gram - s * np.eye(m))) <= rtol * max(s, n):
        return s
    return None


def whiten(design: np.ndarray) -> WhiteningReport:
    """Rescale the feature space so the Gram matrix equals n*I.

    Uses the symmetric (ZCA-style) transform sqrt(n) * (design^T design)^(-1/2),
    which reduces to a pure scaling whenever the Gram is already a multiple of
    the identity.  The transform is returned so fitted weights can be mapped
    back to the original coordinates.
    """
    design = np.asarray(design, dtype=float)
    n, m = design.shape
    if n < m:
        raise SingularDesignError(
            f"whitening needs at least as many rows as columns (n={n}, m={m})",
            numerical_rank=min(n, m),
        )
    u, s, vt = np.linalg.svd(design, full_matrices=False)
    cutoff = s[0] * max(n, m) * np.finfo(float).eps * 10 if s[0] > 0 else 0.0
    rank = int(np.sum(s > cutoff))
    if rank < m:
        raise SingularDesignError(
            f"design is rank deficient (numerical rank {rank} < m={m})",
            numerical_rank=rank,
        )
    transform = vt.T @ np.diag(np.sqrt(n) / s) @ vt
    transformed = design @ transform
    residual = gram_residual(transformed)
    return WhiteningReport(
        transformed_design=transformed, transform=transform, gram_residual=residual
    )


def reduce(dataset: Dataset) -> WhitenedProblem:
    """Reduce a whitened dataset to (y_tilde, n, m).

    y_tilde = design^T y / sqrt(n).  Everything downstream (closed forms,
    brackets, the divergence gate in its reduced form) consumes only this
    triple.
    """
    ok, residual = check_whitened(dataset.design)
    if not ok:
        raise WhiteningError(
            f"design is not whitened (gram residual {residual:.3e} > "
            f"{WHITEN_RTOL * dataset.n:.3e}); call whiten() first"
        )
    y_tilde = dataset.design.T @ dataset.response / np.sqrt(dataset.n)
    return WhitenedProblem(y_tilde=y_tilde, n=dataset.n, m=dataset.m)


def decompose_by_groups(dataset: Dataset, groups: GroupStructure):
    """Split a whitened dataset into one independent subproblem per group.

    Under the whitening condition the joint evidence factorizes over disjoint
    groups, so per-group estimation on the subproblems equals joint
    estimation.  Returns [(group_indices, WhitenedProblem), ...].
    """
    if groups.m != dataset.m:
        raise WhiteningError(
            f"group structure is for m={groups.m} but dataset has m={dataset.m}"
        )
    problem = reduce(dataset)
    out = []
    for g in groups.groups:
        idx = np.array(g, dtype=int)
        sub = WhitenedProblem(y_tilde=problem.y_tilde[idx], n=dataset.n, m=len(g))
        out.append((g, sub))
    return out
