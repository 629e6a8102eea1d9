"""Brute-force quadrature of the defining evidence integrals (m <= 3).

This is the independent ground truth the closed forms and estimators are
validated against.  The reduced integral

    J(beta) = integral over R^m of exp(-||y_tilde - u||^2 / 2 - beta h(u)) du

is evaluated by tensor-product panel Gauss-Legendre quadrature with global
panel refinement until two consecutive refinements agree within tolerance.
Two exact parameterizations cover all regularization strengths:

  * moderate beta: a truncated box [-R, R]^m with R = ||y_tilde|| + 12
    (the integrand is dominated by a unit Gaussian envelope, so twelve
    standard deviations past the mean shift leaves a negligible tail);
  * large beta: the substitution x = gamma u with gamma = beta^(1/kappa),
    which turns the sharply peaked penalty factor into the fixed-scale
    exp(-h(x)) and the data factor into a slowly varying envelope.

Panel boundaries are symmetric around zero so the |.| kinks of the built-in
penalties fall on panel edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import QuadratureConvergenceError
from .model import RegularizerKind, RegularizerSpec, WhitenedProblem

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)
_LOG_2PI = math.log(2.0 * math.pi)

# Penalty-scale threshold separating the two parameterizations.
_MODE_SWITCH = {2.0: 2.5}  # by kappa; default 4.0 for kappa = 1 and custom
_CHUNK_TARGET = 1 << 21


@dataclass(frozen=True)
class QuadratureResult:
    log_value: float
    abs_error_estimate: float
    subdivisions: int


def _panel_axis(lo: float, hi: float, panels: int, grade: int = 0):
    """Panel edges on [lo, hi] with 15-node Gauss-Legendre per panel.

    ``grade`` dyadically subdivides the panel(s) adjacent to zero; penalties
    with a kink at the origin (any joint-norm term) lose their O(h^4)
    refinement floor this way because the offending cells shrink by 2^grade.
    """
    edges = np.linspace(lo, hi, panels + 1)
    if lo == -hi and panels % 2 == 0:
        edges[panels // 2] = 0.0  # pin the origin onto a panel edge exactly
    if grade > 0 and lo < 0.0 < hi:
        refined = [edges[edges < 0.0]]
        step = edges[1] - edges[0]
        lower = [-step / 2.0**g for g in range(1, grade + 1)]
        upper = [step / 2.0**g for g in range(grade, 0, -1)]
        refined.append(np.array(lower + [0.0] + upper))
        refined.append(edges[edges > 0.0])
        edges = np.unique(np.concatenate(refined))
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_NODES).ravel()
    weights = (half[:, None] * _GL_WEIGHTS).ravel()
    return nodes, weights


def _h_on_grid(spec: RegularizerSpec, parts):
    """Penalty values on a broadcast grid; parts are per-axis node arrays
    already shaped for broadcasting."""
    kind = spec.kind
    if kind is RegularizerKind.RIDGE:
        total = sum(p * p for p in parts)
        return 0.5 * total
    if kind is RegularizerKind.LASSO:
        return sum(np.abs(p) for p in parts)
    if kind is RegularizerKind.GROUP_LASSO:
        total = sum(p * p for p in parts)
        return np.sqrt(total)
    stacked = np.stack(np.broadcast_arrays(*parts), axis=-1)
    return np.asarray(spec.custom_h(stacked), dtype=float)


def _broadcast_parts(blocks):
    m = len(blocks)
    parts = []
    for j, b in enumerate(blocks):
        shape = [1] * m
        shape[j] = -1
        parts.append(b.reshape(shape))
    return parts


def _custom_ray_radius(spec: RegularizerSpec, m: int, bound: float, seed: int = 7) -> float:
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((64, m))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    h_dir = np.asarray(spec.h_value(dirs), dtype=float)
    h_min = float(np.min(h_dir))
    if h_min <= 0:
        raise ValueError(
            "custom penalty is not positive on the unit sphere; cannot truncate the integral"
        )
    return (bound / h_min) ** (1.0 / spec.kappa)


class _BoxEngine:
    """Shared-state evaluator of log J(beta) for one (y_tilde, penalty) pair.

    Caches the penalty values per refinement level, since they do not depend
    on beta in either parameterization; only the cheap per-axis Gaussian
    factors are rebuilt per call.
    """

    def __init__(self, y_tilde: np.ndarray, spec: RegularizerSpec):
        self.y_tilde = np.asarray(y_tilde, dtype=float)
        self.spec = spec
        self.m = self.y_tilde.shape[0]
        if self.m > 3:
            raise ValueError("quadrature oracle supports m <= 3")
        self.y_norm = float(np.linalg.norm(self.y_tilde))
        self._levels: dict = {}
        self.switch = _MODE_SWITCH.get(spec.kappa, 4.0)

    def _extent(self, mode: str) -> float:
        if mode == "A":
            return self.y_norm + 12.0
        # fixed-scale exp(-h(x)) support
        if self.spec.kind is RegularizerKind.RIDGE:
            return self.y_norm + 13.0
        if self.spec.kind is RegularizerKind.CUSTOM:
            return _custom_ray_radius(self.spec, self.m, 40.0 + 0.6 * self.y_norm**2)
        return 34.0 + 0.6 * self.y_norm**2

    def _ladder(self, mode: str):
        if self.m == 3:
            return (4, 8, 16, 32) if mode == "A" else (6, 12, 24)
        if self.m == 2:
            return (4, 8, 16, 32, 64) if mode == "A" else (6, 12, 24, 48)
        return (4, 8, 16, 32, 64, 128, 256) if mode == "A" else (6, 12, 24, 48, 96, 192)

    def _grade(self) -> int:
        # joint-norm penalties (and unknown custom ones) kink at the origin
        if self.spec.kind in (RegularizerKind.GROUP_LASSO, RegularizerKind.CUSTOM):
            return 4 if self.m > 1 else 0
        return 0

    def _level(self, mode: str, panels: int):
        key = (mode, panels)
        if key in self._levels:
            return self._levels[key]
        extent = self._extent(mode)
        nodes, weights = _panel_axis(-extent, extent, panels, grade=self._grade())
        axes = [(nodes, weights)] * self.m
        # penalty blocks chunked over the first axis
        n_axis = nodes.shape[0]
        if self.m == 1:
            rows = n_axis
        else:
            per_row = n_axis ** (self.m - 1)
            rows = max(1, _CHUNK_TARGET // per_row)
            if self.spec.kind is RegularizerKind.CUSTOM:
                rows = max(1, rows // 4)
        h_blocks = []
        for start in range(0, n_axis, rows):
            blocks = [nodes[start : start + rows]] + [nodes] * (self.m - 1)
            parts = _broadcast_parts(blocks)
            h_blocks.append(_h_on_grid(self.spec, parts))
        level = (axes, h_blocks, rows)
        self._levels[key] = level
        return level

    def _evaluate(self, mode: str, panels: int, beta: float) -> float:
        (axes, h_blocks, rows) = self._level(mode, panels)
        nodes, weights = axes[0]
        logw = np.log(weights)
        if mode == "A":
            gamma = 1.0
            h_coef = beta
        else:
            gamma = beta ** (1.0 / self.spec.kappa)
            h_coef = 1.0
        lgs = [
            -0.5 * (nodes / gamma - self.y_tilde[j]) ** 2 + logw for j in range(self.m)
        ]
        if self.m == 1:
            total = _logsumexp(lgs[0] - h_coef * h_blocks_concat(h_blocks))
        else:
            run_max = -np.inf
            acc = 0.0
            n_axis = nodes.shape[0]
            for bi, start in enumerate(range(0, n_axis, rows)):
                first = lgs[0][start : start + rows]
                parts = _broadcast_parts([first] + lgs[1:])
                block = sum(parts) - h_coef * h_blocks[bi]
                bm = float(block.max())
                if bm > run_max:
                    if np.isfinite(run_max):
                        acc *= math.exp(run_max - bm)
                    run_max = bm
                acc += float(np.sum(np.exp(block - run_max)))
            total = run_max + math.log(acc)
        if mode == "B":
            total -= self.m * math.log(gamma)
        return float(total)

    def log_integral(self, beta: float, tol: float) -> QuadratureResult:
        mode = "A" if beta ** (1.0 / self.spec.kappa) <= self.switch else "B"
        vals = []
        last_delta = math.inf
        for panels in self._ladder(mode):
            vals.append(self._evaluate(mode, panels, beta))
            if len(vals) >= 2:
                last_delta = abs(vals[-1] - vals[-2])
                if last_delta <= 0.5 * tol:
                    return QuadratureResult(vals[-1], last_delta, panels)
        raise QuadratureConvergenceError(
            f"quadrature did not reach tol={tol} (last refinement changed by {last_delta:.3e})",
            achieved=last_delta,
            log_value=vals[-1],
        )


def h_blocks_concat(h_blocks):
    return h_blocks[0] if len(h_blocks) == 1 else np.concatenate(h_blocks)


def _logsumexp(arr: np.ndarray) -> float:
    mx = float(arr.max())
    return mx + math.log(float(np.sum(np.exp(arr - mx))))


def log_norm_constant(spec: RegularizerSpec, m: int, tol: float = 1e-10) -> float:
    """log of integral exp(-h(w)) dw, the unit-strength prior normalizer."""
    if spec.kind is RegularizerKind.RIDGE:
        return 0.5 * m * _LOG_2PI
    if spec.kind is RegularizerKind.LASSO:
        return m * math.log(2.0)
    if spec.kind is RegularizerKind.GROUP_LASSO:
        return (
            math.log(2.0)
            + 0.5 * m * math.log(math.pi)
            + math.lgamma(m)
            - math.lgamma(0.5 * m)
        )
    key = (spec, m)
    cached = _FLAT_CACHE.get(key)
    if cached is None or cached[1] > tol:
        cached = (_flat_log_integral(spec, m, tol), tol)
        _FLAT_CACHE[key] = cached
    return cached[0]


_FLAT_CACHE: dict = {}


def _flat_log_integral(spec: RegularizerSpec, m: int, tol: float) -> float:
    extent = _custom_ray_radius(spec, m, 45.0)
    ladder = (8, 16, 32) if m == 3 else (8, 16, 32, 64)
    vals = []
    for panels in ladder:
        nodes, weights = _panel_axis(-extent, extent, panels, grade=4 if m > 1 else 0)
        logw = np.log(weights)
        if m == 1:
            h = np.asarray(spec.h_value(nodes[:, None]), dtype=float)
            vals.append(_logsumexp(logw - h))
        else:
            n_axis = nodes.shape[0]
            rows = max(1, _CHUNK_TARGET // (4 * n_axis ** (m - 1)))
            run_max, acc = -np.inf, 0.0
            for start in range(0, n_axis, rows):
                blocks = [nodes[start : start + rows]] + [nodes] * (m - 1)
                parts = _broadcast_parts(blocks)
                h = _h_on_grid(spec, parts)
                wparts = _broadcast_parts([logw[start : start + rows]] + [logw] * (m - 1))
                block = sum(wparts) - h
                bm = float(block.max())
                if bm > run_max:
                    if np.isfinite(run_max):
                        acc *= math.exp(run_max - bm)
                    run_max = bm
                acc += float(np.sum(np.exp(block - run_max)))
            vals.append(run_max + math.log(acc))
        if len(vals) >= 2 and abs(vals[-1] - vals[-2]) <= 0.5 * tol:
            return float(vals[-1])
    raise QuadratureConvergenceError(
        "prior normalizer quadrature did not converge",
        achieved=abs(vals[-1] - vals[-2]),
        log_value=vals[-1],
    )


def _anchor_terms(problem: WhitenedProblem, spec: RegularizerSpec, lam: float, tol: float):
    n, m = problem.n, problem.m
    beta = lam * n ** (-0.5 * spec.kappa)
    const = (
        -0.5 * n * _LOG_2PI
        + (m / spec.kappa) * math.log(lam)
        - log_norm_constant(spec, m, tol)
        - 0.5 * m * math.log(n)
    )
    return beta, const


def quad_log_z(problem: WhitenedProblem, spec: RegularizerSpec, lam: float,
               tol: float = 1e-8) -> QuadratureResult:
    """Anchored log evidence by brute-force quadrature (m <= 3)."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    beta, const = _anchor_terms(problem, spec, lam, tol)
    engine = _BoxEngine(problem.y_tilde, spec)
    res = engine.log_integral(beta, tol)
    return QuadratureResult(res.log_value + const, res.abs_error_estimate, res.subdivisions)


def quad_log_z_grid(problem: WhitenedProblem, spec: RegularizerSpec, lams,
                    tol: float = 1e-8):
    """Quadrature across a lambda grid, sharing cached penalty grids."""
    engine = _BoxEngine(problem.y_tilde, spec)
    out = []
    for lam in lams:
        lam = float(lam)
        beta, const = _anchor_terms(problem, spec, lam, tol)
        res = engine.log_integral(beta, tol)
        out.append(
            QuadratureResult(res.log_value + const, res.abs_error_estimate, res.subdivisions)
        )
    return out


def polar_log_z_gl3(problem: WhitenedProblem, lam: float, tol: float = 1e-9) -> float:
    """Second, independently parameterized oracle for the joint-norm model at
    m = 3: the integral after rotating the data vector onto the first axis and
    switching to polar coordinates, leaving a 2-D (radius, angle) quadrature.

    Valid for moderate penalties (lam/sqrt(n) <= ~8); the agreement test with
    the box oracle runs in that regime.
    """
    if problem.m != 3:
        raise ValueError("polar oracle is specific to m = 3")
    n = problem.n
    beta = lam / math.sqrt(n)
    if beta > 8.0:
        raise ValueError("polar oracle restricted to lam/sqrt(n) <= 8")
    rho = problem.y_norm
    r_hi = rho + 13.0
    vals = []
    for panels in (8, 16, 32, 64, 128):
        r_nodes, r_w = _panel_axis(0.0, r_hi, panels)
        p_nodes, p_w = _panel_axis(0.0, math.pi, max(4, panels // 2))
        # integrand r^2 exp(-r^2/2 - beta r + rho r cos(phi)) sin(phi)
        expo = (
            -0.5 * r_nodes[:, None] ** 2
            - beta * r_nodes[:, None]
            + rho * r_nodes[:, None] * np.cos(p_nodes)[None, :]
        )
        factor = (
            r_nodes[:, None] ** 2
            * np.sin(p_nodes)[None, :]
            * r_w[:, None]
            * p_w[None, :]
        )
        mx = float(expo.max())
        val = mx + math.log(float(np.sum(np.exp(expo - mx) * factor)))
        vals.append(val + math.log(2.0 * math.pi) - 0.5 * rho * rho)
        if len(vals) >= 2 and abs(vals[-1] - vals[-2]) <= 0.5 * tol:
            const = (
                -0.5 * n * _LOG_2PI
                + 3.0 * math.log(lam)
                - log_norm_constant(RegularizerSpec.group_lasso(), 3)
                - 1.5 * math.log(n)
            )
            return float(vals[-1] + const)
    raise QuadratureConvergenceError(
        "polar quadrature did not converge",
        achieved=abs(vals[-1] - vals[-2]),
        log_value=vals[-1],
    )


def quad_moments(spec: RegularizerSpec, m: int, tol: float = 1e-8):
    """Mean vector and second-moment matrix of the unit-strength prior.

    Computed by direct quadrature of w and w w^T against exp(-h(w)); used to
    measure sigma_w^2 for custom penalties and to validate the built-in
    values.
    """
    if m > 3:
        raise ValueError("moment quadrature supports m <= 3")
    if spec.kind is RegularizerKind.RIDGE:
        extent = 13.0
    elif spec.kind is RegularizerKind.CUSTOM:
        extent = _custom_ray_radius(spec, m, 50.0)
    else:
        extent = 55.0
    ladder = (12, 24, 48) if m == 3 else (16, 32, 64, 128)
    grade = 4 if (m > 1 and spec.kind is not RegularizerKind.RIDGE) else 0
    prev = None
    delta = math.inf
    for panels in ladder:
        nodes, weights = _panel_axis(-extent, extent, panels, grade=grade)
        n_axis = nodes.shape[0]
        rows = n_axis if m == 1 else max(1, _CHUNK_TARGET // (n_axis ** (m - 1)))
        shift = None
        s0 = 0.0
        s1 = np.zeros(m)
        s2 = np.zeros((m, m))
        for start in range(0, n_axis, rows):
            blocks = [nodes[start : start + rows]] + [nodes] * (m - 1)
            parts = _broadcast_parts(blocks)
            h = _h_on_grid(spec, parts)
            if shift is None:
                shift = float(h.min())
            dens = np.exp(-(h - shift))
            wblocks = [weights[start : start + rows]] + [weights] * (m - 1)
            wparts = _broadcast_parts(wblocks)
            wprod = np.ones_like(dens)
            for wp in wparts:
                wprod = wprod * wp
            core = dens * wprod
            s0 += float(np.sum(core))
            coords = [np.broadcast_to(p, core.shape) for p in parts]
            for i in range(m):
                s1[i] += float(np.sum(core * coords[i]))
                for j in range(i, m):
                    s2[i, j] += float(np.sum(core * coords[i] * coords[j]))
        for i in range(m):
            for j in range(i):
                s2[i, j] = s2[j, i]
        mean = s1 / s0
        second = s2 / s0
        if prev is not None:
            delta = max(
                float(np.max(np.abs(mean - prev[0]))),
                float(np.max(np.abs(second - prev[1]))),
            )
            if delta <= 0.5 * tol:
                return mean, second
        prev = (mean, second)
    raise QuadratureConvergenceError(
        "moment quadrature did not converge", achieved=delta, log_value=None
    )


def argmax_lambda_oracle(problem: WhitenedProblem, spec: RegularizerSpec,
                         tol: float = 1e-10, bracket_hi: float | None = None,
                         quad_tol: float = 1e-8) -> float:
    """Reference maximizer of the quadrature evidence.

    This is the module every frozen reference optimum originates from; it
    never calls the closed forms.  A golden-section pass at coarse quadrature
    tolerance brackets the optimum; three-point parabolic fits at decreasing
    spacing then localize the vertex, which tolerates the quadrature noise
    floor far better than comparisons of nearly equal values would.
    """
    engine = _BoxEngine(problem.y_tilde, spec)

    def value(lam: float, q_tol: float):
        beta = lam * problem.n ** (-0.5 * spec.kappa)
        res = engine.log_integral(beta, q_tol)
        return res.log_value + (problem.m / spec.kappa) * math.log(lam), res.abs_error_estimate

    coarse = max(quad_tol, 1e-6)
    if bracket_hi is None:
        bracket_hi = 1.0
        prev, _ = value(bracket_hi, coarse)
        while True:
            cand, _ = value(bracket_hi * 2.0, coarse)
            if cand < prev:
                bracket_hi *= 2.0
                break
            prev = cand
            bracket_hi *= 2.0
            if bracket_hi > 1e9:
                raise ValueError("no interior maximum found below lambda = 1e9")
    lo, hi = 1e-12, bracket_hi
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, _ = value(c, coarse)
    fd, _ = value(d, coarse)
    while hi - lo > 2e-3 * max(1e-300, 0.5 * (lo + hi)):
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc, _ = value(c, coarse)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd, _ = value(d, coarse)
    x0 = 0.5 * (lo + hi)
    for delta in (1e-2, 1e-3):
        step = delta * x0
        f_minus, e1 = value(x0 - step, quad_tol)
        f_0, e2 = value(x0, quad_tol)
        f_plus, e3 = value(x0 + step, quad_tol)
        curvature = f_plus - 2.0 * f_0 + f_minus
        noise = max(e1, e2, e3)
        if curvature >= -10.0 * noise:
            continue  # signal indistinguishable from quadrature noise
        shift = -0.5 * (f_plus - f_minus) / curvature * step
        x0 += max(-step, min(step, shift))
    # least-squares cubic over a moderate span: the wide spacing keeps the
    # fit far above the quadrature noise floor while the cubic term removes
    # the asymmetry bias a plain parabola would leave behind
    span = 3e-4 * x0
    ts = np.linspace(-span, span, 9)
    fs = np.array([value(x0 + t, quad_tol)[0] for t in ts])
    c3, c2, c1, _ = np.polyfit(ts, fs, 3)
    disc = 4.0 * c2 * c2 - 12.0 * c1 * c3
    t_star = 0.0
    if abs(c3) > 0 and disc >= 0.0:
        for root in ((-2.0 * c2 + math.sqrt(disc)) / (6.0 * c3),
                     (-2.0 * c2 - math.sqrt(disc)) / (6.0 * c3)):
            if 2.0 * c2 + 6.0 * c3 * root < 0.0:
                t_star = root
                break
    elif c2 < 0.0:
        t_star = -0.5 * c1 / c2
    return float(x0 + max(-span, min(span, t_star)))
