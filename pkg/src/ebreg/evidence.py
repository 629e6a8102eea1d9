"""Closed-form log evidence, its derivative, and the large-lambda asymptote.

All model-level values are anchored absolutely: log Z -> -||y||^2/2 -
(n/2) log(2 pi) as lambda -> infinity (with ||y_tilde|| standing in for
||y|| when only the reduced problem is available).  The anchor makes the
closed forms, the quadrature oracle, and the Monte Carlo estimator directly
comparable instead of agreeing only up to unknown constants.

The group-lasso form subtracts two erfcx terms whose arguments can be close
(catastrophic cancellation) or negative (growth like 2*exp(x^2)), so the
difference is evaluated through dedicated branches: a log-sum for opposite
signs, an odd Taylor expansion when the arguments nearly coincide, an
asymptotic series with positive binomial numerators deep in the tail, and
the plain difference elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedClosedFormError
from .model import Dataset, RegularizerKind, RegularizerSpec, WhitenedProblem
from .special import (
    _ASYM_A,
    log_erfcx,
    xerfcx,
    xerfcx_deriv,
    xerfcx_deriv_asymptotic,
    xerfcx_prime,
)

_SQRT_PI = math.sqrt(math.pi)
_LOG_2PI = math.log(2.0 * math.pi)

# Branch thresholds for the erfcx-difference machinery.  The asymptotic
# series is machine accurate from 8 on; the Taylor radius keeps its
# truncation error below ~1e-12 of the leading term.
_ASYM_MIN = 8.0
_TAYLOR_FRAC = 0.01


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not math.isfinite(lam) or lam <= 0.0:
        raise ValueError(f"lambda must be a positive finite real, got {lam}")
    return lam


# ---------------------------------------------------------------------------
# stable differences of x*erfcx(x) and its derivative
# ---------------------------------------------------------------------------

def _binom_row_sum(two_k: int, r: float) -> float:
    # 2 * sum over odd j <= two_k of C(two_k, j) * r^(j-1)
    total = 0.0
    coef = float(two_k)  # C(two_k, 1)
    rpow = 1.0
    j = 1
    while j <= two_k:
        total += coef * rpow
        # advance j -> j + 2
        coef *= (two_k - j) * (two_k - j - 1) / ((j + 1) * (j + 2)) if j + 2 <= two_k else 0.0
        rpow *= r * r
        j += 2
    return 2.0 * total


def _gap_over_c_asymptotic(a: float, c: float) -> float:
    # (q(a+c) - q(a-c))/c for a - c >= _ASYM_MIN, q(x) = x erfcx x.
    r = c / a
    one_minus_r2 = (1.0 - r) * (1.0 + r)
    total = 0.0
    scale = 1.0 / a  # running a^(-2k-1)
    denom = 1.0
    for k in range(1, 40):
        scale /= a * a
        denom *= one_minus_r2 * one_minus_r2
        s_k = _binom_row_sum(2 * k, r)
        term = ((-1) ** (k + 1)) * _ASYM_A[k] * s_k * scale / denom
        total += term
        if abs(term) <= 1e-18 * abs(total):
            break
    return total / _SQRT_PI


def _dgap_over_c_asymptotic(a: float, c: float) -> float:
    # (q'(a-c) - q'(a+c))/c for a - c >= _ASYM_MIN.
    r = c / a
    one_minus_r2 = (1.0 - r) * (1.0 + r)
    total = 0.0
    scale = 1.0 / (a * a)  # running a^(-2k-2)
    denom = one_minus_r2  # running (1-r^2)^(2k+1)
    for k in range(1, 40):
        scale /= a * a
        denom *= one_minus_r2 * one_minus_r2
        t_k = _binom_row_sum(2 * k + 1, r)
        term = ((-1) ** (k + 1)) * 2 * k * _ASYM_A[k] * t_k * scale / denom
        total += term
        if abs(term) <= 1e-18 * abs(total):
            break
    return total / _SQRT_PI


def _log_q(x: float) -> float:
    # log(x * erfcx(x)) for x > 0
    return math.log(x) + log_erfcx(x)


def _log_q_neg(x: float) -> float:
    # log(-q(x)) = log((-x) * erfcx(x)) for x < 0; erfcx explodes, use log form.
    return math.log(-x) + log_erfcx(x)


def _q_deriv(a: float, order: int) -> float:
    if a >= _ASYM_MIN:
        return xerfcx_deriv_asymptotic(a, order)
    return xerfcx_deriv(a, order)


def _log_gap_over_c(a: float, c: float) -> float:
    """log[(q(a+c) - q(a-c)) / c] for a > 0, c > 0, with q(x) = x erfcx x."""
    if c > a:
        # q(a-c) < 0: two positive contributions, combine in log domain
        hi = _log_q(a + c)
        lo = _log_q_neg(a - c)
        return float(np.logaddexp(hi, lo)) - math.log(c)
    if a - c >= _ASYM_MIN:
        return math.log(_gap_over_c_asymptotic(a, c))
    if c <= _TAYLOR_FRAC * (1.0 + a):
        val = 2.0 * (
            _q_deriv(a, 1)
            + c * c * _q_deriv(a, 3) / 6.0
            + c ** 4 * _q_deriv(a, 5) / 120.0
        )
        return math.log(val)
    return math.log((xerfcx(a + c) - xerfcx(a - c)) / c)


def _log_dgap_over_c(a: float, c: float) -> float:
    """log[(q'(a-c) - q'(a+c)) / c]; q' is positive and strictly decreasing."""
    if c > a:
        x = a - c
        # q'(x) = (2x^2+1) erfcx(x) - 2x/sqrt(pi); for x < 0 both pieces are positive
        log_lo = float(
            np.logaddexp(
                math.log(2.0 * x * x + 1.0) + log_erfcx(x),
                math.log(-2.0 * x / _SQRT_PI),
            )
        )
        hi = xerfcx_prime(a + c)
        ratio = hi * math.exp(-log_lo) if log_lo < 700 else 0.0
        return log_lo + math.log1p(-ratio) - math.log(c)
    if a - c >= _ASYM_MIN:
        return math.log(_dgap_over_c_asymptotic(a, c))
    if c <= _TAYLOR_FRAC * (1.0 + a):
        val = -2.0 * (
            _q_deriv(a, 2)
            + c * c * _q_deriv(a, 4) / 6.0
            + c ** 4 * _q_deriv(a, 6) / 120.0
        )
        return math.log(val)
    return math.log((xerfcx_prime(a - c) - xerfcx_prime(a + c)) / c)


# ---------------------------------------------------------------------------
# anchored closed forms (log Z = log_z_inf + excess, excess -> 0)
# ---------------------------------------------------------------------------

def log_z_inf_problem(problem: WhitenedProblem) -> float:
    """Large-lambda limit of the anchored log evidence for a reduced problem."""
    return -0.5 * problem.y_norm**2 - 0.5 * problem.n * _LOG_2PI


def log_z_excess_ridge(problem: WhitenedProblem, lam: float) -> float:
    """log Z_ridge(lam) - log Z_ridge(inf); exact Gaussian integral."""
    lam = _check_lambda(lam)
    n = problem.n
    yn2 = problem.y_norm**2
    return 0.5 * problem.m * math.log(lam / (n + lam)) + 0.5 * yn2 * n / (n + lam)


def log_z_ridge(problem: WhitenedProblem, lam: float) -> float:
    """Anchored log evidence of the ridge model on a whitened problem."""
    return log_z_inf_problem(problem) + log_z_excess_ridge(problem, lam)


def d_log_z_ridge(problem: WhitenedProblem, lam: float) -> float:
    lam = _check_lambda(lam)
    n = problem.n
    yn2 = problem.y_norm**2
    return 0.5 * problem.m * n / (lam * (n + lam)) - 0.5 * yn2 * n / (n + lam) ** 2


def log_z_lasso_1d(y_scalar: float, lam: float, n: int) -> float:
    """Reduced one-coordinate lasso evidence: log[lam * integral of
    exp(-(y-w)^2/2 - (lam/sqrt(n))|w|) dw], via two erfcx terms.

    This is the bare reduced form (it matches quadrature of that expression
    exactly); the model-level log_z_lasso adds the anchoring constant.
    """
    lam = _check_lambda(lam)
    t = float(y_scalar)
    if not math.isfinite(t):
        raise ValueError("y_scalar must be finite")
    b = lam / math.sqrt(n)
    s = np.logaddexp(
        log_erfcx((b - t) / math.sqrt(2.0)), log_erfcx((b + t) / math.sqrt(2.0))
    )
    return math.log(lam) + 0.5 * math.log(math.pi / 2.0) - 0.5 * t * t + float(s)


def _lasso_1d_excess(t: float, lam: float, n: int) -> float:
    # log_z_lasso_1d minus its own lambda -> inf limit, log(2 sqrt(n)) - t^2/2
    return log_z_lasso_1d(t, lam, n) + 0.5 * t * t - math.log(2.0 * math.sqrt(n))


def d_log_z_lasso_1d(y_scalar: float, lam: float, n: int) -> float:
    """d/d lambda of the one-coordinate lasso log evidence."""
    lam = _check_lambda(lam)
    t = float(y_scalar)
    rt2 = math.sqrt(2.0)
    b = lam / math.sqrt(n)
    x1 = (b - t) / rt2
    x2 = (b + t) / rt2
    l1 = log_erfcx(x1)
    l2 = log_erfcx(x2)
    top = max(l1, l2)
    u1 = math.exp(l1 - top)
    u2 = math.exp(l2 - top)
    scale = math.exp(-top) if top > -700 else 0.0
    # d log(sum erfcx)/d beta, with erfcx'(x) = 2 x erfcx(x) - 2/sqrt(pi)
    num = 2.0 * x1 * u1 + 2.0 * x2 * u2 - (4.0 / _SQRT_PI) * scale
    dlog = num / (u1 + u2) / rt2
    return 1.0 / lam + dlog / math.sqrt(n)


def log_z_lasso(problem: WhitenedProblem, lam: float) -> float:
    """Anchored log evidence of the lasso model; the coordinatewise objective
    separates, so this is the sum of the one-coordinate forms plus the single
    anchoring constant -(n/2) log(2 pi) - m log(2 sqrt(n))."""
    lam = _check_lambda(lam)
    excess = sum(_lasso_1d_excess(float(t), lam, problem.n) for t in problem.y_tilde)
    return log_z_inf_problem(problem) + excess


def d_log_z_lasso(problem: WhitenedProblem, lam: float) -> float:
    return sum(d_log_z_lasso_1d(float(t), lam, problem.n) for t in problem.y_tilde)


def _gl3_scaled_args(problem: WhitenedProblem, lam: float):
    a = lam / math.sqrt(2.0 * problem.n)
    c = problem.y_norm / math.sqrt(2.0)
    return a, c


def _gl3_excess(problem: WhitenedProblem, lam: float) -> float:
    a, c = _gl3_scaled_args(problem, lam)
    if c == 0.0:
        return math.log(_SQRT_PI) + 3.0 * math.log(a) + math.log(_q_deriv_pos(a))
    return 3.0 * math.log(a) + math.log(_SQRT_PI / 2.0) + _log_gap_over_c(a, c)


def log_z_group_lasso(problem: WhitenedProblem, lam: float) -> float:
    """Anchored log evidence of the joint-norm (group lasso) model.

    Closed forms exist for m = 1 (identical to the one-coordinate lasso) and
    m = 3, where with a = lam/sqrt(2n) and c = ||y_tilde||/sqrt(2):

        excess = 3 log a + log(sqrt(pi)/2) + log[(q(a+c) - q(a-c))/c]

    and q(x) = x erfcx x; the y_tilde = 0 branch is the c -> 0 limit
    excess = log(sqrt(pi) a^3 q'(a)), which the difference machinery matches
    continuously.  Other m have no closed form here.
    """
    lam = _check_lambda(lam)
    if problem.m == 1:
        return log_z_lasso(problem, lam)
    if problem.m != 3:
        raise UnsupportedClosedFormError(
            f"no closed-form joint-norm evidence for m={problem.m}; "
            "use the quadrature oracle (m <= 3) or Monte Carlo"
        )
    return log_z_inf_problem(problem) + _gl3_excess(problem, lam)


def _q_deriv_pos(a: float) -> float:
    val = xerfcx_prime(a)
    return val


def d_log_z_group_lasso(problem: WhitenedProblem, lam: float) -> float:
    """Analytic d/d lambda of the joint-norm log evidence (m = 1 or 3)."""
    lam = _check_lambda(lam)
    if problem.m == 1:
        return d_log_z_lasso(problem, lam)
    if problem.m != 3:
        raise UnsupportedClosedFormError(
            f"no closed-form joint-norm derivative for m={problem.m}"
        )
    a, c = _gl3_scaled_args(problem, lam)
    if c == 0.0:
        ratio = _q_deriv(a, 2) / _q_deriv_pos(a)
        slope_a = 3.0 / a + ratio
    else:
        slope_a = 3.0 / a - math.exp(_log_dgap_over_c(a, c) - _log_gap_over_c(a, c))
    return slope_a / math.sqrt(2.0 * problem.n)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def has_closed_form(spec: RegularizerSpec, m: int) -> bool:
    if spec.kind is RegularizerKind.RIDGE:
        return True
    if spec.kind is RegularizerKind.LASSO:
        return True
    if spec.kind is RegularizerKind.GROUP_LASSO:
        return m in (1, 3)
    return False


def log_z(problem: WhitenedProblem, spec: RegularizerSpec, lam: float) -> float:
    """Anchored closed-form log evidence for the given model."""
    if spec.kind is RegularizerKind.RIDGE:
        return log_z_ridge(problem, lam)
    if spec.kind is RegularizerKind.LASSO:
        return log_z_lasso(problem, lam)
    if spec.kind is RegularizerKind.GROUP_LASSO:
        return log_z_group_lasso(problem, lam)
    raise UnsupportedClosedFormError("custom regularizers have no closed form")


def d_log_z(problem: WhitenedProblem, spec: RegularizerSpec, lam: float) -> float:
    """Analytic lambda-derivative of the closed-form log evidence."""
    if spec.kind is RegularizerKind.RIDGE:
        return d_log_z_ridge(problem, lam)
    if spec.kind is RegularizerKind.LASSO:
        return d_log_z_lasso(problem, lam)
    if spec.kind is RegularizerKind.GROUP_LASSO:
        return d_log_z_group_lasso(problem, lam)
    raise UnsupportedClosedFormError("custom regularizers have no closed form")


def log_z_excess(problem: WhitenedProblem, spec: RegularizerSpec, lam: float) -> float:
    """log Z(lam) - log Z(inf), computed without forming either log alone.

    Used by the asymptote checks, where the interesting quantity is a tiny
    difference that would otherwise drown in the anchor constants.
    """
    if spec.kind is RegularizerKind.RIDGE:
        return log_z_excess_ridge(problem, lam)
    if spec.kind is RegularizerKind.LASSO:
        return sum(_lasso_1d_excess(float(t), lam, problem.n) for t in problem.y_tilde)
    if spec.kind is RegularizerKind.GROUP_LASSO:
        _check_lambda(lam)
        if problem.m == 1:
            return _lasso_1d_excess(float(problem.y_tilde[0]), lam, problem.n)
        if problem.m != 3:
            raise UnsupportedClosedFormError(
                f"no closed-form joint-norm evidence for m={problem.m}"
            )
        return _gl3_excess(problem, lam)
    raise UnsupportedClosedFormError("custom regularizers have no closed form")


# ---------------------------------------------------------------------------
# asymptote
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Asymptote:
    """Large-lambda expansion: Z = exp(log_z_inf) * (1 + coeff * lam^(-2/kappa)) + O(lam^(-3/kappa))."""

    log_z_inf: float
    second_order_coeff: float
    kappa: float

    def log_z_at(self, lam: float) -> float:
        """Second-order prediction of log Z at a (large) lambda."""
        return self.log_z_inf + math.log1p(
            self.second_order_coeff * float(lam) ** (-2.0 / self.kappa)
        )


def asymptote(data, spec: RegularizerSpec) -> Asymptote:
    """Large-lambda asymptote for a Dataset (raw norms) or WhitenedProblem.

    The second-order coefficient is (sigma_w^2 / 2) * (||design^T y||^2 -
    ||design||_F^2); its sign decides the divergence dichotomy.  For a
    reduced problem the whitening identities give n*||y_tilde||^2 and n*m
    for the two squared norms, and the anchor uses ||y_tilde|| in place of
    ||y||.
    """
    sigma_sq = spec.sigma_w_sq_for(data.m)
    if isinstance(data, WhitenedProblem):
        log_inf = log_z_inf_problem(data)
        phi_ty_sq = data.n * data.y_norm**2
        phi_f_sq = float(data.n * data.m)
    elif isinstance(data, Dataset):
        y = data.response
        log_inf = -0.5 * float(y @ y) - 0.5 * data.n * _LOG_2PI
        phi_ty = data.design.T @ y
        phi_ty_sq = float(phi_ty @ phi_ty)
        phi_f_sq = float(np.sum(data.design**2))
    else:
        raise TypeError("asymptote expects a Dataset or WhitenedProblem")
    coeff = 0.5 * sigma_sq * (phi_ty_sq - phi_f_sq)
    return Asymptote(log_z_inf=log_inf, second_order_coeff=coeff, kappa=spec.kappa)


# ---------------------------------------------------------------------------
# curves
# ---------------------------------------------------------------------------

DEFAULT_GRID = (1e-3, 1e3, 61)


def lambda_grid(lo: float = DEFAULT_GRID[0], hi: float = DEFAULT_GRID[1],
                points: int = DEFAULT_GRID[2]) -> np.ndarray:
    if not (0 < lo < hi) or points < 2:
        raise ValueError("grid needs 0 < lo < hi and at least 2 points")
    return np.logspace(math.log10(lo), math.log10(hi), points)


@dataclass(frozen=True)
class EvidencePoint:
    lam: float
    log_z: float
    branch: str  # "closed" | "mc" | "oracle"


@dataclass(frozen=True)
class EvidenceCurve:
    """Sampled (lambda, log Z) pairs plus the asymptote, serializable."""

    points: tuple[EvidencePoint, ...]
    asymptote: Asymptote
    std_errors: tuple[float, ...] | None = None
    effective_samples: tuple[float, ...] | None = None

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    @property
    def log_zs(self) -> np.ndarray:
        return np.array([p.log_z for p in self.points])

    def to_csv(self) -> str:
        has_se = self.std_errors is not None
        header = "lambda,log_z,branch"
        if has_se:
            header += ",std_error_log"
        lines = [header]
        for i, p in enumerate(self.points):
            row = f"{float(p.lam)!r},{float(p.log_z)!r},{p.branch}"
            if has_se:
                row += f",{float(self.std_errors[i])!r}"
            lines.append(row)
        return "\n".join(lines) + "\n"

    def asymptote_json(self) -> dict:
        return {
            "log_z_inf": self.asymptote.log_z_inf,
            "second_order_coeff": self.asymptote.second_order_coeff,
            "kappa": self.asymptote.kappa,
        }


def closed_form_curve(problem: WhitenedProblem, spec: RegularizerSpec,
                      lambdas=None) -> EvidenceCurve:
    """Evaluate the closed form across a lambda grid."""
    if lambdas is None:
        lambdas = lambda_grid()
    pts = tuple(
        EvidencePoint(float(l), log_z(problem, spec, float(l)), "closed")
        for l in lambdas
    )
    return EvidenceCurve(points=pts, asymptote=asymptote(problem, spec))
