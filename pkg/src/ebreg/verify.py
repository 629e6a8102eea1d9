"""Self-contained verification suites behind the ``verify`` CLI subcommand.

Each check runs on seeded fixtures and reports the measured error against
its tolerance, so a regression anywhere in the closed forms, the samplers,
or the quadrature shows up as a failing entry in the JSON report.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate as _integrate

from . import evidence as _ev
from . import monte_carlo as _mc
from . import oracle as _orc
from .estimator import scan_unimodal
from .model import Dataset, RegularizerSpec, WhitenedProblem, builtin_sigma_w_sq
from .reduction import reduce as _reduce
from .reduction import whiten as _whiten
from .special import erfcx

_SPECS = {
    "ridge": RegularizerSpec.ridge(),
    "lasso": RegularizerSpec.lasso(),
    "group-lasso": RegularizerSpec.group_lasso(),
}


def _check(name, measured, tolerance, passed=None, detail=None):
    if passed is None:
        passed = bool(measured <= tolerance)
    entry = {
        "name": name,
        "passed": bool(passed),
        "measured": float(measured),
        "tolerance": float(tolerance),
    }
    if detail:
        entry["detail"] = detail
    return entry


def _random_problem(rng, model: str, finite: bool | None = None) -> WhitenedProblem:
    m = 3 if model == "group-lasso" else int(rng.integers(1, 4))
    n = int(rng.integers(1, 6))
    y = rng.standard_normal(m)
    norm = np.linalg.norm(y)
    if finite is True:
        y *= rng.uniform(1.2, 2.5) * math.sqrt(m) / norm
    elif finite is False:
        y *= rng.uniform(0.2, 0.95) * math.sqrt(m) / norm
    return WhitenedProblem(y_tilde=y, n=n, m=m)


def check_special() -> list[dict]:
    xs = np.linspace(-5.0, 5.0, 101)
    ident = max(
        abs(erfcx(-x) - (2.0 * math.exp(x * x) - erfcx(x))) / math.exp(x * x)
        for x in xs
    )
    grid = np.linspace(-8.0, 8.0, 50)
    h = 1e-6
    deriv = max(
        abs((erfcx(x + h) - erfcx(x - h)) / (2 * h) - (2 * x * erfcx(x) - 2 / math.sqrt(math.pi)))
        / max(abs(2 * x * erfcx(x) - 2 / math.sqrt(math.pi)), 1e-30)
        for x in grid
    )
    quad_err = 0.0
    for x in np.linspace(0.0, 10.0, 11):
        # t = x + s substituted exactly, keeping the quadrature away from its
        # absolute underflow floor at large x
        tail, _ = _integrate.quad(
            lambda s: math.exp(-2.0 * x * s - s * s), 0.0, 40.0,
            epsabs=0.0, epsrel=1e-13, limit=200,
        )
        ref = 2.0 / math.sqrt(math.pi) * tail
        quad_err = max(quad_err, abs(erfcx(x) - ref) / ref)
    return [
        _check("erfcx-reflection-identity", ident, 1e-10),
        _check("erfcx-derivative", deriv, 1e-6),
        _check("erfcx-defining-integral", quad_err, 1e-10),
    ]


def check_closed_vs_oracle(quick=False, closed_log_z=None) -> list[dict]:
    # full mode runs the complete oracle-equivalence sweep: 20 problems per
    # model across a 30-point log-spaced grid
    closed_log_z = closed_log_z or _ev.log_z
    rng = np.random.default_rng(20260810)
    n_prob = 2 if quick else 20
    n_lam = 7 if quick else 30
    out = []
    for model, spec in _SPECS.items():
        worst = 0.0
        for _ in range(n_prob):
            problem = _random_problem(rng, model)
            lams = np.logspace(-3, 3, n_lam)
            quads = _orc.quad_log_z_grid(problem, spec, lams, tol=1e-8)
            for lam, q in zip(lams, quads):
                worst = max(worst, abs(closed_log_z(problem, spec, float(lam)) - q.log_value))
        out.append(_check(f"closed-vs-oracle-{model}", worst, 1e-6))
    return out


def check_moments(quick=False) -> list[dict]:
    out = []
    worst_mean, worst_cov = 0.0, 0.0
    max_m = 2 if quick else 3
    for model, spec in _SPECS.items():
        for m in range(1, max_m + 1):
            mean, second = _orc.quad_moments(spec, m, tol=1e-8)
            sw = builtin_sigma_w_sq(spec.kind, m)
            worst_mean = max(worst_mean, float(np.max(np.abs(mean))))
            worst_cov = max(worst_cov, float(np.max(np.abs(second - sw * np.eye(m)))))
    out.append(_check("moments-quadrature-mean", worst_mean, 1e-8))
    out.append(_check("moments-quadrature-cov", worst_cov, 1e-6))

    n_samples = 200_000 if quick else 1_000_000
    worst_sig = 0.0
    for model, spec in _SPECS.items():
        m = 3
        w = _mc.sample_prior(spec, m, n_samples, seed=7)
        sw = builtin_sigma_w_sq(spec.kind, m)
        mean_se = math.sqrt(sw / n_samples)
        worst_sig = max(worst_sig, float(np.max(np.abs(w.mean(axis=0)))) / mean_se / 5.0)
        cov = (w.T @ w) / n_samples
        fourth = np.mean(w**4, axis=0)
        diag_se = np.sqrt(np.maximum(fourth - sw**2, 1e-12) / n_samples)
        worst_sig = max(
            worst_sig, float(np.max(np.abs(np.diag(cov) - sw) / diag_se)) / 5.0
        )
    out.append(_check("moments-mc-within-5se", worst_sig, 1.0))
    return out


def check_asymptote(quick=False) -> list[dict]:
    rng = np.random.default_rng(4)
    out = []
    for model, spec in _SPECS.items():
        worst = 0.0
        for _ in range(1 if quick else 3):
            problem = _random_problem(rng, model, finite=bool(rng.integers(0, 2)))
            asy = _ev.asymptote(problem, spec)
            lams = [1e2, 1e3, 1e4]
            resid = [
                abs(
                    math.expm1(_ev.log_z_excess(problem, spec, lam))
                    - asy.second_order_coeff * lam ** (-2.0 / spec.kappa)
                )
                for lam in lams
            ]
            k_fit = resid[0] * lams[0] ** (3.0 / spec.kappa)
            floor = 1e-13  # float64 floor on the measured residuals
            for lam, r in zip(lams[1:], resid[1:]):
                bound = k_fit * lam ** (-3.0 / spec.kappa) + floor
                worst = max(worst, r / bound)
        out.append(_check(f"asymptote-order-{model}", worst, 1.0))
    return out


def check_quasiconcavity(quick=False) -> list[dict]:
    rng = np.random.default_rng(99)
    lams = _ev.lambda_grid()
    count = 20 if quick else 80
    violations = []
    for model, spec in _SPECS.items():
        for _ in range(count):
            problem = _random_problem(rng, model)
            vals = [_ev.log_z(problem, spec, float(l)) for l in lams]
            if scan_unimodal(lams, vals) > 1:
                violations.append(
                    {"model": model, "y_tilde": problem.y_tilde.tolist(), "n": problem.n}
                )
    return [
        _check(
            "quasiconcavity-scan",
            float(len(violations)),
            0.0,
            passed=not violations,
            detail={"violations": violations} if violations else None,
        )
    ]


def check_mc_vs_closed(quick=False) -> list[dict]:
    rng = np.random.default_rng(11)
    n_samples = 100_000 if quick else 400_000
    worst = 0.0
    for model in ("ridge", "group-lasso"):
        spec = _SPECS[model]
        m, n = 3, 6
        white = _whiten(rng.standard_normal((n, m))).transformed_design
        y = rng.standard_normal(n)
        ds = Dataset(design=white, response=y)
        problem = _reduce(ds)
        offset = -0.5 * (float(y @ y) - problem.y_norm**2)
        config = _mc.MCConfig(samples=n_samples, seed=13)
        for lam in (0.5, 3.0):
            est = _mc.mc_log_z(ds, spec, lam, config)
            closed = _ev.log_z(problem, spec, lam) + offset
            worst = max(worst, abs(est.log_z - closed) / max(est.std_error_log, 1e-12) / 4.0)
    return [_check("mc-vs-closed-within-4se", worst, 1.0)]


def check_determinism(quick=False) -> list[dict]:
    rng = np.random.default_rng(3)
    ds = Dataset(design=rng.standard_normal((4, 3)), response=rng.standard_normal(4))
    spec = _SPECS["group-lasso"]
    lams = np.logspace(-2, 2, 9)
    config = _mc.MCConfig(samples=80_000, seed=42, chunk_size=10_000)
    a = _mc.mc_curve(ds, spec, lams, config, workers=1).to_csv()
    b = _mc.mc_curve(ds, spec, lams, config, workers=8).to_csv()
    c = _mc.mc_curve(ds, spec, lams, config, workers=1).to_csv()
    same = a == b == c
    return [_check("mc-determinism-workers", 0.0 if same else 1.0, 0.0, passed=same)]


def run_checks(quick: bool = False, closed_log_z=None) -> dict:
    checks: list[dict] = []
    checks.extend(check_special())
    checks.extend(check_closed_vs_oracle(quick=quick, closed_log_z=closed_log_z))
    checks.extend(check_moments(quick=quick))
    checks.extend(check_asymptote(quick=quick))
    checks.extend(check_quasiconcavity(quick=quick))
    checks.extend(check_mc_vs_closed(quick=quick))
    checks.extend(check_determinism(quick=quick))
    return {"passed": all(c["passed"] for c in checks), "checks": checks}
