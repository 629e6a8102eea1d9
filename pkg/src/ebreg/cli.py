"""Command-line front end.

Subcommands: check-ard, estimate, curve, mc-curve, whiten, verify.  stdout
carries only machine-readable payloads (JSON or CSV); human diagnostics go
to stderr.  Exit codes: 0 success, 2 input error, 3 capability error
(unsupported model/engine combination), 4 verification failure.

When a curve is written to a file, a rendered figure and a JSON sidecar with
the asymptote land next to it (<output stem>.png / <stem>.asymptote.json)
unless --no-figure is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import evidence as _ev
from . import monte_carlo as _mc
from . import oracle as _orc
from . import verify as _verify
from .errors import EbregError, IngestionError, UnsupportedClosedFormError
from .estimator import ard_gate, estimate_lambda, estimate_lambda_problem
from .model import Dataset, RegularizerKind, RegularizerSpec, load_dataset, load_groups
from .reduction import check_whitened, decompose_by_groups, reduce, scale_factor, whiten

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CAPABILITY = 3
EXIT_VERIFY = 4

_MODELS = {
    "ridge": RegularizerSpec.ridge,
    "lasso": RegularizerSpec.lasso,
    "group-lasso": RegularizerSpec.group_lasso,
}


class CapabilityError(EbregError):
    pass


def _load(path: str) -> Dataset:
    p = Path(path)
    if not p.exists():
        raise IngestionError(f"input file not found: {path}")
    return load_dataset(p)


def _spec(name: str) -> RegularizerSpec:
    try:
        return _MODELS[name]()
    except KeyError:
        raise CapabilityError(f"unknown model {name!r}; choose from {sorted(_MODELS)}")


def _parse_grid(text: str):
    try:
        lo_s, hi_s, pts_s = text.split(",")
        lo, hi, pts = float(lo_s), float(hi_s), int(pts_s)
    except ValueError:
        raise IngestionError(f"bad --grid {text!r}; expected min,max,points")
    return _ev.lambda_grid(lo, hi, pts)


def _emit(payload: str, output: str | None) -> None:
    if output:
        Path(output).write_text(payload)
    else:
        sys.stdout.write(payload)


def _reduced_for_closed(dataset: Dataset):
    """Map a dataset whose Gram is s*I onto the whitened parameterization.

    Returns (problem, lam_scale, anchor_offset): closed forms evaluate at
    lam * lam_scale and the dataset-anchored value adds anchor_offset.
    """
    ok, _ = check_whitened(dataset.design)
    if ok:
        problem = reduce(dataset)
        lam_scale = 1.0
    else:
        s = scale_factor(dataset.design)
        if s is None:
            raise CapabilityError(
                "closed/oracle engines need a design whose Gram matrix is a "
                "multiple of the identity; run `ebreg whiten` first or use "
                "--engine mc"
            )
        y_tilde = dataset.design.T @ dataset.response / math.sqrt(s)
        from .model import WhitenedProblem

        problem = WhitenedProblem(y_tilde=y_tilde, n=dataset.n, m=dataset.m)
        lam_scale = (dataset.n / s) ** 0.5  # raised to kappa per model below
    y = dataset.response
    offset = -0.5 * (float(y @ y) - problem.y_norm**2)
    return problem, lam_scale, offset


def cmd_check_ard(args) -> int:
    dataset = _load(args.input)
    verdict = ard_gate(dataset)
    _emit(json.dumps(verdict.to_json_dict(), indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_estimate(args) -> int:
    dataset = _load(args.input)
    spec = _spec(args.model)
    if args.groups:
        ok, residual = check_whitened(dataset.design)
        if not ok:
            raise CapabilityError(
                f"--groups needs a whitened design (gram residual {residual:.3e}); "
                "run `ebreg whiten` first"
            )
        structure = load_groups(args.groups, dataset.m)
        payload = []
        for indices, sub in decompose_by_groups(dataset, structure):
            est = estimate_lambda_problem(sub, spec, tolerance=args.tol)
            payload.append(
                {"group": [i + 1 for i in indices], "estimate": est.to_json_dict()}
            )
        _emit(json.dumps({"groups": payload}, indent=2) + "\n", args.output)
        return EXIT_OK
    est = estimate_lambda(dataset, spec, tolerance=args.tol)
    _emit(json.dumps(est.to_json_dict(), indent=2) + "\n", args.output)
    return EXIT_OK


def _closed_or_oracle_curve(dataset, spec, grid, engine, oracle_tol):
    problem, lam_scale, offset = _reduced_for_closed(dataset)
    scale = lam_scale**spec.kappa
    points = []
    use_closed = engine == "closed" and _ev.has_closed_form(spec, problem.m)
    if engine == "closed" and not use_closed:
        if problem.m <= 3:
            print(
                f"note: no closed form for this model at m={problem.m}; "
                "serving these points from the quadrature oracle",
                file=sys.stderr,
            )
            engine = "oracle"
        else:
            raise CapabilityError(
                f"no closed form for m={problem.m} and quadrature stops at m=3; "
                "use --engine mc"
            )
    if engine == "oracle" and problem.m > 3:
        raise CapabilityError("quadrature oracle supports m <= 3; use --engine mc")
    if engine == "closed":
        for lam in grid:
            val = _ev.log_z(problem, spec, float(lam) * scale) + offset
            points.append(_ev.EvidencePoint(float(lam), val, "closed"))
    else:
        results = _orc.quad_log_z_grid(problem, spec, np.asarray(grid) * scale, tol=oracle_tol)
        for lam, res in zip(grid, results):
            points.append(_ev.EvidencePoint(float(lam), res.log_value + offset, "oracle"))
    return _ev.EvidenceCurve(
        points=tuple(points), asymptote=_ev.asymptote(dataset, spec)
    )


def cmd_curve(args) -> int:
    dataset = _load(args.input)
    spec = _spec(args.model)
    grid = _parse_grid(args.grid)
    engine = args.engine
    if engine == "mc":
        config = _mc.MCConfig(samples=args.samples, seed=args.seed, chunk_size=args.chunk_size)
        curve = _mc.mc_curve(dataset, spec, grid, config, workers=args.workers)
    else:
        curve = _closed_or_oracle_curve(dataset, spec, grid, engine, args.tol)
    _emit(curve.to_csv(), args.output)
    if args.output:
        out = Path(args.output)
        base = out.with_suffix("") if out.suffix else out
        base.with_suffix(".asymptote.json").write_text(
            json.dumps(curve.asymptote_json(), indent=2) + "\n"
        )
        if not args.no_figure:
            from . import figures

            figure_path = args.figure or str(base.with_suffix(".png"))
            figures.plot_curve(curve, figure_path, title=f"{args.model} ({engine})")
    elif args.figure:
        from . import figures

        figures.plot_curve(curve, args.figure, title=f"{args.model} ({engine})")
    return EXIT_OK


def cmd_whiten(args) -> int:
    dataset = _load(args.input)
    report = whiten(dataset.design)
    out = Path(args.output)
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i in range(dataset.n):
            writer.writerow(
                [repr(float(v)) for v in report.transformed_design[i]]
                + [repr(float(dataset.response[i]))]
            )
    transform_path = args.transform_output or str(out.with_suffix(".transform.csv"))
    with open(transform_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in report.transform:
            writer.writerow([repr(float(v)) for v in row])
    print(
        f"gram residual after whitening: {report.gram_residual:.3e}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_verify(args) -> int:
    report = _verify.run_checks(quick=args.quick)
    _emit(json.dumps(report, indent=2) + "\n", args.output)
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebreg",
        description="Evidence, divergence gate, and regularization-strength "
        "estimation for regularized linear regression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p, output_required=False):
        p.add_argument("--input", required=True, help="dataset file (CSV or JSON)")
        p.add_argument("--output", required=output_required, help="output path (default stdout)")

    p = sub.add_parser("check-ard", help="analytic divergence verdict")
    add_io(p)
    p.set_defaults(func=cmd_check_ard)

    p = sub.add_parser("estimate", help="empirical Bayes estimate + MAP weights")
    add_io(p)
    p.add_argument("--model", required=True, choices=sorted(_MODELS))
    p.add_argument("--tol", type=float, default=1e-10, help="relative bracket-width tolerance")
    p.add_argument("--groups", help="JSON file with 1-based feature groups")
    p.set_defaults(func=cmd_estimate)

    for name in ("curve", "mc-curve"):
        p = sub.add_parser(name, help="evidence curve as CSV (+ asymptote JSON, figure)")
        add_io(p)
        p.add_argument("--model", required=True, choices=sorted(_MODELS))
        p.add_argument("--grid", default="1e-3,1e3,61", help="min,max,points (log-spaced)")
        if name == "curve":
            p.add_argument(
                "--engine", default="closed", choices=("closed", "mc", "oracle")
            )
        p.add_argument("--samples", type=int, default=100_000, help="MC sample count")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--chunk-size", type=int, default=_mc.DEFAULT_CHUNK)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--tol", type=float, default=1e-8, help="oracle tolerance")
        p.add_argument("--figure", help="explicit figure path")
        p.add_argument("--no-figure", action="store_true", help="skip figure rendering")
        if name == "mc-curve":
            p.set_defaults(func=cmd_curve, engine="mc")
        else:
            p.set_defaults(func=cmd_curve)

    p = sub.add_parser("whiten", help="whiten the design; write dataset + transform CSV")
    add_io(p, output_required=True)
    p.add_argument("--transform-output", help="path for the transform matrix CSV")
    p.set_defaults(func=cmd_whiten)

    p = sub.add_parser("verify", help="run the oracle/moment/asymptote/scan suites")
    p.add_argument("--output", help="report path (default stdout)")
    p.add_argument("--quick", action="store_true", help="reduced suite (< 30 s)")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (IngestionError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (CapabilityError, UnsupportedClosedFormError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except EbregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
