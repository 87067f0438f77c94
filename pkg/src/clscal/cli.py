"""Command-line front end.

Subcommands: ``solve``, ``calibrate``, ``split-charts``, ``crlb`` and
``verify``.  Results go to stdout (or ``--out``), diagnostics to stderr.
Exit status is 0 on success, 1 on validation errors and 2 on numerical
failures such as rank loss.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .ccm import (
    PRESETS,
    calibrate,
    find_white_patch,
    load_dataset,
    load_sample_dataset,
    preset_constraint,
    render_split_charts,
    white_balance,
    write_ppm,
)
from .crlb import NORMS, crlb_constrained, vectorize_model
from .errors import ClsError, ParseError, ValidationError
from .linalg import WeightMatrix
from .oracles import verify_suite
from .solver import ConstraintSpec, ProblemData, solve_constrained, solve_unconstrained


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with floats written to 17 significant digits (lossless round trip)."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return json.dumps(x)
        return format(x, ".17g")
    if obj is None:
        return "null"
    return json.dumps(obj)


def _read_json(path, what: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {what} file {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno, exc.colno) from None


def _matrix_field(data, key, path):
    if key not in data:
        raise ParseError(f"missing key {key!r}", path)
    try:
        a = np.array(data[key], dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{key} is not a numeric nested array", path) from None
    if a.ndim != 2:
        raise ParseError(f"{key} must be a nested row-major array (2-D), got {a.ndim}-D", path)
    return a


def parse_custom_constraint(path) -> ConstraintSpec:
    """Read ``{"K": [[...]], "F": [[...]], "G": [[...]]}`` and validate ranks."""
    data = _read_json(path, "constraint spec")
    if not isinstance(data, dict):
        raise ParseError("constraint spec must be a JSON object with keys K, F, G", path)
    return ConstraintSpec.create(*(_matrix_field(data, key, path) for key in ("K", "F", "G")))


def _weight(path, n):
    if path is None:
        return None
    data = _read_json(path, "weight")
    # either {"W": [[...]]} or a bare nested array
    arr = _matrix_field(data if isinstance(data, dict) else {"W": data}, "W", path)
    if arr.shape != (n, n):
        raise ValidationError(f"weight in {path} must be {n}x{n}, got {arr.shape[0]}x{arr.shape[1]}")
    return WeightMatrix.from_array(arr, "W")


def _sigma(value, n):
    if value is None:
        return None
    if not value > 0:
        raise ValidationError(f"--sigma must be positive, got {value}")
    return WeightMatrix.from_array(value**2 * np.eye(n), "Sigma")


def _dataset(args):
    if (args.measured is None) != (args.reference is None):
        raise ValidationError("--measured and --reference must be given together")
    if args.measured is None:
        ds = load_sample_dataset()
        if args.white_patch is not None:
            ds = replace(ds, white_patch=find_white_patch(ds.names, ds.measured, args.white_patch))
    else:
        for p in (args.measured, args.reference):
            if not Path(p).is_file():
                raise ValidationError(f"no such file: {p}")
        ds = load_dataset(args.measured, args.reference, args.white_patch)
    return ds if args.no_white_balance else white_balance(ds)


def _preset(args, q=3, p=3):
    spec = None
    if args.constraint == "custom":
        if not args.spec:
            raise ValidationError("--constraint custom requires --spec FILE")
        spec = parse_custom_constraint(args.spec)
    elif args.spec:
        raise ValidationError("--spec is only valid with --constraint custom")
    return preset_constraint(args.constraint, q, p, spec)


def _emit(args, result: dict) -> None:
    if args.format == "json":
        text = dumps(result) + "\n"
    else:
        lines = []
        for k, v in result.items():
            if isinstance(v, dict):
                lines.append(f"{k}:")
                lines.extend(f"  {kk}: {vv}" for kk, vv in v.items())
            else:
                lines.append(f"{k}: {v}")
        text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


# --- subcommands ------------------------------------------------------------------


def cmd_solve(args) -> int:
    data = _read_json(args.problem, "problem")
    if not isinstance(data, dict):
        raise ParseError("problem file must be a JSON object with keys M, R and optional W", args.problem)
    M = _matrix_field(data, "M", args.problem)
    R = _matrix_field(data, "R", args.problem)
    W = _matrix_field(data, "W", args.problem) if "W" in data else None
    if args.weight:
        W = _weight(args.weight, M.shape[1])
    prob = ProblemData.create(M, R, W)
    preset = _preset(args, prob.q, prob.p)
    if preset.spec is None:
        C_u = solve_unconstrained(prob)
        result = {"constraint": "none", "C_u": C_u, "C_hat": C_u}
    else:
        sol = solve_constrained(prob, preset.spec)
        result = {
            "constraint": preset.name,
            "C_u": sol.C_u,
            "C_hat": sol.C_hat,
            "delta_c": sol.Delta_c,
            "err_unconstrained": sol.err_u,
            "err_constrained": sol.err_c,
            "excess_sq": sol.excess,
            "excess_pct": sol.excess_pct,
        }
    _emit(args, result)
    return 0


def cmd_calibrate(args) -> int:
    ds = _dataset(args)
    preset = _preset(args)
    rep = calibrate(ds, preset, _weight(args.weight, ds.k), _sigma(args.sigma, 3 * ds.k), args.norm, balance=False)
    if args.charts:
        if rep.solution is None:
            raise ValidationError("--charts needs a constrained preset")
        _write_charts(args.charts, ds, rep, args.srgb)
    _emit(args, rep.to_dict())
    return 0


def _write_charts(directory, ds, rep, srgb):
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    agree, disagree = render_split_charts(ds, rep.solution, rep.projections, srgb)
    write_ppm(out / "agreement.ppm", agree)
    write_ppm(out / "disagreement.ppm", disagree)
    return [str(out / "agreement.ppm"), str(out / "disagreement.ppm")]


def cmd_split_charts(args) -> int:
    if args.constraint == "none":
        raise ValidationError("split charts need a constraint; choose row-sum, total-sum or custom")
    ds = _dataset(args)
    rep = calibrate(ds, _preset(args), _weight(args.weight, ds.k), balance=False)
    files = _write_charts(args.out_dir, ds, rep, args.srgb)
    _emit(args, {"constraint": rep.constraint.name, "files": files})
    return 0


def cmd_crlb(args) -> int:
    ds = _dataset(args)
    preset = _preset(args)
    prob = ProblemData.create(ds.M, ds.R)
    rep = crlb_constrained(vectorize_model(prob, preset.spec, _sigma(args.sigma, 3 * ds.k)), args.norm)
    _emit(args, {
        "constraint": preset.name,
        "norm": args.norm,
        "crlb_norm_unconstrained": rep.norm_u,
        "crlb_norm_constrained": rep.norm_c,
        "crlb_pct": rep.reduction_pct,
        "crlb_diag_unconstrained": np.diag(rep.J_u_inv),
        "crlb_diag_constrained": np.diag(rep.J_c_inv),
    })
    return 0


def cmd_verify(args) -> int:
    if args.seed < 0:
        raise ValidationError("--seed must be non-negative")
    if args.trials < 100:
        raise ValidationError("--trials must be at least 100")
    summary = verify_suite(args.seed, args.instances, args.trials, args.noise_sigma)
    _emit(args, summary)
    if not summary["passed"]:
        failed = [k for k, v in summary["checks"].items() if not v["passed"]]
        print(f"error: verification failed: {', '.join(failed)}", file=sys.stderr)
        return 2
    return 0


class _Parser(argparse.ArgumentParser):
    # usage errors are validation errors: exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clscal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--format", choices=("json", "text"), default="json")
        p.add_argument("--out", help="write the result here instead of stdout")

    def constraint(p, default="row-sum"):
        p.add_argument("--constraint", choices=PRESETS, default=default)
        p.add_argument("--spec", help="JSON file with K, F, G for --constraint custom")

    def chart_inputs(p):
        p.add_argument("--measured", help="measured patch CSV (patch,R,G,B); default: bundled sample")
        p.add_argument("--reference", help="reference patch CSV (patch,R,G,B)")
        p.add_argument("--white-patch", help="white patch name or 0-based index")
        p.add_argument("--no-white-balance", action="store_true", help="use measurements as given")

    p = sub.add_parser("solve", help="solve a general (constrained) matrix least-squares problem")
    p.add_argument("--problem", required=True, help="JSON file with M, R and optional W")
    p.add_argument("--weight", help="JSON file with the k x k weight W")
    constraint(p, "none")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("calibrate", help="fit a color correction matrix")
    chart_inputs(p)
    constraint(p)
    p.add_argument("--weight", help="JSON file with the k x k weight W (default identity)")
    p.add_argument("--sigma", type=float, help="noise standard deviation for the CRLB (default 1)")
    p.add_argument("--norm", choices=NORMS, default="frobenius")
    p.add_argument("--charts", help="directory for agreement/disagreement PPM charts")
    p.add_argument("--srgb", action="store_true", help="apply the sRGB transfer curve to charts")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("split-charts", help="render agreement/disagreement charts")
    chart_inputs(p)
    constraint(p)
    p.add_argument("--weight", help="JSON file with the k x k weight W")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--srgb", action="store_true")
    common(p)
    p.set_defaults(func=cmd_split_charts)

    p = sub.add_parser("crlb", help="Cramer-Rao bounds with and without the constraint")
    chart_inputs(p)
    constraint(p)
    p.add_argument("--sigma", type=float)
    p.add_argument("--norm", choices=NORMS, default="frobenius")
    common(p)
    p.set_defaults(func=cmd_crlb)

    p = sub.add_parser("verify", help="run the oracle and Monte Carlo checks")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--noise-sigma", type=float, default=0.05)
    common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    try:
        return args.func(args)
    except ClsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
