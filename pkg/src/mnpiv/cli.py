"""Command-line interface: ``mnpiv {fit, test-miv, mc, diagnose}``.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 internal
invariant violation. JSON reports carry ``schema_version`` and echo the
resolved configuration; identical inputs and seeds give byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import make_basis
from .dgp import SIM_DEGREES, DgpSpec, McConfig, mc_study, table_cells
from .exceptions import InvariantError, NumericalError
from .montest import MivTestConfig, monotone_iv_test, slope_sign_test
from .npiv import (
    NpivConfig,
    Sample,
    fit_constrained,
    fit_unconstrained,
    identification_constant,
    restricted_tau_hat,
    sieve_tau_hat,
    unscale,
)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_INVARIANT = 0, 2, 3, 4


class InputError(ValueError):
    """Malformed user input (file contents or arguments)."""


# ---------------------------------------------------------------------------
# I/O helpers
# ---------------------------------------------------------------------------


def read_csv(path: str, required: tuple[str, ...], optional: tuple[str, ...] = ()) -> dict[str, np.ndarray]:
    """Read numeric columns from a headed CSV file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise InputError(f"{path}: file is empty") from None
    for name in required:
        if name not in header:
            raise InputError(f"{path}: missing required column '{name}' (header: {','.join(header)})")
    wanted = [c for c in (*required, *optional) if c in header]
    idx = {c: header.index(c) for c in wanted}
    cols: dict[str, list[float]] = {c: [] for c in wanted}
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise InputError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
        for c in wanted:
            cell = row[idx[c]].strip()
            try:
                value = float(cell)
            except ValueError:
                raise InputError(f"{path}: line {line}: column '{c}' is not a number: {cell!r}") from None
            if not math.isfinite(value):
                raise InputError(f"{path}: line {line}: column '{c}' is not finite: {cell!r}")
            cols[c].append(value)
    n = len(cols[wanted[0]]) if wanted else 0
    if n < 2:
        raise InputError(f"{path}: need at least 2 data rows, got {n}")
    return {c: np.asarray(v) for c, v in cols.items()}


def _clean(obj):
    """Make ``obj`` JSON-safe: numpy to builtins, NaN to null, infinities to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _emit_json(report: dict, path: str | None) -> None:
    body = {"schema_version": SCHEMA_VERSION, "version": __version__, **report}
    _write(json.dumps(_clean(body), indent=2, sort_keys=True, allow_nan=False) + "\n", path)


def _rescale_echo(meta: dict) -> dict:
    out = {}
    for var, m in meta.items():
        if m["method"] == "minmax":
            out[var] = {"method": "minmax", "min": m["min"], "max": m["max"]}
        else:
            out[var] = {"method": "ecdf", "n": len(m["sorted_values"])}
    return out


def _check_output_dir(path: str | None) -> None:
    if path not in (None, "-") and not Path(path).resolve().parent.is_dir():
        raise InputError(f"output directory does not exist: {Path(path).parent}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_fit(args) -> int:
    _check_output_dir(args.output)
    cols = read_csv(args.input, ("y", "x", "w"))
    sample = Sample.from_raw(cols["y"], cols["x"], cols["w"], args.rescale)
    config = NpivConfig(
        make_basis(args.degree_x, args.kx_knots),
        make_basis(args.degree_w, args.kw_knots),
        constrained=args.constrained,
        constraint_grid_size=args.constraint_grid,
        norm_bound=args.norm_bound,
    )
    fit = fit_constrained(sample, config) if args.constrained else fit_unconstrained(sample, config)
    if not fit.ok:
        raise NumericalError(f"QP solver stopped with status {fit.qp_diag.status.value}")
    if args.constrained and fit.min_slope_hat < -1e-8:
        raise InvariantError(f"constrained fit has negative slope {fit.min_slope_hat:.3e}")
    grid = np.linspace(0.0, 1.0, args.grid)
    _emit_json(
        {
            "command": "fit",
            "config": {
                "input": args.input,
                "rescale": args.rescale,
                "n": sample.n,
                **config.describe(),
            },
            "rescale_map": _rescale_echo(sample.rescale_meta),
            "beta": fit.beta,
            "knots": list(config.basis_x.interior_knots),
            "degree": config.basis_x.degree,
            "constrained": fit.constrained,
            "constraint_mode": fit.constraint_mode,
            "constraint_points": int(fit.constraint_points.size),
            "constraint_refined": fit.refined,
            "min_slope_hat": fit.min_slope_hat,
            "tau_hat": fit.tau_hat,
            "objective": fit.objective,
            "qp": fit.qp_diag.summary(),
            "predictions": {
                "x_unit": grid,
                "x": unscale(grid, sample.rescale_meta["x"]),
                "g_hat": fit.predict(grid),
            },
        },
        args.output,
    )
    return EXIT_OK


def cmd_test_miv(args) -> int:
    _check_output_dir(args.output)
    cols = read_csv(args.input, ("x", "w"), ("y",))
    sample = Sample.from_raw(np.zeros(cols["x"].size), cols["x"], cols["w"], args.rescale)
    config = MivTestConfig(
        u=args.u, h_min=args.h_min, epsilon=args.epsilon, n_boot=args.boot,
        alpha=args.alpha, cdf_bandwidth=args.cdf_bandwidth, seed=args.seed, threads=args.threads,
    )
    result = monotone_iv_test(sample, config)
    if result.reject != (result.statistic > result.critical_value) or not 0 <= result.p_value <= 1:
        raise InvariantError("inconsistent test result")
    _emit_json(
        {
            "command": "test-miv",
            "config": {"input": args.input, "rescale": args.rescale, "n": sample.n, **config.describe(sample.n)},
            "rescale_map": _rescale_echo(sample.rescale_meta),
            **result.to_dict(),
        },
        args.output,
    )
    return EXIT_OK


_CELL_KEYS = ("model", "n", "reps", "sigma", "kx", "kw", "kappa", "rho", "eta", "degree_x", "degree_w")
_METRICS = ("bias_sq_uncon", "var_uncon", "mse_uncon", "bias_sq_con", "var_con", "mse_con", "mse_ratio")


def _mc_cells(args) -> list[dict]:
    if args.table is not None:
        cells = table_cells(args.table)
    else:
        if len(args.kx) != len(args.kw):
            raise InputError("--kx and --kw must list the same number of values (they are paired)")
        cells = [
            dict(model=args.model, sigma=s, kx=kx, kw=kw, kappa=k, rho=r, eta=e)
            for s in args.sigma
            for kx, kw in zip(args.kx, args.kw)
            for k in args.kappa
            for r in args.rho
            for e in args.eta
        ]
    for c in cells:
        c.update(n=args.n, reps=args.reps, degree_x=args.degree_x, degree_w=args.degree_w)
    return cells


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cmd_mc(args) -> int:
    _check_output_dir(args.output)
    _check_output_dir(args.plot_data)
    cells = _mc_cells(args)
    table = io.StringIO()
    tw = csv.writer(table, lineterminator="\n")
    tw.writerow([*_CELL_KEYS, "failures", *_METRICS])
    plot = io.StringIO()
    pw = csv.writer(plot, lineterminator="\n")
    pw.writerow(["cell", "x", "g_true", "mean_uncon", "lower_uncon", "upper_uncon",
                 "mean_con", "lower_con", "upper_con"])
    for i, cell in enumerate(cells):
        spec = DgpSpec(
            f"Model{cell['model']}", n=cell["n"], kappa=cell["kappa"], rho=cell["rho"],
            eta=cell["eta"], sigma_eps=cell["sigma"],
        )
        npiv = NpivConfig(make_basis(cell["degree_x"], cell["kx"]), make_basis(cell["degree_w"], cell["kw"]))
        report = mc_study(McConfig(spec, npiv, cell["reps"], args.grid, args.seed, args.threads))
        for est in ("unconstrained", "constrained"):
            pt = report.pointwise[est]
            if np.abs(pt["mse"] - pt["bias_sq"] - pt["variance"]).max() > 1e-10:
                raise InvariantError("MSE decomposition failed")
        row = report.row()
        tw.writerow([_fmt(cell[k]) for k in _CELL_KEYS] + [report.failures] + [_fmt(row[m]) for m in _METRICS])
        pu, pc = report.pointwise["unconstrained"], report.pointwise["constrained"]
        for j, x in enumerate(report.grid):
            pw.writerow([i, _fmt(float(x)), _fmt(float(report.g_true[j])),
                         *[_fmt(float(v)) for v in (pu["mean"][j], pu["mean"][j] - 2 * pu["sd"][j], pu["mean"][j] + 2 * pu["sd"][j])],
                         *[_fmt(float(v)) for v in (pc["mean"][j], pc["mean"][j] - 2 * pc["sd"][j], pc["mean"][j] + 2 * pc["sd"][j])]])
    _write(table.getvalue(), args.output)
    if args.plot_data:
        _write(plot.getvalue(), args.plot_data)
    return EXIT_OK


_ZETA_KEYS = ("c_f", "c_w", "C_F", "w1", "w2", "x1", "x2", "xt1", "xt2")


def _parse_zeta(items: list[str] | None, path: str | None) -> dict | None:
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read identification constants from {path}: {exc}") from exc
    elif items:
        data = {}
        for item in items:
            key, sep, value = item.partition("=")
            if not sep:
                raise InputError(f"--zeta expects KEY=VALUE, got {item!r}")
            try:
                data[key.strip()] = float(value)
            except ValueError:
                raise InputError(f"--zeta {key}: not a number: {value!r}") from None
    else:
        return None
    missing = [k for k in _ZETA_KEYS if k not in data]
    unknown = [k for k in data if k not in _ZETA_KEYS]
    if missing or unknown:
        raise InputError(f"identification constants: missing {missing}, unknown {unknown}")
    return {k: float(data[k]) for k in _ZETA_KEYS}


def _parse_a(values: list[str]) -> list[float]:
    out = []
    for v in values:
        try:
            a = float(v)
        except ValueError:
            raise InputError(f"--a-list: not a number: {v!r}") from None
        if not a >= 0:
            raise InputError(f"--a-list values must be >= 0 (or inf), got {v!r}")
        out.append(a)
    return out


def cmd_diagnose(args) -> int:
    _check_output_dir(args.output)
    a_list = _parse_a(args.a_list)
    zeta = _parse_zeta(args.zeta, args.zeta_file)
    lo, hi = args.trunc
    if not 0 <= lo < hi <= 1:
        raise InputError("--trunc must satisfy 0 <= lower < upper <= 1")
    sample = None
    if args.input:
        cols = read_csv(args.input, ("x", "w"), ("y",))
        y = cols.get("y", np.zeros(cols["x"].size))
        sample = Sample.from_raw(y, cols["x"], cols["w"], args.rescale)
        design = sample
        mode = {"mode": "empirical", "input": args.input, "n": sample.n, "rescale": args.rescale}
    else:
        family = {"example1": "Example1Normal", "example2": "Example2TwoDim",
                  "model1": "Model1", "model2": "Model2"}[args.design]
        design = DgpSpec(family, rho=args.rho)
        mode = {"mode": "population", "design": family}
        if family != "Example2TwoDim":
            mode["rho"] = args.rho
    taus, restricted = [], []
    for K in args.k_list:
        knots = K - args.degree - 1
        if knots < 0:
            raise InputError(f"K={K} is below the minimum dimension {args.degree + 1} for degree {args.degree}")
        basis = make_basis(args.degree, knots)
        config = NpivConfig(basis, basis)
        taus.append({"K": K, "tau_hat": sieve_tau_hat(design, config)})
        for a in a_list:
            value = restricted_tau_hat(design, config, a, (lo, hi), seed=args.seed)
            label = "exact" if math.isinf(a) else "lower bound (heuristic)"
            restricted.append({"K": K, "a": a, "value": value, "label": label})
    report = {
        "command": "diagnose",
        "config": {**mode, "degree": args.degree, "k_list": list(args.k_list), "a_list": a_list,
                   "trunc": [lo, hi], "seed": args.seed, "alpha": args.alpha,
                   "identification_inputs": zeta},
        "tau_hat": taus,
        "restricted_tau_hat": restricted,
        "identification_constant": identification_constant(**zeta) if zeta else None,
        "slope_sign_test": None,
    }
    if sample is not None and "y" in cols:
        report["slope_sign_test"] = slope_sign_test(sample, args.alpha).to_dict()
    _emit_json(report, args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mnpiv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mnpiv {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="series NPIV fit from a CSV with columns y,x,w")
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="JSON report path (default: stdout)")
    p.add_argument("--constrained", action="store_true", help="impose a nondecreasing fit")
    p.add_argument("--kx-knots", type=_nonneg_int, default=3)
    p.add_argument("--kw-knots", type=_nonneg_int, default=4)
    p.add_argument("--degree-x", type=_positive_int, default=3)
    p.add_argument("--degree-w", type=_positive_int, default=4)
    p.add_argument("--grid", type=_positive_int, default=100, help="number of prediction points")
    p.add_argument("--constraint-grid", type=_positive_int, default=401)
    p.add_argument("--norm-bound", type=float, default=None)
    p.add_argument("--rescale", choices=("minmax", "ecdf"), default="minmax")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test-miv", help="bootstrap test of the monotone-instrument condition")
    p.add_argument("--input", required=True)
    p.add_argument("--output")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--boot", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--u", type=float, default=0.5)
    p.add_argument("--h-min", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--cdf-bandwidth", type=float, default=0.3)
    p.add_argument("--rescale", choices=("minmax", "ecdf"), default="minmax")
    p.add_argument("--threads", type=_positive_int, default=None)
    p.set_defaults(func=cmd_test_miv)

    p = sub.add_parser("mc", help="Monte Carlo comparison of the two estimators")
    p.add_argument("--model", type=int, choices=(1, 2), default=1)
    p.add_argument("--table", type=int, choices=(1, 2, 3, 4), default=None,
                   help="run every cell of a standard simulation table (overrides the cell flags)")
    p.add_argument("--reps", type=_positive_int, default=1000)
    p.add_argument("--n", type=_positive_int, default=500)
    p.add_argument("--sigma", type=float, nargs="+", default=[0.1])
    p.add_argument("--kx", type=_nonneg_int, nargs="+", default=[3])
    p.add_argument("--kw", type=_nonneg_int, nargs="+", default=[4])
    p.add_argument("--kappa", type=float, nargs="+", default=[1.0])
    p.add_argument("--rho", type=float, nargs="+", default=[0.3])
    p.add_argument("--eta", type=float, nargs="+", default=[0.3])
    p.add_argument("--degree-x", type=_positive_int, default=SIM_DEGREES[0])
    p.add_argument("--degree-w", type=_positive_int, default=SIM_DEGREES[1])
    p.add_argument("--grid", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", help="table CSV path (default: stdout)")
    p.add_argument("--plot-data", help="CSV with pointwise mean and +/- 2 sd envelopes")
    p.add_argument("--threads", type=_positive_int, default=None)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("diagnose", help="ill-posedness and identification diagnostics")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--design", choices=("example1", "example2", "model1", "model2"))
    src.add_argument("--input", help="CSV with columns x,w (and optionally y)")
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--degree", type=_positive_int, default=3)
    p.add_argument("--k-list", type=_positive_int, nargs="+", default=[4, 6, 8, 10])
    p.add_argument("--a-list", nargs="*", default=[], help="slope bounds; 'inf' drops the constraint")
    p.add_argument("--trunc", type=float, nargs=2, default=[0.05, 0.95], metavar=("LOWER", "UPPER"))
    p.add_argument("--zeta", nargs="+", metavar="KEY=VALUE",
                   help="identification constants " + ",".join(_ZETA_KEYS))
    p.add_argument("--zeta-file", help="JSON object with the identification constants")
    p.add_argument("--seed", type=int, required=True, help="seed of the restricted-measure multistart")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--rescale", choices=("minmax", "ecdf"), default="minmax")
    p.add_argument("--output")
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"mnpiv: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"mnpiv: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InvariantError as exc:
        print(f"mnpiv: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except ValueError as exc:
        print(f"mnpiv: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except np.linalg.LinAlgError as exc:
        print(f"mnpiv: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
