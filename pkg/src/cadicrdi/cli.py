"""Command-line entry point.

Exit codes: 0 success, 1 a check failed (axioms, prelec), 2 input error,
3 non-convergence under ``--strict``. Data goes to stdout (or ``--out``),
diagnostics to stderr.
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

from . import axioms as ax
from . import choice, discount, estimation, impatience, survey
from .discount import DEFAULT_EPSILON, FAMILIES, PARAM_NAMES
from .errors import DiscountError

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_NONCONVERGENCE = 0, 1, 2, 3


class InputError(Exception):
    pass


# --- output ------------------------------------------------------------------

def _clean(obj):
    """Recursively turn NaN/inf into None and numpy scalars into floats."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _table(rows) -> str:
    rows = [[str(c) for c in row] for row in rows]
    if not rows:
        return ""
    widths = [max(len(r[i]) for r in rows if i < len(r)) for i in range(max(map(len, rows)))]
    lines = ["  ".join(c.ljust(widths[i]) for i, c in enumerate(r)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"


def _render(fmt: str, payload, rows) -> str:
    if fmt == "json":
        return json.dumps(_clean(payload), indent=2, allow_nan=False) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(rows)
        return buf.getvalue()
    return _table(rows)


def _emit(args, payload, rows, notes=()):
    text = _render(args.format, payload, rows)
    if args.format == "table":
        text += "".join(f"note: {n}\n" for n in notes)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _factor(v: float) -> str:
    return f"{v:.6f}"


def _param(v: float) -> str:
    return "NaN" if not math.isfinite(v) else f"{v:.4g}"


# --- argument helpers --------------------------------------------------------

def _add_model_args(p: argparse.ArgumentParser):
    p.add_argument("--model", help="model JSON file ({family, params})")
    p.add_argument("--family", help=f"one of {', '.join(FAMILIES)}")
    for name in ("r", "delta", "gamma", "alpha", "beta"):
        p.add_argument(f"--{name}", type=float)


def _model_from_args(args) -> discount.DiscountModel:
    if args.model:
        try:
            data = json.loads(Path(args.model).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read model {args.model}: {exc}") from exc
        return discount.model_from_dict(data)
    if not args.family:
        raise InputError("give --model FILE or --family with its parameters")
    family = discount.normalize_family(args.family)
    params = {}
    for name in PARAM_NAMES[family]:
        value = getattr(args, name)
        if value is None:
            raise InputError(f"{family} needs --{name}")
        params[name] = value
    return discount.make_model(family, **params)


def _read_choices(path):
    try:
        return choice.read_choices_csv(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _screened(args, data):
    if args.no_screen:
        return data
    dropped = choice.consistency_screen(data)
    if dropped:
        print(f"consistency screen dropped {len(dropped)} subject(s): {', '.join(dropped)}", file=sys.stderr)
    return choice.apply_screen(data, dropped)


def _epsilon_note(model, t, args):
    if model.crdi_in_t and t == 0:
        return f"epsilon-adjusted t={args.epsilon:g}"
    return None


# --- commands ----------------------------------------------------------------

def cmd_eval(args) -> int:
    model = _model_from_args(args)
    F = discount.evaluate(model, args.t, args.T, args.epsilon)
    note = _epsilon_note(model, args.t, args)
    payload = {"family": model.family, "params": model.params(), "t": args.t, "T": args.T, "F": F,
               "validity": model.validity.status, "note": note}
    rows = [["quantity", "value"], ["F", _factor(F)]]
    if args.amount is not None:
        pv = discount.present_value(model, args.amount, args.t, args.T, args.epsilon)
        payload["amount"] = args.amount
        payload["presentValue"] = pv
        rows.append(["present_value", _factor(pv)])
    if args.format == "csv" and note:
        rows.append(["note", note])
    _emit(args, payload, rows, [note] if note else ())
    return EXIT_OK


def cmd_eta(args) -> int:
    model = _model_from_args(args)
    value = discount.evaluate_eta(model, args.t1, args.t2, args.epsilon)
    note = _epsilon_note(model, args.t1, args)
    payload = {"family": model.family, "t1": args.t1, "t2": args.t2, "eta": value, "note": note}
    _emit(args, payload, [["quantity", "value"], ["eta", _factor(value)]], [note] if note else ())
    return EXIT_OK


def cmd_axioms(args) -> int:
    model = _model_from_args(args)
    cfg = ax.AxiomCheckConfig(samples=args.samples, tolerance=args.tolerance, seed=args.seed)
    result = ax.classify(model, cfg, args.epsilon)
    declared = ax.FAMILY_BUNDLE.get(model.family)
    ok = declared is None or result.bundle_passes(model.family)
    payload = {"family": model.family, "declaredBundle": declared, "declaredBundlePasses": ok, **result.as_json()}
    rows = [["axiom", "name", "pass", "worst_violation", "tested", "skipped"]]
    for rep in result.reports.values():
        rows.append([rep.axiom, rep.name, "yes" if rep.passed else "no",
                     f"{rep.worst_violation:.3g}", rep.samples_tested, rep.samples_skipped])
    notes = [f"bundles satisfied: {', '.join(result.bundles) or 'none'}"]
    if declared:
        notes.append(f"declared bundle ({declared}) {'passes' if ok else 'FAILS'}")
    _emit(args, payload, rows, notes)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_prelec(args) -> int:
    model = _model_from_args(args)
    grid = impatience.interior_grid(args.grid, args.lo, args.hi)
    report = impatience.constancy_scan(model, grid, epsilon=args.epsilon)
    rows = [["measure", "analytic", "numeric_min", "numeric_max", "max_abs_dev", "constant", "declared"]]
    for name, scan in report.measures.items():
        rows.append([name, "-" if scan.analytic is None else _param(scan.analytic), _param(scan.numeric_min),
                     _param(scan.numeric_max), f"{scan.max_abs_dev:.2g}", "yes" if scan.constant else "no",
                     "yes" if scan.declared_constant else "no"])
    _emit(args, report.as_json(), rows, [f"constancy {'passes' if report.passed else 'FAILS'}"])
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _fit_spec(args, family):
    return estimation.FitSpec(family, bounds=args.bounds, epsilon=args.epsilon,
                              n_starts=args.starts, seed=args.seed, max_iter=args.max_iter)


def _fit_rows(res: estimation.FitResult):
    rows = [["parameter", "estimate", "robust_se"]]
    rows.extend([n, _param(res.params[n]), _param(res.se[n])] for n in res.names)
    rows += [["R2", _param(res.r2), ""], ["Adjusted R2", _param(res.adj_r2), ""],
             ["SSE", _param(res.sse), ""], ["Observations", res.n_obs, ""],
             ["Status", res.status, ""], ["Validity", res.validity, ""]]
    return rows


def _compare(args, data) -> int:
    table = estimation.compare_models(data, [_fit_spec(args, f) for f in FAMILIES])
    for fam, msg in table.failures.items():
        print(f"{fam}: fit failed: {msg}", file=sys.stderr)
    _emit(args, table.to_json(), table.rows(), [f"ranking by adjusted R2: {', '.join(table.ranking)}"])
    if args.strict and any(not r.converged for r in table.results):
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_fit(args) -> int:
    data = _screened(args, _read_choices(args.choices))
    if args.compare_all:
        return _compare(args, data)
    spec = _fit_spec(args, args.family or "cadi-cadi")
    if args.covariates:
        if not args.profiles:
            raise InputError("--covariates needs --profiles")
        ingest = survey.ingest_profiles(args.profiles)
        for err in ingest.errors:
            print(f"profiles: {err}", file=sys.stderr)
        names = tuple(c.strip() for c in args.covariates.split(",") if c.strip())
        loadings = None
        if args.load_on:
            params = tuple(p.strip() for p in args.load_on.split(","))
            loadings = {p: names for p in params}
        res = estimation.fit_with_covariates(
            data, survey.covariate_table(ingest.profiles), spec, estimation.CovariateSpec(names, loadings))
    else:
        res = estimation.fit(data, spec)
    _emit(args, res.to_json(), _fit_rows(res))
    if not res.converged:
        print(f"warning: fit did not converge ({', '.join(res.flags)})", file=sys.stderr)
        if args.strict:
            return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_compare(args) -> int:
    return _compare(args, _screened(args, _read_choices(args.choices)))


def _design(args):
    if args.design:
        try:
            return choice.read_design_csv(args.design)
        except OSError as exc:
            raise InputError(f"cannot read {args.design}: {exc}") from exc
    return choice.default_design()


def cmd_simulate(args) -> int:
    model = _model_from_args(args)
    data = choice.generate_choices(model, _design(args), args.subjects, seed=args.seed,
                                   noise=args.noise, epsilon=args.epsilon)
    buf = io.StringIO()
    choice.write_choices_csv(data, buf)
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_recover(args) -> int:
    model = _model_from_args(args)
    data = choice.generate_choices(model, _design(args), args.subjects, seed=args.seed,
                                   noise=args.noise, epsilon=args.epsilon)
    data = _screened(args, data)
    res = estimation.fit(data, _fit_spec(args, model.family))
    truth = model.params()
    rows = [["parameter", "true", "estimate", "robust_se", "abs_error"]]
    for n in res.names:
        rows.append([n, _param(truth[n]), _param(res.params[n]), _param(res.se[n]),
                     f"{abs(res.params[n] - truth[n]):.2g}"])
    payload = {"truth": model.to_dict(), "fit": res.to_json()}
    _emit(args, payload, rows, [f"status {res.status}, adjusted R2 {_param(res.adj_r2)}"])
    if args.strict and not res.converged:
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_tipi(args) -> int:
    ingest = survey.ingest_profiles(args.input)
    for err in ingest.errors:
        print(f"rejected: {err}", file=sys.stderr)
    rows = [["subject_id", *(survey.SCALE_ABBREV[s] for s in survey.SCALES)]]
    scores = {}
    for p in ingest.profiles:
        b = p.big_five.as_dict()
        scores[p.subject_id] = b
        rows.append([p.subject_id, *(f"{b[s]:.1f}" for s in survey.SCALES)])
    payload = {"scores": scores, "errors": [str(e) for e in ingest.errors]}
    if args.summary:
        summary = survey.summarize(ingest.profiles)
        payload["summary"] = summary.to_json()
        if args.format != "json":
            rows = summary.rows()
            rows.append([])
            rows.append(["spearman", *(survey.SCALE_ABBREV[s] for s in survey.SCALES)])
            for s, row in zip(survey.SCALES, summary.spearman):
                rows.append([survey.SCALE_ABBREV[s], *(_param(v) for v in row)])
    _emit(args, payload, rows)
    return EXIT_OK


def cmd_report(args) -> int:
    if args.choices:
        data = _screened(args, _read_choices(args.choices))
    else:
        model = _model_from_args(args) if (args.model or args.family) else discount.CadiCadi(0.0076, 0.00017, 0.0124)
        print(f"no --choices: simulating {args.subjects} subjects from {model}", file=sys.stderr)
        data = _screened(args, choice.generate_choices(model, choice.default_design(), args.subjects,
                                                       seed=args.seed, epsilon=args.epsilon))
    return _compare(args, data)


# --- parser ------------------------------------------------------------------

GLOBAL_DEFAULTS = {"seed": 42, "epsilon": DEFAULT_EPSILON, "format": "table", "out": None}


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    # the flags work before or after the subcommand; only the top level sets defaults
    p = argparse.ArgumentParser(add_help=False)
    d = (lambda k: GLOBAL_DEFAULTS[k]) if defaults else (lambda k: argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=d("seed"), help="random seed (default 42)")
    p.add_argument("--epsilon", type=float, default=d("epsilon"), help="t used for t = 0 in CRDI-in-t families")
    p.add_argument("--format", choices=("json", "csv", "table"), default=d("format"))
    p.add_argument("--out", default=d("out"), help="write output here instead of stdout")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cadicrdi", description=__doc__.splitlines()[0],
                                     parents=[_global_flags(True)])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _global_flags(False)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("eval", cmd_eval, "discount factor F(t, T)")
    _add_model_args(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--amount", type=float, help="later amount y; also prints y * F")

    p = add("eta", cmd_eta, "two-date discount eta(t2, t1) = F(t1, t2 - t1)")
    _add_model_args(p)
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--t2", type=float, required=True)

    p = add("axioms", cmd_axioms, "check the seven axioms and their primed variants")
    _add_model_args(p)
    p.add_argument("--samples", type=int, default=250)
    p.add_argument("--tolerance", type=float, default=1e-7)

    p = add("prelec", cmd_prelec, "finite-difference Prelec measures against closed forms")
    _add_model_args(p)
    p.add_argument("--grid", type=int, default=10, help="points per axis")
    p.add_argument("--lo", type=float, default=5.0)
    p.add_argument("--hi", type=float, default=365.0)

    def fit_flags(p):
        p.add_argument("--bounds", choices=estimation.BOUNDS_MODES, default=estimation.UNCONSTRAINED)
        p.add_argument("--starts", type=int, default=8, help="multi-start count")
        p.add_argument("--max-iter", type=int, default=500)
        p.add_argument("--strict", action="store_true", help="exit 3 on non-convergence")
        p.add_argument("--no-screen", action="store_true", help="skip the consistency screen")

    p = add("fit", cmd_fit, "fit one family (optionally with covariates) to a choice CSV")
    p.add_argument("--choices", required=True)
    p.add_argument("--family", default="cadi-cadi")
    p.add_argument("--compare-all", action="store_true", help="fit all six families")
    p.add_argument("--profiles", help="profile CSV for covariates")
    p.add_argument("--covariates", help="comma-separated covariate names")
    p.add_argument("--load-on", help="comma-separated parameters that load on the covariates (default all)")
    fit_flags(p)

    p = add("compare", cmd_compare, "fit and rank all six families")
    p.add_argument("--choices", required=True)
    fit_flags(p)

    def sim_flags(p):
        _add_model_args(p)
        p.add_argument("--subjects", type=int, default=150)
        p.add_argument("--design", help="design CSV (default: the built-in 43 items)")
        p.add_argument("--noise", choices=("bernoulli", "deterministic"), default="bernoulli")

    p = add("simulate", cmd_simulate, "synthetic choice CSV from a model")
    sim_flags(p)

    p = add("recover", cmd_recover, "simulate then refit; compare estimates with the truth")
    sim_flags(p)
    fit_flags(p)

    p = add("tipi", cmd_tipi, "score TIPI answers in a profile CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--summary", action="store_true", help="means, SDs and Spearman matrix")

    p = add("report", cmd_report, "six-family comparison table (simulated cohort if no --choices)")
    p.add_argument("--choices")
    p.add_argument("--subjects", type=int, default=150)
    _add_model_args(p)
    fit_flags(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, DiscountError, ValueError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
