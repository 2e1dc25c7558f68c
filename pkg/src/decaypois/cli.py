"""Command-line front end: ``decaypois fit`` and ``decaypois simulate``.

Exit codes: 0 success, 1 a fit did not converge (the report is still
written), 2 input or configuration error (an error JSON is written to
stdout).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (Ar2Params, DecayPoisError, EventSeries, IndepParams,
                   SingularFisher, UnifiedParams, Window, validate_series)
from .inference import (AsymmetricFit, FitOptions, FitResult, fit_ar1, fit_ar2,
                        fit_asymmetric, fit_unified)
from .models import DEFAULT_FLOOR, ar_path_means, power_decay_means
from .selection import ModelComparison, aic, compare_models
from .simulator import InvalidConfig, SimConfig, simulate, write_series_csv
from .uncertainty import ConfidenceIntervals, confidence_intervals, fisher_independence

SCHEMA_VERSION = 1
SEED_ENV = "DECAYPOIS_SEED"


class ParseError(DecayPoisError):
    def __init__(self, line: int, message: str = ""):
        super().__init__(f"line {line}: {message}" if message else f"line {line}")
        self.line = line


class T0NotFound(DecayPoisError):
    pass


# --------------------------------------------------------------------------
# ingestion

def _parse_int(text: str) -> Optional[int]:
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        return None


def parse_csv_text(text: str, t0_spec: Optional[str] = None) -> EventSeries:
    """Parse ``label,count`` rows (header optional) into an :class:`EventSeries`.

    ``t0_spec`` is matched against the labels first and otherwise read as
    a 0-based row index. Without it the largest count is taken as the
    event day and a warning is issued.
    """
    labels, counts = [], []
    reader = csv.reader(io.StringIO(text))
    first = True
    for row in reader:
        line = reader.line_num
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != 2:
            raise ParseError(line, f"expected 2 fields, got {len(row)}")
        value = _parse_int(row[1])
        if value is None:
            if first:
                first = False
                continue
            raise ParseError(line, f"count {row[1].strip()!r} is not an integer")
        first = False
        labels.append(row[0].strip())
        counts.append(value)
    if not counts:
        return validate_series([], 0)
    t0_index = _resolve_t0(labels, counts, t0_spec)
    return validate_series(counts, t0_index, labels)


def _resolve_t0(labels, counts, t0_spec):
    if t0_spec is None:
        idx = int(np.argmax(counts))
        warnings.warn(f"no t0 given; using the largest count at row {idx} "
                      f"(label {labels[idx]!r})", stacklevel=3)
        return idx
    spec = str(t0_spec).strip()
    if spec in labels:
        return labels.index(spec)
    idx = _parse_int(spec)
    if idx is not None and 0 <= idx < len(counts):
        return idx
    raise T0NotFound(f"t0 {spec!r} matches no label or row index")


def ingest_csv(path, t0_spec: Optional[str] = None) -> EventSeries:
    with open(path, encoding="utf-8-sig", newline="") as fh:
        text = fh.read()
    return parse_csv_text(text, t0_spec)


# --------------------------------------------------------------------------
# report rendering

def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def params_dict(params) -> dict:
    if isinstance(params, IndepParams):
        names = ("alpha", "beta", "gamma")
    elif isinstance(params, Ar2Params):
        names = ("alpha", "beta", "s")
    elif isinstance(params, UnifiedParams):
        names = ("alpha", "beta", "w", "u", "v")
    else:
        raise TypeError(type(params))
    return {n: float(getattr(params, n)) for n in names}


def fit_dict(fit: FitResult) -> dict:
    return _clean({
        "model": fit.model,
        "params": params_dict(fit.params),
        "log_likelihood": fit.log_likelihood,
        "n_params": fit.n_params,
        "aic": aic(fit.log_likelihood, fit.n_params),
        "converged": fit.converged,
        "n_evaluations": fit.n_evaluations,
        "window": [fit.window.lo, fit.window.hi],
        "diagnostics": fit.diagnostics,
    })


def ci_dict(ci: ConfidenceIntervals) -> dict:
    # positivity-constrained parameters: report truncated at 0, keep raw too
    return _clean({
        "level": ci.level,
        "estimates": ci.estimates,
        "std_errors": ci.std_errors,
        "intervals": {k: list(v) for k, v in ci.intervals.items()},
        "reported": {k: [max(v[0], 0.0), v[1]] for k, v in ci.intervals.items()},
    })


def comparison_dict(cmp: ModelComparison) -> dict:
    rows = []
    for r in cmp.rows:
        rows.append(_clean({
            "model": r.model,
            "n_params": r.n_params,
            "params": None if r.fit is None else params_dict(r.fit.params),
            "log_likelihood": r.log_likelihood,
            "aic": r.aic,
            "converged": None if r.fit is None else r.fit.converged,
            "comparable": r.comparable,
            "error": r.error,
            "note": r.note,
        }))
    return {"rows": rows, "best": cmp.best}


def asymmetric_cis(asym: AsymmetricFit, level: float) -> dict:
    before = asym.before.params
    out = {}
    try:
        out["before"] = ci_dict(confidence_intervals(
            before.as_tuple(), fisher_independence(before, asym.before.window), level))
    except SingularFisher as exc:
        out["before"] = {"error": str(exc)}
    after = asym.after.params
    try:
        info = fisher_independence(after, asym.after.window).submatrix(("alpha", "beta"))
        out["after"] = ci_dict(confidence_intervals((after.alpha, after.beta), info, level))
    except SingularFisher as exc:
        out["after"] = {"error": str(exc)}
    return out


# --------------------------------------------------------------------------
# fit command

def _seed(value: Optional[int]) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            raise InvalidConfig(f"{SEED_ENV}={env!r} is not an integer") from None
    return 0


def run_fit(args) -> tuple[dict, int]:
    """Run the fit pipeline; returns ``(report, exit_code)``."""
    messages = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        series = ingest_csv(args.input, args.t0)
        report, code = _fit_series(series, args, messages)
    messages.extend(str(w.message) for w in caught)
    report["warnings"] = messages
    return report, code


def _fit_series(series: EventSeries, args, messages: list) -> tuple[dict, int]:
    options = FitOptions(rng_seed=_seed(args.seed), zero_floor=args.delta)
    before_days = args.before_days
    if before_days is None:
        before_days = min(7, series.n_before)
        if before_days < 7:
            messages.append(f"only {series.n_before} days before t0; "
                            f"before window shortened to {before_days}")
    after_days = series.n_after if args.after_days is None else args.after_days
    horizon = after_days if args.horizon is None else args.horizon
    if not 0 < args.level < 1:
        raise InvalidConfig("--level must lie in (0, 1)")

    report = {
        "schema_version": SCHEMA_VERSION,
        "input": {
            "source": str(args.input),
            "n_points": len(series.counts),
            "t0_index": series.t0_index,
            "t0_label": None if series.labels is None else series.labels[series.t0_index],
            "peak_count": series.peak_count,
        },
        "settings": {
            "model": args.model, "before_days": before_days, "after_days": after_days,
            "horizon": horizon, "level": args.level, "seed": options.rng_seed,
            "delta": options.zero_floor,
        },
        "fits": {},
        "comparison": None,
        "errors": [],
    }
    fits = report["fits"]
    asym = None
    conditional: dict = {}

    def record(section, fn):
        if args.model != "all":
            return fn()
        try:
            return fn()
        except DecayPoisError as exc:
            report["errors"].append({"section": section, "type": type(exc).__name__,
                                     "message": str(exc)})
            return None

    if args.model in ("all", "indep"):
        asym = record("independence",
                      lambda: fit_asymmetric(series, before_days, after_days, options))
        if asym is not None:
            fits["independence"] = {
                "before": fit_dict(asym.before),
                "after": fit_dict(asym.after),
                "gamma_shared": asym.gamma_shared,
                "confidence_intervals": asymmetric_cis(asym, args.level),
            }
    if args.model == "all":
        cmp = record("comparison",
                     lambda: compare_models(series, horizon, options,
                                            include_independence=args.with_indep_row))
        if cmp is not None:
            report["comparison"] = comparison_dict(cmp)
            for name in ("ar1", "ar2", "unified"):
                row = cmp.row(name)
                if row.fit is not None:
                    conditional[name] = row.fit
                else:
                    report["errors"].append({"section": name, "type": "FitError",
                                             "message": row.error})
    elif args.model in ("ar1", "ar2", "unified"):
        fitter = {"ar1": fit_ar1, "ar2": fit_ar2, "unified": fit_unified}[args.model]
        conditional[args.model] = fitter(series, horizon, options)
    for name, fit in conditional.items():
        fits[name] = fit_dict(fit)

    if args.model == "all" and not fits:
        raise DecayPoisError("; ".join(e["message"] or "" for e in report["errors"]))

    report["fitted_curve"] = _curve(series, asym, conditional.get("ar2"), horizon,
                                    options.zero_floor)
    if args.plot_data:
        _write_plot_data(args.plot_data, report["fitted_curve"], series)

    all_fits = list(conditional.values())
    if asym is not None:
        all_fits += [asym.before, asym.after]
    converged = all(f.converged for f in all_fits)
    report["converged"] = converged
    return _clean(report), 0 if converged else 1


def _curve(series: EventSeries, asym, ar2: Optional[FitResult], horizon, floor) -> dict:
    offsets = np.arange(len(series.counts)) - series.t0_index
    before = [None] * len(offsets)
    after = [None] * len(offsets)
    ar2_col = [None] * len(offsets)
    if asym is not None:
        b, a = asym.before.params, asym.after.params
        mb = power_decay_means(b.alpha, b.beta, b.gamma, offsets)
        ma = power_decay_means(a.alpha, a.beta, a.gamma, offsets)
        for i, t in enumerate(offsets):
            if t <= 0:
                before[i] = float(mb[i])
            if t >= 0:
                after[i] = float(ma[i])
    if ar2 is not None:
        p = ar2.params
        mu = ar_path_means(p.alpha, p.beta, p.s, series.after_path(horizon), floor)
        for m in range(1, horizon + 1):
            ar2_col[series.t0_index + m] = float(mu[m - 1])
    return {"offsets": [int(t) for t in offsets],
            "observed": [int(c) for c in series.counts],
            "fitted_before": before, "fitted_after": after, "fitted_ar2": ar2_col}


def _write_plot_data(path, curve: dict, series: EventSeries):
    def cell(x):
        return "" if x is None else repr(x)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "observed", "fitted_before", "fitted_after", "fitted_ar2"])
        for row in zip(curve["offsets"], curve["observed"], curve["fitted_before"],
                       curve["fitted_after"], curve["fitted_ar2"]):
            writer.writerow([row[0], row[1]] + [cell(x) for x in row[2:]])


def format_table(report: dict) -> str:
    """Human-readable summary, numbers at 6 significant digits."""
    def g(x):
        return "-" if x is None else f"{x:.6g}"

    inp = report["input"]
    lines = [f"points: {inp['n_points']}  t0 index: {inp['t0_index']}  "
             f"t0 label: {inp['t0_label']}  peak: {inp['peak_count']}"]
    indep = report["fits"].get("independence")
    if indep is not None:
        lines.append("")
        lines.append("independence model (before / after, shared gamma)")
        for stage in ("before", "after"):
            fit = indep[stage]
            cis = indep["confidence_intervals"].get(stage, {})
            reported = cis.get("reported", {})
            for name, value in fit["params"].items():
                if stage == "after" and name == "gamma":
                    continue
                lo_hi = reported.get(name)
                ci = "" if lo_hi is None else f"  [{g(lo_hi[0])}, {g(lo_hi[1])}]"
                lines.append(f"  {name}_{stage[0]:<2} {g(value):>12}{ci}")
            lines.append(f"  log-lik ({stage}) {g(fit['log_likelihood'])}")
    for name in ("ar1", "ar2", "unified"):
        fit = report["fits"].get(name)
        if fit is None:
            continue
        params = "  ".join(f"{k}={g(v)}" for k, v in fit["params"].items())
        lines.append("")
        lines.append(f"{name}: {params}")
        lines.append(f"  log-lik {g(fit['log_likelihood'])}  AIC {g(fit['aic'])}"
                     f"  converged {fit['converged']}")
    cmp = report.get("comparison")
    if cmp:
        lines.append("")
        lines.append(f"{'model':<16}{'k':>3}{'log-lik':>14}{'AIC':>14}")
        for r in cmp["rows"]:
            mark = " *" if r["model"] == cmp["best"] else ""
            lines.append(f"{r['model']:<16}{r['n_params']:>3}"
                         f"{g(r['log_likelihood']):>14}{g(r['aic']):>14}{mark}")
    for w in report.get("warnings", []):
        lines.append(f"warning: {w}")
    for e in report.get("errors", []):
        lines.append(f"error in {e['section']}: {e['message']}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# simulate command

def sim_config_from_args(args) -> SimConfig:
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            values.update(json.load(fh))
    for key in ("model", "alpha", "beta", "gamma", "s", "w", "u", "v", "y_t0", "lo",
                "hi", "horizon", "seed", "n_replicates", "delta"):
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    model = values.get("model", "independence")
    try:
        alpha, beta = float(values["alpha"]), float(values["beta"])
        if model == "independence":
            params = IndepParams(alpha, beta, float(values["gamma"]))
        elif model in ("ar1", "ar2"):
            params = Ar2Params(alpha, beta, 1.0 if model == "ar1" else float(values["s"]))
        elif model == "unified":
            params = UnifiedParams(alpha, beta, float(values["w"]), float(values["u"]),
                                   float(values["v"]))
        else:
            raise InvalidConfig(f"unknown model {model!r}")
        window = None
        if model == "independence":
            window = Window(int(values.get("lo", -7)), int(values.get("hi", 14)))
        horizon = None if model == "independence" else int(values["horizon"])
        y_t0 = None if model == "independence" else int(values["y_t0"])
    except KeyError as exc:
        raise InvalidConfig(f"missing simulation setting {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DecayPoisError):
            raise
        raise InvalidConfig(str(exc)) from None
    return SimConfig(model=model, params=params, y_t0=y_t0, window=window,
                     horizon=horizon, rng_seed=_seed(values.get("seed")),
                     n_replicates=int(values.get("n_replicates", 1)),
                     floor=float(values.get("delta", DEFAULT_FLOOR)))


def run_simulate(args) -> dict:
    config = sim_config_from_args(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for i, series in enumerate(simulate(config)):
        path = out_dir / f"{args.prefix}_{i:04d}.csv"
        write_series_csv(series, path)
        files.append(str(path))
    return {"model": config.model, "seed": config.rng_seed,
            "n_replicates": config.n_replicates, "files": files}


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decaypois",
        description="Power-law decay Poisson models for event-centred count series.")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit models to a label,count CSV")
    fit.add_argument("input", help="CSV file with label,count rows (header optional)")
    fit.add_argument("--t0", help="event day: a row label, else a 0-based row index "
                                  "(default: row with the largest count)")
    fit.add_argument("--before-days", type=int, default=None,
                     help="days before t0 for the before-event fit (default 7)")
    fit.add_argument("--after-days", type=int, default=None,
                     help="days after t0 for the after-event fit (default: all)")
    fit.add_argument("--horizon", type=int, default=None,
                     help="days after t0 for the conditional models (default: after-days)")
    fit.add_argument("--model", choices=("all", "indep", "ar1", "ar2", "unified"),
                     default="all")
    fit.add_argument("--level", type=float, default=0.95)
    fit.add_argument("--seed", type=int, default=None,
                     help=f"multi-start seed (falls back to ${SEED_ENV}, then 0)")
    fit.add_argument("--delta", type=float, default=DEFAULT_FLOOR,
                     help="floor for zero lagged counts")
    fit.add_argument("--output", help="write the report here instead of stdout")
    fit.add_argument("--plot-data", help="write per-offset observed/fitted CSV here")
    fit.add_argument("--format", choices=("json", "table"), default="json")
    fit.add_argument("--with-indep-row", action="store_true",
                     help="add a (non-comparable) independence row to the AIC table")

    sim = sub.add_parser("simulate", help="write simulated series as CSV files")
    sim.add_argument("--config", help="JSON file with any of the settings below")
    sim.add_argument("--model", choices=("independence", "ar1", "ar2", "unified"))
    for name in ("alpha", "beta", "gamma", "s", "w", "u", "v", "delta"):
        sim.add_argument(f"--{name}", type=float)
    sim.add_argument("--y-t0", dest="y_t0", type=int)
    sim.add_argument("--lo", type=int, help="first offset (independence model)")
    sim.add_argument("--hi", type=int, help="last offset (independence model)")
    sim.add_argument("--horizon", type=int, help="days after t0 (conditional models)")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--n-replicates", dest="n_replicates", type=int)
    sim.add_argument("--out-dir", default=".")
    sim.add_argument("--prefix", default="series")
    return parser


def _emit(text: str, output: Optional[str]):
    if output:
        with open(output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _error_json(exc: Exception) -> str:
    err = {"error": type(exc).__name__, "message": str(exc)}
    line = getattr(exc, "line", None)
    if line is not None:
        err["line"] = line
    return json.dumps(err) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fit":
            report, code = run_fit(args)
            if args.format == "table":
                text = format_table(report)
            else:
                text = json.dumps(report, indent=2) + "\n"
            _emit(text, args.output)
            return code
        summary = run_simulate(args)
        sys.stdout.write(json.dumps(summary, indent=2) + "\n")
        return 0
    except (DecayPoisError, OSError, json.JSONDecodeError) as exc:
        sys.stdout.write(_error_json(exc))
        return 2


def report_schema() -> dict:
    text = resources.files("decaypois").joinpath("schemas/report.schema.json").read_text(
        encoding="utf-8")
    return json.loads(text)


if __name__ == "__main__":
    sys.exit(main())
