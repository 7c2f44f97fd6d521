"""Command-line entry point: ``calibra simulate|calibrate|apply|report``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from . import calibrators as cal
from . import experiments as ex
from . import io
from .data import LabeledScoreSet
from .errors import CalibraError, ConfigError, DomainError, FitError
from .metrics import mann_whitney_auc, rb_hat

METHODS = ("platt", "logreg", "logreg_ext", "isotonic", "binning")
_JOINT = ("logreg", "logreg_ext")


class UsageError(Exception):
    """Bad invocation, config or input data (exit status 2)."""


def _out_dir(path) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise UsageError(f"{out} exists and is not a directory")
    return out


def build_spec(args) -> tuple[ex.GridSpec, str | None]:
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config: {exc}") from exc
        rc = io.parse_run_config(text, preset=args.preset, mode=args.mode)
        spec, out = rc.grid, rc.out_dir
    else:
        spec, out = ex.preset(args.preset or "desk", args.mode or "single"), None
    kw = {}
    if args.seed is not None:
        kw["master_seed"] = args.seed
    if args.trials is not None:
        kw["trials"] = args.trials
    if kw:
        spec = replace(spec, **kw)
    return spec, args.out or out


def cmd_simulate(args) -> int:
    spec, out = build_spec(args)
    if out is None:
        raise UsageError("no output directory: pass --out or set [output] dir")
    out = _out_dir(out)
    resolved = ex.resolve_configs(spec)
    table = ex.run_grid(spec, args.workers, resolved)
    out.mkdir(parents=True, exist_ok=True)
    io.write_results(table, out / "results.csv")
    io.write_csv(out / "aggregates.csv", io.AGGREGATE_COLUMNS, io.aggregate_rows(table))
    io.write_json(out / "manifest.json", {
        "version": __version__,
        "grid": io.grid_to_dict(spec),
        "calibrators": list(spec.calibrators),
        "ridge": spec.ridge,
        "master_seed": spec.master_seed,
        "configs": {
            f"{cid}|{auc}|{rho}": cfg.to_dict() for (cid, auc, rho), cfg in resolved.items()
        },
        "rows": len(table.rows),
        "failures": sum(r.failed for r in table.rows),
    })
    failed = sum(r.failed for r in table.rows)
    print(f"{len(table.rows)} rows ({failed} failed) written to {out}")
    return 0


def _fit(method, data: LabeledScoreSet, args):
    if data.dim == 2 and method not in _JOINT:
        raise UsageError(f"{method} calibrates a single score; use logreg or logreg_ext")
    if method == "platt":
        return cal.platt_fit(data)
    if method in _JOINT:
        degree = 2 if method == "logreg_ext" else (args.degree or 1)
        if method == "logreg_ext" and args.degree not in (None, 2):
            raise UsageError("logreg_ext always uses degree 2")
        return cal.logreg_fit(data, degree, cal.DEFAULT_RIDGE if args.ridge is None else args.ridge)
    if method == "isotonic":
        return cal.isotonic_fit(data)
    return cal.binning_fit(data, args.bins)


def describe(model) -> str:
    if isinstance(model, cal.PlattModel):
        return f"platt: A={model.A:.6g} B={model.B:.6g}"
    if isinstance(model, cal.LogisticModel):
        w = ", ".join(f"{v:.6g}" for v in model.weights)
        s = f"logistic (degree {model.degree}, ridge {model.ridge:g}): intercept={model.intercept:.6g} weights=[{w}]"
        return s + (" [separated]" if model.separated else "")
    if isinstance(model, cal.IsotonicModel):
        return f"isotonic: {len(model.knots)} knots, range [{model.values[0]:.6g}, {model.values[-1]:.6g}]"
    return f"binning: {model.k} bins over [{model.edges[0]:.6g}, {model.edges[-1]:.6g}]"


def cmd_calibrate(args) -> int:
    if args.bins < 2:
        raise UsageError("--bins must be at least 2")
    if args.ridge is not None and args.ridge < 0:
        raise UsageError("--ridge must be nonnegative")
    if args.degree is not None and args.degree < 1:
        raise UsageError("--degree must be positive")
    sf = io.read_score_file(args.scores)
    data = LabeledScoreSet(sf.scores, sf.labels)
    if data.n0 == 0 or data.n1 == 0:
        raise UsageError("score file must contain both classes")
    model = _fit(args.method, data, args)
    io.save_model(model, args.out)
    print(describe(model))
    for j in range(data.dim):
        auc = mann_whitney_auc(data.class_scores(0, j), data.class_scores(1, j))
        print(f"AUC[{sf.header[j]}] = {auc:.6f}")
    return 0


def cmd_apply(args) -> int:
    model = io.load_model(args.model)
    sf = io.read_score_file(args.scores, require_labels=False)
    if sf.dim != model.dim:
        raise UsageError(f"model expects {model.dim} score column(s), file has {sf.dim}")
    p = cal.predict(model, sf.scores)
    io.write_calibrated(args.out, sf, p)
    print(f"{len(p)} calibrated scores written to {args.out}")
    if sf.labels is not None:
        print(f"RB = {rb_hat(p, sf.labels):.6f}")
    return 0


def cmd_report(args) -> int:
    rows = io.read_results(args.results)
    written = io.write_report(rows, _out_dir(args.out))
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="calibra", description=__doc__)
    p.add_argument("--version", action="version", version=f"calibra {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a simulation grid")
    s.add_argument("--config", help="TOML run configuration")
    s.add_argument("--preset", choices=("paper", "desk"))
    s.add_argument("--mode", choices=ex.MODES)
    s.add_argument("--seed", type=int, help="master seed")
    s.add_argument("--trials", type=int, help="trials per cell")
    s.add_argument("--workers", type=int, help="worker processes (default: CALIBRA_THREADS or CPU count)")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="fit a calibrator to a labelled score file")
    c.add_argument("scores")
    c.add_argument("--method", choices=METHODS, required=True)
    c.add_argument("--bins", type=int, default=10)
    c.add_argument("--degree", type=int)
    c.add_argument("--ridge", type=float)
    c.add_argument("--out", required=True, help="model JSON path")
    c.set_defaults(func=cmd_calibrate)

    a = sub.add_parser("apply", help="apply a saved model to a score file")
    a.add_argument("model")
    a.add_argument("scores")
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_apply)

    r = sub.add_parser("report", help="summarize a results.csv")
    r.add_argument("results")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, DomainError) as exc:
        print(f"calibra: error: {exc}", file=sys.stderr)
        return 2
    except FitError as exc:
        print(f"calibra: fit failed: {exc}", file=sys.stderr)
        return 1
    except (CalibraError, ArithmeticError, OSError) as exc:
        print(f"calibra: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
