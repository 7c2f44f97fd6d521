"""File formats: score files, run configs, model documents, result tables, charts."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from . import calibrators as cal
from .dists import DistSpec
from .errors import ConfigError, DomainError
from .experiments import GridSpec, ResultTable, comparison_from_table
from .experiments import preset as get_preset
from .metrics import METRICS, EvalRecord

RESULT_COLUMNS = (
    "config_id", "calibrator", "auc_target", "rho", "n", "trial",
    "rmse_ind", "rmse_sub", "rb_ind", "rb_sub", "failed",
)


def fmt(value) -> str:
    """Fixed CSV cell formatting; floats keep 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _atomic_write(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    _atomic_write(path, csv_text(header, rows))


def write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Score files


@dataclass
class ScoreFile:
    header: list
    scores: np.ndarray
    labels: np.ndarray | None

    @property
    def dim(self) -> int:
        return self.scores.shape[1]


def _parse_label(cell, lineno):
    try:
        v = float(cell)
    except ValueError:
        v = math.nan
    if v not in (0.0, 1.0):
        raise DomainError(f"line {lineno}: label must be 0 or 1, got {cell!r}")
    return int(v)


def read_score_file(path, require_labels: bool = True) -> ScoreFile:
    """Read a comma-separated score file with a header line.

    One or two score columns, optionally followed by a ``label`` column.
    """
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DomainError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DomainError(f"{path}: empty score file")
    header = [c.strip() for c in rows[0]]
    has_label = header[-1] == "label"
    if require_labels and not has_label:
        raise DomainError(f"{path}: last header column must be 'label'")
    d = len(header) - has_label
    if d not in (1, 2):
        raise DomainError(f"{path}: expected one or two score columns, found {d}")
    scores, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DomainError(f"{path} line {lineno}: expected {len(header)} cells")
        try:
            vals = [float(c) for c in row[:d]]
        except ValueError as exc:
            raise DomainError(f"{path} line {lineno}: {exc}") from exc
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"{path} line {lineno}: scores must be finite")
        scores.append(vals)
        if has_label:
            labels.append(_parse_label(row[d].strip(), lineno))
    if not scores:
        raise DomainError(f"{path}: no data rows")
    return ScoreFile(header, np.array(scores, dtype=float),
                     np.array(labels, dtype=np.int64) if has_label else None)


def write_calibrated(path, sf: ScoreFile, calibrated):
    header = list(sf.header) + ["calibrated"]
    rows = []
    for i in range(len(sf.scores)):
        row = [float(v) for v in sf.scores[i]]
        if sf.labels is not None:
            row.append(int(sf.labels[i]))
        row.append(float(calibrated[i]))
        rows.append(row)
    write_csv(path, header, rows)


# ---------------------------------------------------------------------------
# Models


def save_model(model, path):
    write_json(path, cal.model_to_dict(model))


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DomainError(f"cannot load model {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise DomainError(f"{path}: not a model document")
    return cal.model_from_dict(doc)


# ---------------------------------------------------------------------------
# Run configuration

_GRID_KEYS = {
    "preset", "mode", "configs", "auc_targets", "rho_values", "n_values", "trials",
    "ind_test_size", "master_seed", "standardize_seed", "distributions",
}
_CAL_KEYS = {"set", "ridge"}
_OUT_KEYS = {"dir"}


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec
    out_dir: str | None = None


def _check_keys(section, allowed, name):
    if not isinstance(section, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")


def parse_run_config(text: str, preset: str | None = None, mode: str | None = None) -> RunConfig:
    """Parse a TOML run configuration with [grid], [calibrators] and [output] sections.

    Missing keys fall back to the named ``preset`` (``desk`` if none is given).
    Non-None ``preset`` and ``mode`` arguments override the file's values.
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    _check_keys(doc, {"grid", "calibrators", "output"}, "top level")
    grid = doc.get("grid", {})
    cals = doc.get("calibrators", {})
    out = doc.get("output", {})
    _check_keys(grid, _GRID_KEYS, "grid")
    _check_keys(cals, _CAL_KEYS, "calibrators")
    _check_keys(out, _OUT_KEYS, "output")
    mode = mode or grid.get("mode", "single")
    base = get_preset(preset or grid.get("preset", "desk"), mode)
    kw = {}
    for key in ("configs", "auc_targets", "rho_values", "n_values"):
        if key in grid:
            if not isinstance(grid[key], list):
                raise ConfigError(f"[grid] {key} must be a list")
            kw[key] = tuple(tuple(v) if isinstance(v, list) else v for v in grid[key])
    for key in ("trials", "ind_test_size", "master_seed", "standardize_seed"):
        if key in grid:
            if not isinstance(grid[key], int) or isinstance(grid[key], bool):
                raise ConfigError(f"[grid] {key} must be an integer")
            kw[key] = grid[key]
    if "distributions" in grid:
        dists = dict(base.distributions)
        for name, d in grid["distributions"].items():
            if not isinstance(d, dict) or set(d) - {"kind", "params", "center", "scale"}:
                raise ConfigError(f"distribution {name!r} needs kind and params only")
            try:
                dists[name] = DistSpec.from_dict(d)
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad distribution {name!r}: {exc}") from exc
        kw["distributions"] = dists
    if "set" in cals:
        if not isinstance(cals["set"], list):
            raise ConfigError("[calibrators] set must be a list")
        kw["calibrators"] = tuple(cals["set"])
    if "ridge" in cals:
        if not isinstance(cals["ridge"], (int, float)) or isinstance(cals["ridge"], bool):
            raise ConfigError("[calibrators] ridge must be a number")
        kw["ridge"] = float(cals["ridge"])
    out_dir = out.get("dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("[output] dir must be a string")
    try:
        spec = replace(base, mode=mode, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(spec, out_dir)


def grid_to_dict(spec: GridSpec) -> dict:
    return {
        "mode": spec.mode,
        "configs": [list(c) for c in spec.configs],
        "auc_targets": list(spec.auc_targets),
        "rho_values": list(spec.rho_values),
        "n_values": list(spec.n_values),
        "trials": spec.trials,
        "ind_test_size": spec.ind_test_size,
        "master_seed": spec.master_seed,
        "standardize_seed": spec.standardize_seed,
        "distributions": {k: v.to_dict() for k, v in sorted(spec.distributions.items())},
    }


def run_config_to_toml(cfg: RunConfig) -> str:
    doc = {
        "grid": grid_to_dict(cfg.grid),
        "calibrators": {"set": list(cfg.grid.calibrators), "ridge": cfg.grid.ridge},
    }
    if cfg.out_dir is not None:
        doc["output"] = {"dir": cfg.out_dir}
    return tomli_w.dumps(doc)


# ---------------------------------------------------------------------------
# Results


def result_rows(table: ResultTable):
    for r in table.rows:
        yield (r.config_id, r.calibrator_id, r.auc_target, r.rho, r.n, r.trial,
               r.rmse_ind, r.rmse_sub, r.rb_ind, r.rb_sub, r.failed)


def write_results(table: ResultTable, path):
    write_csv(path, RESULT_COLUMNS, result_rows(table))


def aggregate_rows(table: ResultTable):
    for (cid, auc, rho, c, n), agg in table.aggregates.items():
        yield (cid, c, auc, rho, n, agg["trials"], agg["failures"], *(agg[m] for m in METRICS))


AGGREGATE_COLUMNS = ("config_id", "calibrator", "auc_target", "rho", "n", "trials", "failures",
                     *(f"mean_{m}" for m in METRICS))


def _opt_float(cell):
    return float(cell) if cell != "" else None


def read_results(path) -> list:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
                raise DomainError(f"{path}: unexpected results header")
            rows = []
            for line in reader:
                rows.append(EvalRecord(
                    config_id=line["config_id"],
                    calibrator_id=line["calibrator"],
                    auc_target=_opt_float(line["auc_target"]),
                    rho=_opt_float(line["rho"]),
                    n=int(line["n"]),
                    trial=int(line["trial"]),
                    rmse_ind=_opt_float(line["rmse_ind"]),
                    rmse_sub=_opt_float(line["rmse_sub"]),
                    rb_ind=_opt_float(line["rb_ind"]),
                    rb_sub=_opt_float(line["rb_sub"]),
                    failed=line["failed"] == "1",
                ))
    except OSError as exc:
        raise DomainError(f"cannot read {path}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise DomainError(f"{path}: malformed results: {exc}") from exc
    return rows


# ---------------------------------------------------------------------------
# Reports


def summarize(rows) -> list:
    """Mean of each metric per (calibrator, n) over all non-failed rows.

    Returns ``(metric, calibrator, n, mean, count)`` tuples; calibrators keep
    their first-appearance order.
    """
    cal_order = list(dict.fromkeys(r.calibrator_id for r in rows))
    ns = sorted({r.n for r in rows})
    out = []
    for m in METRICS:
        for c in cal_order:
            for n in ns:
                vals = [getattr(r, m) for r in rows
                        if r.calibrator_id == c and r.n == n and not r.failed
                        and getattr(r, m) is not None]
                if vals:
                    out.append((m, c, n, math.fsum(vals) / len(vals), len(vals)))
    return out


def comparison_outputs(rows):
    """Per-point ratio rows and the win-fraction table, or None without one-score fits."""
    comp = comparison_from_table(ResultTable(rows, pair_rank=[]))
    if not comp.rows:
        return None
    fr = comp.fractions()
    cell_p = {(f, m, a, r, n): p for f, m, a, r, n, p in fr if a is not None}
    points = [
        (c.family, c.metric, c.config_id, c.auc_target, c.rho, c.n, c.r1, c.r2, c.r12,
         c.ratio1, c.ratio2, c.win, c.flagged,
         cell_p[(c.family, c.metric, c.auc_target, c.rho, c.n)])
        for c in comp.rows
    ]
    return points, fr


COMPARISON_COLUMNS = ("family", "metric", "config_id", "auc_target", "rho", "n", "r1", "r2",
                      "r12", "ratio1", "ratio2", "win", "flagged", "p")
FRACTION_COLUMNS = ("family", "metric", "auc_target", "rho", "n", "p")

_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
            "#7f7f7f", "#bcbd22", "#17becf")


def line_chart_svg(series: dict, title: str, ylabel: str, width=720, height=440) -> str:
    """Minimal SVG line chart of mean metric vs n (log2 x axis), one polyline per series."""
    left, right, top, bottom = 70, 190, 40, 60
    pw, ph = width - left - right, height - top - bottom
    xs = sorted({n for pts in series.values() for n, _ in pts})
    ys = [y for pts in series.values() for _, y in pts]
    lx = [math.log2(n) for n in xs]
    x0, x1 = min(lx), max(lx)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    y0, y1 = min(ys), max(ys)
    pad = 0.05 * (y1 - y0) if y1 > y0 else 0.05 * max(abs(y0), 1e-3)
    y0, y1 = y0 - pad, y1 + pad

    def px(n):
        return left + (math.log2(n) - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{left + pw / 2:.1f}" y="24" text-anchor="middle" font-size="16">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for n in xs:
        x = px(n)
        out.append(f'<line x1="{x:.1f}" y1="{top + ph}" x2="{x:.1f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{top + ph + 18}" text-anchor="middle" font-size="11">{n}</text>')
    for i in range(5):
        y = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{left - 6}" y="{py(y) + 4:.1f}" text-anchor="end" font-size="11">{y:.3f}</text>')
        out.append(f'<line x1="{left - 4}" y1="{py(y):.1f}" x2="{left}" y2="{py(y):.1f}" stroke="black"/>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 15}" text-anchor="middle" font-size="13">n (per class)</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="13" '
               f'transform="rotate(-90 18 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (name, pts) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{px(n):.2f},{py(y):.2f}" for n, y in sorted(pts))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}">'
                   f'<title>{escape(name)}</title></polyline>')
        ly = top + 14 + 18 * i
        lx0 = left + pw + 15
        out.append(f'<line x1="{lx0}" y1="{ly}" x2="{lx0 + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx0 + 26}" y="{ly + 4}" font-size="12">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_report(rows, out_dir) -> list:
    """Write summary.csv, comparison files (if any) and one SVG per metric; returns paths."""
    out_dir = Path(out_dir)
    summary = summarize(rows)
    if not summary:
        raise DomainError("results contain no successful rows")
    comp = comparison_outputs(rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "summary.csv"]
    write_csv(written[0], ("metric", "calibrator", "n", "mean", "count"), summary)
    if comp is not None:
        points, fractions = comp
        write_csv(out_dir / "comparison.csv", COMPARISON_COLUMNS, points)
        write_csv(out_dir / "fractions.csv", FRACTION_COLUMNS, fractions)
        written += [out_dir / "comparison.csv", out_dir / "fractions.csv"]
    for m in METRICS:
        series: dict = {}
        for metric, c, n, mean, _ in summary:
            if metric == m:
                series.setdefault(c, []).append((n, mean))
        if series:
            path = out_dir / f"{m}.svg"
            _atomic_write(path, line_chart_svg(series, f"mean {m} vs n", m))
            written.append(path)
    return written
