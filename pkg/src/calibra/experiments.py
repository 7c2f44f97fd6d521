"""Seeded Monte-Carlo benchmark grids over simulated score distributions.

A grid is split into cells (distribution config x AUC x rho x n). Each cell
runs its trials independently, drawing all randomness from
:func:`derive_trial_seed`, so output does not depend on the number of
workers or on scheduling order.
"""
from __future__ import annotations

import itertools
import logging
import math
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import calibrators as cal
from . import dists
from .errors import CalibraError, ConfigError, DomainError
from .metrics import METRICS, EvalRecord, score_predictions

log = logging.getLogger(__name__)

MODES = ("single", "multi", "trunc_exp")
FULL_N = tuple(10 * 2**i for i in range(10))
DESK_N = (10, 80, 640, 5120)
SINGLE_CALIBRATORS = ("platt", "logreg", "logreg_ext", "isotonic") + tuple(
    f"binning_{k}" for k in (10, 20, 30, 40, 50)
)
MULTI_CALIBRATORS = ("logreg", "logreg_ext")
COMPARISON_CALIBRATORS = (
    "logreg", "logreg_ext", "logreg[h1]", "logreg[h2]", "logreg_ext[h1]", "logreg_ext[h2]",
)
DESK_PAIRS = (("d", "d"), ("a", "b"), ("b", "c"), ("c", "a"))
DESK_COMBOS = (
    ("d", "d", "d", "d"), ("a", "a", "a", "a"), ("b", "c", "b", "c"), ("c", "b", "c", "b"),
    ("a", "d", "b", "c"), ("b", "a", "d", "c"), ("c", "d", "a", "b"), ("d", "b", "c", "a"),
)
TRUNC_EXP_AUC = (0.6, 0.75, 0.9, 0.99)

_M64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def mix64(*values: int) -> int:
    h = 0x6A09E667F3BCC909
    for v in values:
        h = _splitmix64(h ^ _splitmix64(v & _M64))
    return h


def derive_trial_seed(master_seed: int, config_index: int, trial: int) -> int:
    """64-bit seed for one (grid cell, trial), independent of execution order."""
    return mix64(master_seed, config_index, trial)


# ---------------------------------------------------------------------------
# Calibrator descriptors

_DESC = re.compile(r"(platt|logreg|logreg_ext|isotonic|binning_(\d+))(?:\[(h1|h2)\])?")


@dataclass(frozen=True)
class CalibratorSpec:
    id: str
    method: str
    degree: int = 1
    bins: int = 0
    column: int | None = None

    def fit(self, data, ridge: float):
        if self.column is not None:
            data = data.column(self.column)
        if self.method == "platt":
            return cal.platt_fit(data)
        if self.method == "logreg":
            return cal.logreg_fit(data, self.degree, ridge)
        if self.method == "isotonic":
            return cal.isotonic_fit(data)
        return cal.binning_fit(data, self.bins)

    def predict(self, model, scores):
        if self.column is not None:
            scores = scores[:, [self.column]]
        return model.predict(scores)


def parse_calibrator(desc: str) -> CalibratorSpec:
    """Parse ids like ``platt``, ``binning_30`` or ``logreg_ext[h2]``."""
    m = _DESC.fullmatch(desc)
    if not m:
        raise ConfigError(f"unknown calibrator {desc!r}")
    base, bins, col = m.groups()
    column = None if col is None else int(col[1]) - 1
    if bins is not None:
        if int(bins) < 2:
            raise ConfigError("binning needs at least two bins")
        return CalibratorSpec(desc, "binning", bins=int(bins), column=column)
    if base == "logreg_ext":
        return CalibratorSpec(desc, "logreg", degree=2, column=column)
    return CalibratorSpec(desc, base, column=column)


# ---------------------------------------------------------------------------
# Grid specification


@dataclass(frozen=True)
class GridSpec:
    mode: str = "single"
    configs: tuple = DESK_PAIRS
    auc_targets: tuple = (0.6, 0.75, 0.9)
    rho_values: tuple = (0.0,)
    n_values: tuple = FULL_N
    trials: int = 1000
    ind_test_size: int = 10000
    calibrators: tuple = SINGLE_CALIBRATORS
    master_seed: int = 0
    ridge: float = cal.DEFAULT_RIDGE
    standardize_seed: int = dists.DEFAULT_STANDARDIZE_SEED
    distributions: dict = field(default_factory=lambda: dict(dists.BASIC), hash=False)

    def __post_init__(self):
        for name in ("configs", "auc_targets", "rho_values", "n_values", "calibrators"):
            object.__setattr__(self, name, tuple(
                tuple(v) if isinstance(v, list) else v for v in getattr(self, name)
            ))
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        for name in ("auc_targets", "n_values", "calibrators"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be nonempty")
        if self.mode != "trunc_exp" and not self.configs:
            raise ConfigError("configs must be nonempty")
        if self.mode == "multi" and not self.rho_values:
            raise ConfigError("rho_values must be nonempty")
        width = {"single": 2, "multi": 4}.get(self.mode)
        for c in self.configs if width else ():
            if len(c) != width:
                raise ConfigError(f"{self.mode} configs need {width} distribution names, got {c!r}")
            for name in c:
                if name not in self.distributions:
                    raise ConfigError(f"unknown distribution {name!r}")
        for a in self.auc_targets:
            if not 0.5 < a < 1:
                raise ConfigError("AUC targets must lie in (0.5, 1)")
        for r in self.rho_values:
            if not 0 <= r < 1:
                raise ConfigError("rho values must lie in [0, 1)")
        for n in self.n_values:
            if int(n) != n or n < 1:
                raise ConfigError("sample sizes must be positive integers")
        if self.trials < 1 or self.ind_test_size < 2:
            raise ConfigError("need trials >= 1 and ind_test_size >= 2")
        if self.ridge < 0:
            raise ConfigError("ridge must be nonnegative")
        for c in self.calibrators:
            spec = parse_calibrator(c)
            if self.mode != "multi" and spec.column is not None:
                raise ConfigError(f"{c!r} selects a score column; only multi grids have two")
            if self.mode == "multi" and spec.column is None and spec.method != "logreg":
                raise ConfigError(f"{c!r} cannot calibrate two scores jointly")

    def cells(self):
        """Grid cells in canonical order: (config_id, resolve-key, auc, rho, n)."""
        rhos = self.rho_values if self.mode == "multi" else (None,)
        configs = self.configs if self.mode != "trunc_exp" else (("texp",),)
        for config, auc, rho, n in itertools.product(configs, self.auc_targets, rhos, self.n_values):
            yield "-".join(config), config, auc, rho, int(n)


def preset(name: str, mode: str = "single") -> GridSpec:
    if name not in ("paper", "desk") or mode not in MODES:
        raise ConfigError(f"no preset {name!r} for mode {mode!r}")
    full = name == "paper"
    if mode == "single":
        return GridSpec(
            "single",
            tuple(itertools.product("abcd", repeat=2)) if full else DESK_PAIRS,
            (0.6, 0.75, 0.9) if full else (0.75,),
            n_values=FULL_N if full else DESK_N,
            trials=1000 if full else 50,
        )
    if mode == "multi":
        return GridSpec(
            "multi",
            tuple(itertools.product("abcd", repeat=4)) if full else DESK_COMBOS,
            (0.6, 0.75, 0.9) if full else (0.75, 0.9),
            (0.0, 0.5, 0.9),
            FULL_N if full else (10, 80, 320, 1280),
            trials=1000 if full else 50,
            calibrators=COMPARISON_CALIBRATORS,
        )
    return GridSpec(
        "trunc_exp",
        (),
        TRUNC_EXP_AUC,
        n_values=FULL_N if full else DESK_N,
        trials=1000 if full else 20,
    )


# ---------------------------------------------------------------------------
# Results


def _mean(values):
    return math.fsum(values) / len(values) if values else None


def aggregate(rows) -> dict:
    """Per-cell means over non-failed trials, keyed by (config, auc, rho, calibrator, n)."""
    groups: dict = {}
    for r in rows:
        groups.setdefault(r.cell, []).append(r)
    out = {}
    for key, members in groups.items():
        ok = [r for r in members if not r.failed]
        agg = {"trials": len(ok), "failures": len(members) - len(ok)}
        for m in METRICS:
            vals = [getattr(r, m) for r in ok if getattr(r, m) is not None]
            agg[m] = _mean(vals)
        out[key] = agg
    return out


@dataclass
class ResultTable:
    rows: list
    aggregates: dict = field(default_factory=dict)
    pair_rank: list | None = None

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = aggregate(self.rows)
        if self.pair_rank is None and self.rows and all(
            r.rmse_ind is not None for r in self.rows if not r.failed
        ):
            self.pair_rank = rank_configs_by_mean_rmse(self)

    @property
    def config_ids(self) -> list:
        return list(dict.fromkeys(r.config_id for r in self.rows))

    def mean(self, metric, calibrator, n=None, config_id=None, auc=None, rho=None):
        """Mean of per-cell aggregates matching the filters (unweighted)."""
        vals = [
            agg[metric]
            for (cid, a, r, c, nn), agg in self.aggregates.items()
            if c == calibrator and agg[metric] is not None
            and (n is None or nn == n) and (config_id is None or cid == config_id)
            and (auc is None or a == auc) and (rho is None or r == rho)
        ]
        return _mean(vals)


def rank_configs_by_mean_rmse(table: ResultTable) -> list:
    """1-based rank of each config (in first-appearance order) by mean RMSE^ind.

    The mean runs over every (calibrator, auc, rho, n) cell of the config;
    ties go to the lower config index. Cells whose trials all failed are
    skipped; a config with no usable cell ranks last.
    """
    ids = table.config_ids
    if not ids:
        raise DomainError("empty result table")
    cell_means: dict = {cid: [] for cid in ids}
    for (cid, *_), agg in table.aggregates.items():
        if agg["trials"] == 0:
            continue
        if agg["rmse_ind"] is None:
            raise DomainError(f"config {cid!r} has cells without RMSE")
        cell_means[cid].append(agg["rmse_ind"])
    means = [_mean(cell_means[cid]) if cell_means[cid] else math.inf for cid in ids]
    order = sorted(range(len(ids)), key=lambda i: (means[i], i))
    ranks = [0] * len(ids)
    for rank, i in enumerate(order, start=1):
        ranks[i] = rank
    return ranks


# ---------------------------------------------------------------------------
# Execution


@dataclass(frozen=True)
class _Task:
    index: int
    config_id: str
    auc: float
    rho: float | None
    n: int
    config: object
    spec: GridSpec


def _sample(config, n0, n1, seed):
    if isinstance(config, dists.MultiConfig):
        return dists.sample_correlated_pair(config, n0, n1, seed)
    return dists.sample_pair(config, n0, n1, seed)


def _run_cell(task: _Task) -> list:
    spec = task.spec
    cals = [parse_calibrator(c) for c in spec.calibrators]
    oracles = {}
    for c in cals:
        cols = (c.column,) if c.column is not None else None
        if cols not in oracles:
            oracles[cols] = dists.PosteriorOracle(task.config, cols)
    t1 = spec.ind_test_size // 2
    t0 = spec.ind_test_size - t1
    rows = []
    for trial in range(spec.trials):
        seed = derive_trial_seed(spec.master_seed, task.index, trial)
        train = _sample(task.config, task.n, task.n, seed)
        test = _sample(task.config, t0, t1, mix64(seed, 1))
        truth = {}
        for cols, oracle in oracles.items():
            sel = list(cols) if cols is not None else slice(None)
            truth[cols] = (oracle(train.scores[:, sel]), oracle(test.scores[:, sel]))
        for c in cals:
            ids = dict(config_id=task.config_id, calibrator_id=c.id, n=task.n, trial=trial,
                       auc_target=task.auc, rho=task.rho)
            try:
                model = c.fit(train, spec.ridge)
                true_sub, true_ind = truth[(c.column,) if c.column is not None else None]
                rec = score_predictions(
                    c.predict(model, train.scores), c.predict(model, test.scores),
                    train.labels, test.labels, true_sub, true_ind, **ids,
                )
            except (CalibraError, ArithmeticError, np.linalg.LinAlgError) as exc:
                rec = EvalRecord(**ids, failed=True, error=f"{type(exc).__name__}: {exc}")
            rows.append(rec)
    return rows


def _resolve(spec: GridSpec, config, auc, rho):
    d = spec.distributions
    if spec.mode == "single":
        return dists.make_pair(d[config[0]], d[config[1]], auc, spec.standardize_seed)
    if spec.mode == "multi":
        return dists.make_multi(*(d[k] for k in config), auc, rho, spec.standardize_seed)
    return dists.make_truncexp_pair(auc)


def resolve_configs(spec: GridSpec) -> dict:
    """Resolve every (config, auc, rho) to a concrete simulation config, up front."""
    resolved = {}
    for config_id, config, auc, rho, _ in spec.cells():
        key = (config_id, auc, rho)
        if key not in resolved:
            try:
                resolved[key] = _resolve(spec, config, auc, rho)
            except (CalibraError, ArithmeticError) as exc:
                raise ConfigError(f"cannot resolve {key}: {exc}") from exc
    return resolved


def worker_count(requested: int | None = None) -> int:
    if requested is None:
        env = os.environ.get("CALIBRA_THREADS")
        requested = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(requested))


def run_grid(spec: GridSpec, workers: int | None = None, resolved: dict | None = None) -> ResultTable:
    resolved = resolve_configs(spec) if resolved is None else resolved
    tasks = [
        _Task(i, cid, auc, rho, n, resolved[(cid, auc, rho)], spec)
        for i, (cid, _, auc, rho, n) in enumerate(spec.cells())
    ]
    workers = min(worker_count(workers), len(tasks))
    log.info("running %d cells x %d trials on %d worker(s)", len(tasks), spec.trials, workers)
    if workers == 1:
        chunks = [_run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_cell, tasks))
    rows = [r for chunk in chunks for r in chunk]
    return ResultTable(rows)


def _require_mode(spec, mode):
    if spec.mode != mode:
        raise ConfigError(f"grid mode must be {mode!r}, got {spec.mode!r}")


def run_single_score_grid(spec: GridSpec, workers: int | None = None) -> ResultTable:
    _require_mode(spec, "single")
    return run_grid(spec, workers)


def run_multi_score_grid(spec: GridSpec, workers: int | None = None) -> ResultTable:
    _require_mode(spec, "multi")
    return run_grid(spec, workers)


def run_truncexp_study(spec: GridSpec, workers: int | None = None) -> ResultTable:
    _require_mode(spec, "trunc_exp")
    return run_grid(spec, workers)


def run(spec: GridSpec, workers: int | None = None) -> ResultTable:
    return {
        "single": run_single_score_grid,
        "multi": run_multi_score_grid,
        "trunc_exp": run_truncexp_study,
    }[spec.mode](spec, workers)


# ---------------------------------------------------------------------------
# Multi- vs single-score comparison


@dataclass
class ComparisonRow:
    config_id: str
    auc_target: float
    rho: float
    n: int
    family: str
    metric: str
    r1: float
    r2: float
    r12: float
    ratio1: float | None
    ratio2: float | None
    win: bool
    flagged: bool


@dataclass
class ComparisonTable:
    rows: list

    def fraction(self, family, metric, n=None, auc=None, rho=None) -> float | None:
        """Share of unflagged points where the two-score fit beats both one-score fits."""
        pts = [
            r for r in self.rows
            if r.family == family and r.metric == metric and not r.flagged
            and (n is None or r.n == n) and (auc is None or r.auc_target == auc)
            and (rho is None or r.rho == rho)
        ]
        return sum(r.win for r in pts) / len(pts) if pts else None

    def fractions(self) -> list:
        """p for every (family, metric, auc, rho, n) cell, plus pooled rows with auc = rho = None."""
        keys = sorted(
            {(r.family, r.metric, r.auc_target, r.rho, r.n) for r in self.rows},
            key=lambda k: (k[0], METRICS.index(k[1]) if k[1] in METRICS else 99, k[2], k[3], k[4]),
        )
        out = []
        for fam, met, auc, rho, n in keys:
            out.append((fam, met, auc, rho, n, self.fraction(fam, met, n, auc, rho)))
        pooled = sorted({(r.family, r.metric, r.n) for r in self.rows},
                        key=lambda k: (k[0], METRICS.index(k[1]) if k[1] in METRICS else 99, k[2]))
        for fam, met, n in pooled:
            out.append((fam, met, None, None, n, self.fraction(fam, met, n)))
        return out


def comparison_from_table(table: ResultTable, metrics=METRICS) -> ComparisonTable:
    rows = []
    agg = table.aggregates
    cells = sorted({(cid, a, r, n) for (cid, a, r, c, n) in agg}, key=lambda k: (
        table.config_ids.index(k[0]), k[1], -1 if k[2] is None else k[2], k[3]))
    for cid, auc, rho, n in cells:
        for family in ("logreg", "logreg_ext"):
            keys = [(cid, auc, rho, f"{family}{s}", n) for s in ("[h1]", "[h2]", "")]
            if not all(k in agg for k in keys):
                continue
            for metric in metrics:
                r1, r2, r12 = (agg[k][metric] for k in keys)
                if r1 is None or r2 is None or r12 is None:
                    continue
                flagged = r1 == 0 or r2 == 0
                rows.append(ComparisonRow(
                    cid, auc, rho, n, family, metric, r1, r2, r12,
                    None if r1 == 0 else r12 / r1, None if r2 == 0 else r12 / r2,
                    r12 < min(r1, r2), flagged,
                ))
    return ComparisonTable(rows)


def compare_multi_vs_single(spec: GridSpec, workers: int | None = None,
                            table: ResultTable | None = None) -> ComparisonTable:
    """Run (or reuse) a multi grid with one- and two-score fits and compare them."""
    _require_mode(spec, "multi")
    missing = set(COMPARISON_CALIBRATORS) - set(spec.calibrators)
    if missing:
        spec = replace(spec, calibrators=tuple(spec.calibrators) + tuple(
            c for c in COMPARISON_CALIBRATORS if c in missing))
    if table is None:
        table = run_multi_score_grid(spec, workers)
    return comparison_from_table(table)
