import math
from dataclasses import replace

import numpy as np
import pytest

from calibra import calibrators as cal
from calibra import dists
from calibra import experiments as ex
from calibra.errors import ConfigError, DomainError, FitError, NumericError
from calibra.metrics import METRICS, EvalRecord


def small(mode="single", **kw):
    base = {
        "single": dict(configs=(("d", "d"),), auc_targets=(0.75,), n_values=(10, 20), trials=2,
                       ind_test_size=200),
        "multi": dict(configs=(("d", "d", "d", "d"),), auc_targets=(0.75,), rho_values=(0.5,),
                      n_values=(20,), trials=3, ind_test_size=200),
        "trunc_exp": dict(auc_targets=(0.75,), n_values=(20,), trials=2, ind_test_size=200),
    }[mode]
    base.update(kw)
    return replace(ex.preset("desk", mode), **base)


# --- seeds -------------------------------------------------------------------------


def test_trial_seed_determinism_and_distinctness():
    assert ex.derive_trial_seed(5, 3, 2) == ex.derive_trial_seed(5, 3, 2)
    assert ex.derive_trial_seed(5, 0, 0) != ex.derive_trial_seed(5, 0, 1)
    assert 0 <= ex.derive_trial_seed(2**70, -1, 3) < 2**64


def test_trial_seeds_have_no_collisions():
    seeds = {ex.derive_trial_seed(7, c, t) for c in range(100) for t in range(1000)}
    assert len(seeds) == 10**5


# --- calibrator descriptors --------------------------------------------------------


@pytest.mark.parametrize("desc,method,degree,bins,column", [
    ("platt", "platt", 1, 0, None),
    ("logreg_ext", "logreg", 2, 0, None),
    ("binning_30", "binning", 1, 30, None),
    ("logreg[h2]", "logreg", 1, 0, 1),
    ("isotonic[h1]", "isotonic", 1, 0, 0),
])
def test_parse_calibrator(desc, method, degree, bins, column):
    s = ex.parse_calibrator(desc)
    assert (s.method, s.degree, s.bins, s.column) == (method, degree, bins, column)


@pytest.mark.parametrize("desc", ["svm", "binning_1", "binning", "platt[h3]", "platt\n"])
def test_parse_calibrator_rejects(desc):
    with pytest.raises(ConfigError):
        ex.parse_calibrator(desc)


# --- grid spec ----------------------------------------------------------------------


def test_default_grid_is_full_scale():
    g = ex.GridSpec()
    assert g.n_values == tuple(10 * 2**i for i in range(10))
    assert g.trials == 1000 and g.ind_test_size == 10000
    assert {c for c in g.calibrators if c.startswith("binning")} == {
        f"binning_{k}" for k in (10, 20, 30, 40, 50)}


@pytest.mark.parametrize("kw", [
    dict(mode="both"), dict(auc_targets=()), dict(auc_targets=(0.5,)), dict(n_values=(0,)),
    dict(trials=0), dict(configs=(("d", "z"),)), dict(configs=(("d",),)), dict(ridge=-1.0),
    dict(calibrators=("logreg[h1]",)), dict(rho_values=(1.0,), mode="multi"),
    dict(mode="multi", configs=(("d",) * 4,), calibrators=("isotonic",)),
])
def test_grid_validation(kw):
    with pytest.raises(ConfigError):
        replace(ex.GridSpec(), **kw)


def test_presets():
    desk = ex.preset("desk")
    assert len(desk.configs) == 4 and desk.trials == 50 and set(desk.n_values) <= {10, 80, 640, 5120}
    assert ex.preset("paper", "multi").configs[:1] == (("a", "a", "a", "a"),)
    assert len(ex.preset("paper", "multi").configs) == 256
    assert ex.preset("desk", "trunc_exp").auc_targets == (0.6, 0.75, 0.9, 0.99)
    with pytest.raises(ConfigError):
        ex.preset("cluster")


# --- grid runs ------------------------------------------------------------------------


def test_single_grid_row_count():
    table = ex.run_single_score_grid(small(), workers=1)
    assert len(table.rows) == 1 * 1 * 2 * 2 * 9
    assert all(r.rmse_ind is not None for r in table.rows)


def test_multi_grid_row_count():
    table = ex.run_multi_score_grid(small("multi", calibrators=ex.MULTI_CALIBRATORS), workers=1)
    assert len(table.rows) == 6


def test_grid_is_deterministic_across_runs_and_workers():
    spec = small(n_values=(10, 20, 40))
    one = ex.run(spec, workers=1)
    again = ex.run(spec, workers=1)
    two = ex.run(spec, workers=2)
    assert one.rows == again.rows == two.rows


def test_mode_mismatch():
    with pytest.raises(ConfigError):
        ex.run_multi_score_grid(small(), workers=1)


def test_failures_are_flagged_rows(monkeypatch):
    def boom(data, k=10):
        raise FitError("degenerate")
    monkeypatch.setattr(cal, "binning_fit", boom)
    table = ex.run(small(), workers=1)
    failed = [r for r in table.rows if r.failed]
    assert len(table.rows) == 36 and len(failed) == 5 * 2 * 2
    assert all(r.rb_ind is None and "degenerate" in r.error for r in failed)
    agg = table.aggregates[("d-d", 0.75, None, "binning_10", 10)]
    assert agg["failures"] == 2 and agg["trials"] == 0 and agg["rb_ind"] is None


def test_aggregates_equal_row_means():
    table = ex.run(small(), workers=1)
    for key, agg in table.aggregates.items():
        members = [r for r in table.rows if r.cell == key]
        for m in METRICS:
            vals = [getattr(r, m) for r in members]
            assert agg[m] == pytest.approx(sum(vals) / len(vals), abs=1e-12)
            assert min(vals) <= agg[m] <= max(vals)


def test_truncexp_resolution_failure_aborts(monkeypatch):
    def fail(target):
        raise NumericError("unreachable")
    monkeypatch.setattr(dists, "resolve_rate_for_auc_truncexp", fail)
    with pytest.raises(ConfigError):
        ex.run_truncexp_study(small("trunc_exp"), workers=1)


def test_truncexp_grid_is_deterministic():
    spec = small("trunc_exp")
    assert ex.run(spec, workers=1).rows == ex.run(spec, workers=1).rows


def test_resubstitution_optimism_for_logreg():
    spec = small(auc_targets=(0.9,), n_values=(5120,), trials=20, ind_test_size=10000,
                 calibrators=("logreg",))
    table = ex.run(spec, workers=1)
    assert table.mean("rb_sub", "logreg") <= table.mean("rb_ind", "logreg")


def test_multi_logreg_improves_with_n():
    spec = small("multi", rho_values=(0.0,), n_values=(40, 5120), trials=20,
                 ind_test_size=10000, calibrators=("logreg",))
    table = ex.run(spec, workers=1)
    assert table.mean("rmse_ind", "logreg", n=5120) < table.mean("rmse_ind", "logreg", n=40)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("CALIBRA_THREADS", "3")
    assert ex.worker_count() == 3
    assert ex.worker_count(5) == 5
    monkeypatch.delenv("CALIBRA_THREADS")
    assert ex.worker_count() >= 1


# --- ranking ------------------------------------------------------------------------


def _rows(means):
    return [EvalRecord(f"c{i}", "platt", 10, 0, 0.75, None, m, m, m, m)
            for i, m in enumerate(means)]


def test_rank_examples():
    assert ex.rank_configs_by_mean_rmse(ex.ResultTable(_rows([0.2]))) == [1]
    assert ex.rank_configs_by_mean_rmse(ex.ResultTable(_rows([0.3, 0.1]))) == [2, 1]


def test_rank_matches_sort_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        k = int(rng.integers(2, 9))
        rows = []
        for i in range(k):
            for c in ("platt", "isotonic"):
                for n in (10, 20):
                    for t in range(3):
                        v = float(rng.integers(0, 4)) / 10
                        rows.append(EvalRecord(f"c{i}", c, n, t, 0.75, None, v, v, v, v))
        table = ex.ResultTable(rows)
        means = []
        for i in range(k):
            cells = [agg["rmse_ind"] for key, agg in table.aggregates.items() if key[0] == f"c{i}"]
            means.append(sum(cells) / len(cells))
        order = sorted(range(k), key=lambda i: (means[i], i))
        assert [order.index(i) + 1 for i in range(k)] == table.pair_rank
        assert sorted(table.pair_rank) == list(range(1, k + 1))


def test_rank_requires_rmse():
    rows = _rows([0.1, 0.2])
    rows[0].rmse_ind = None
    with pytest.raises(DomainError):
        ex.rank_configs_by_mean_rmse(ex.ResultTable(rows, pair_rank=[]))


# --- multi vs single comparison ------------------------------------------------------


def _comparison_rows(triples, metric_value=None):
    rows = []
    for i, (r1, r2, r12) in enumerate(triples):
        for cid, v in (("logreg[h1]", r1), ("logreg[h2]", r2), ("logreg", r12)):
            rows.append(EvalRecord(f"k{i}", cid, 320, 0, 0.75, 0.5, v, v, v, v))
    return ex.ResultTable(rows, pair_rank=[])


def test_fraction_all_win_none_win():
    assert ex.comparison_from_table(_comparison_rows([(0.3, 0.3, 0.2)] * 4)).fraction(
        "logreg", "rb_ind") == 1
    assert ex.comparison_from_table(_comparison_rows([(0.3, 0.3, 0.4)] * 4)).fraction(
        "logreg", "rb_ind") == 0


def test_fraction_counts_winners():
    comp = ex.comparison_from_table(
        _comparison_rows([(0.3, 0.4, 0.2), (0.3, 0.4, 0.25), (0.5, 0.4, 0.1), (0.3, 0.2, 0.25)]))
    assert comp.fraction("logreg", "rb_ind", n=320) == 0.75
    cell = [p for fam, met, a, r, n, p in comp.fractions()
            if fam == "logreg" and met == "rb_ind" and a == 0.75]
    assert cell == [0.75]


def test_zero_denominators_are_flagged_and_excluded():
    comp = ex.comparison_from_table(_comparison_rows([(0.0, 0.3, 0.1), (0.3, 0.3, 0.1)]))
    flagged = [r for r in comp.rows if r.flagged and r.metric == "rb_ind"]
    assert len(flagged) == 1 and flagged[0].ratio1 is None
    assert comp.fraction("logreg", "rb_ind") == 1


def test_compare_multi_vs_single_adds_single_score_fits():
    spec = small("multi", calibrators=("logreg",))
    comp = ex.compare_multi_vs_single(spec, workers=1)
    assert {r.family for r in comp.rows} == {"logreg", "logreg_ext"}
    assert all(r.ratio1 == pytest.approx(r.r12 / r.r1) for r in comp.rows)
