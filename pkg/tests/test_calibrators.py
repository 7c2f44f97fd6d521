import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calibra import calibrators as cal
from calibra import dists
from calibra.data import LabeledScoreSet
from calibra.errors import DomainError, FitError

import oracles


def dataset(scores, labels):
    return LabeledScoreSet(np.asarray(scores, dtype=float), np.asarray(labels))


def random_data(rng, n=60, d=1, sep=1.0):
    y = rng.integers(0, 2, n)
    y[:2] = (0, 1)
    x = rng.normal(size=(n, d)) + sep * y[:, None]
    return LabeledScoreSet(x, y)


# --- data ------------------------------------------------------------------------


def test_labeled_set_rejects_bad_input():
    with pytest.raises(DomainError):
        dataset([0.0, math.inf], [0, 1])
    with pytest.raises(DomainError):
        dataset([0.0, 1.0], [0, 2])
    with pytest.raises(DomainError):
        dataset([0.0, 1.0, 2.0], [0, 1])


# --- Platt --------------------------------------------------------------------------


def test_platt_targets():
    assert cal.platt_targets(n0=8, n1=3) == pytest.approx((0.8, 0.1))


def test_platt_symmetric_data_has_zero_intercept():
    m = cal.platt_fit(dataset([-1, -1, 1, 1], [0, 0, 1, 1]))
    assert m.B == pytest.approx(0, abs=1e-9)
    assert float(m.predict([0.0])[0]) == pytest.approx(0.5, abs=1e-9)


def test_platt_recovers_binormal_posterior():
    d = dists.BASIC["d"]
    cfg = dists.make_pair(d, d, 0.9)
    mu = cfg.shift
    m = cal.platt_fit(dists.sample_pair(cfg, 10**5, 10**5, 2))
    assert m.A == pytest.approx(-mu, abs=0.05)
    assert m.B == pytest.approx(mu * mu / 2, abs=0.05)


def test_platt_rejects_single_class_and_two_scores():
    with pytest.raises(FitError):
        cal.platt_fit(dataset([1, 2, 3], [1, 1, 1]))
    with pytest.raises(DomainError):
        cal.platt_fit(LabeledScoreSet(np.zeros((4, 2)), np.array([0, 1, 0, 1])))


def test_platt_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        h = rng.normal(size=30)
        t = rng.uniform(0.05, 0.95, 30)
        params = rng.normal(size=2)
        _, grad = cal.platt_objective(params, h, t)
        num = oracles.central_gradient(lambda p: cal.platt_objective(p, h, t)[0], params)
        assert np.linalg.norm(grad - num) / max(np.linalg.norm(num), 1e-12) < 1e-5


def test_platt_with_negative_slope_is_increasing():
    m = cal.platt_fit(random_data(np.random.default_rng(1), 200))
    assert m.A < 0
    p = m.predict(np.linspace(-5, 5, 101))
    assert np.all(np.diff(p) > 0)


# --- logistic regression -----------------------------------------------------------


def test_logistic_flags_separation():
    m = cal.logreg_fit(dataset([-2, -1, 1, 2], [0, 0, 1, 1]), degree=1, ridge=0.0)
    assert m.separated


def test_logistic_symmetric_data_has_zero_intercept():
    m = cal.logreg_fit(dataset([-2, -1, -0.5, 0.5, 1, 2], [0, 1, 0, 1, 0, 1]), ridge=0.0)
    assert not m.separated
    assert m.intercept == pytest.approx(0, abs=1e-6)


def test_logistic_matches_grid_search_oracle():
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = rng.normal(size=6)
        y = np.array([0, 1, 0, 1, 1, 0])
        m = cal.logreg_fit(dataset(x, y), degree=1, ridge=0.1)
        w, b = oracles.grid_search_logistic(x, y, 0.1)
        assert m.weights[0] == pytest.approx(w, abs=1e-3)
        assert m.intercept == pytest.approx(b, abs=1e-3)


@pytest.mark.parametrize("d,degree", [(1, 1), (1, 2), (2, 1), (2, 2)])
def test_logistic_gradient_matches_finite_differences(d, degree):
    rng = np.random.default_rng(d * 10 + degree)
    for _ in range(10):
        x = cal.expand_features(rng.normal(size=(25, d)), degree)
        y = rng.integers(0, 2, 25).astype(float)
        params = rng.normal(size=x.shape[1] + 1) * 0.5
        _, grad = cal.logistic_objective(params, x, y, 0.3)
        num = oracles.central_gradient(lambda p: cal.logistic_objective(p, x, y, 0.3)[0], params)
        assert np.linalg.norm(grad - num) / max(np.linalg.norm(num), 1e-12) < 1e-5


def test_logistic_recovers_product_lr_for_independent_normals():
    cfg = dists.make_multi(*(dists.BASIC["d"],) * 4, 0.8, 0.0)
    m = cal.logreg_fit(dists.sample_correlated_pair(cfg, 50000, 50000, 3), ridge=0.0)
    assert m.weights == pytest.approx((cfg.shift1, cfg.shift2), abs=0.05)
    assert m.intercept == pytest.approx(-(cfg.shift1**2 + cfg.shift2**2) / 2, abs=0.05)


def test_logistic_rejects_single_class_and_negative_ridge():
    with pytest.raises(FitError):
        cal.logreg_fit(dataset([1, 2], [0, 0]))
    with pytest.raises(DomainError):
        cal.logreg_fit(dataset([1, 2], [0, 1]), ridge=-1)


# --- feature expansion -------------------------------------------------------------


def test_expand_features_examples():
    assert cal.expand_features([[2.0, 3.0]], 2).tolist() == [[2, 3, 4, 9, 6]]
    assert cal.expand_features([[-1.5]], 2).tolist() == [[-1.5, 2.25]]
    x = np.random.default_rng(0).normal(size=(5, 2))
    assert np.array_equal(cal.expand_features(x, 1), x)


@pytest.mark.parametrize("shape,degree", [((3, 3), 1), ((3, 1), 3), ((3, 2), 0)])
def test_expand_features_rejects(shape, degree):
    with pytest.raises(DomainError):
        cal.expand_features(np.zeros(shape), degree)


# --- isotonic ----------------------------------------------------------------------


def test_pava_examples():
    assert cal.pava([0, 1, 0, 1]).tolist() == [0, 0.5, 0.5, 1]
    assert cal.pava([0, 0, 1, 1]).tolist() == [0, 0, 1, 1]


def test_isotonic_single_class_is_constant():
    m = cal.isotonic_fit(dataset([3, 1, 2], [1, 1, 1]))
    assert set(m.values) == {1.0}


def test_pava_matches_exhaustive_partition():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        y = rng.integers(0, 2, n) if rng.random() < 0.5 else rng.random(n)
        w = rng.integers(1, 4, n).astype(float)
        assert np.allclose(cal.pava(y, w), oracles.exhaustive_isotonic(y, w), atol=1e-12, rtol=0)


def test_isotonic_pools_ties_before_pava():
    m = cal.isotonic_fit(dataset([0, 0, 0, 1], [0, 1, 1, 0]))
    assert m.knots == (0.0, 1.0)
    assert m.values == pytest.approx((0.5, 0.5))


@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 1)), min_size=1, max_size=40),
       st.lists(st.floats(-10, 10), min_size=2, max_size=20))
@settings(max_examples=100, deadline=None)
def test_isotonic_monotone_and_bounded(rows, queries):
    data = dataset([r[0] for r in rows], [r[1] for r in rows])
    m = cal.isotonic_fit(data)
    q = np.sort(queries)
    p = m.predict(q)
    assert np.all(np.diff(p) >= 0) and np.all((p >= 0) & (p <= 1))


# --- binning ------------------------------------------------------------------------


def test_binning_examples():
    m = cal.binning_fit(dataset([0.1, 0.2, 0.3, 0.4, 1.5, 1.9, 2.0], [1, 1, 1, 0, 1, 1, 1]), k=2)
    assert m.posteriors == pytest.approx((0.75, 1.0))


def test_binning_empty_bin_copies_nearest():
    # bins over [0, 4] with k = 4: data in bins 0 and 3 only; ties go to the lower bin
    m = cal.binning_fit(dataset([0, 0.5, 3.5, 4], [0, 1, 1, 1]), k=4)
    assert m.posteriors == pytest.approx((0.5, 0.5, 1.0, 1.0))
    m = cal.binning_fit(dataset([0, 0.5, 5], [0, 1, 1]), k=5)
    assert m.posteriors == pytest.approx((0.5, 0.5, 0.5, 1.0, 1.0))


def test_binning_equals_per_bin_positive_fraction():
    rng = np.random.default_rng(2)
    for _ in range(200):
        data = random_data(rng, int(rng.integers(5, 80)))
        k = int(rng.integers(2, 12))
        m = cal.binning_fit(data, k)
        idx = cal._bin_index(np.asarray(m.edges), data.scores[:, 0])
        for b in range(k):
            y = data.labels[idx == b]
            if len(y):
                assert m.posteriors[b] == pytest.approx(y.mean(), abs=1e-12)


def test_binning_rejects_degenerate_range_and_small_k():
    with pytest.raises(FitError):
        cal.binning_fit(dataset([1, 1, 1], [0, 1, 0]))
    with pytest.raises(DomainError):
        cal.binning_fit(dataset([1, 2], [0, 1]), k=1)


# --- predict ------------------------------------------------------------------------


def test_predict_examples():
    assert cal.predict(cal.PlattModel(-1.0, 0.0), [0.0])[0] == 0.5
    iso = cal.IsotonicModel((0.0, 1.0), (0.2, 0.8))
    assert cal.predict(iso, [0.5, -7.0]).tolist() == pytest.approx([0.5, 0.2])
    binm = cal.BinningModel((0.0, 1.0, 2.0), (0.1, 0.9))
    assert cal.predict(binm, [2.5])[0] == 0.9


def test_predict_dimension_mismatch():
    with pytest.raises(DomainError):
        cal.predict(cal.PlattModel(-1.0, 0.0), np.zeros((3, 2)))


def test_sigmoid_outputs_strictly_inside_unit_interval():
    m = cal.PlattModel(-50.0, 0.0)
    p = m.predict([-1e6, 0.0, 1e6])
    assert np.all((p > 0) & (p < 1))


@given(st.integers(0, 10**6), st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
@settings(max_examples=40, deadline=None)
def test_every_model_predicts_in_range(seed, queries):
    data = random_data(np.random.default_rng(seed), 30)
    for m in (cal.platt_fit(data), cal.logreg_fit(data), cal.logreg_fit(data, 2),
              cal.isotonic_fit(data), cal.binning_fit(data, 10)):
        p = m.predict(queries)
        assert np.all((p >= 0) & (p <= 1))


@pytest.mark.parametrize("fit", [
    cal.platt_fit, cal.isotonic_fit, lambda d: cal.binning_fit(d, 7),
    cal.logreg_fit, lambda d: cal.logreg_fit(d, 2),
])
def test_fits_are_permutation_invariant(fit):
    rng = np.random.default_rng(9)
    data = random_data(rng, 80)
    perm = rng.permutation(80)
    a = cal.model_to_dict(fit(data))
    b = cal.model_to_dict(fit(LabeledScoreSet(data.scores[perm], data.labels[perm])))
    for key, va in a.items():
        if isinstance(va, (float, list)):
            assert np.allclose(va, b[key], atol=1e-12, rtol=1e-12)
        else:
            assert va == b[key]


# --- mixture ------------------------------------------------------------------------


def test_mixture_examples():
    assert cal.accuracy_weighted_mixture([0.3], [0.7]) == pytest.approx(0.3)
    assert cal.accuracy_weighted_mixture([0.2, 0.8], [0.6, 0.6]) == pytest.approx(0.5)
    assert cal.accuracy_weighted_mixture([1.0, 0.0], [0.9, 0.6]) == pytest.approx(0.6)


def test_mixture_rejects_nonpositive_accuracy():
    with pytest.raises(DomainError):
        cal.accuracy_weighted_mixture([0.2, 0.4], [0.5, 0.0])


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(1e-3, 1)), min_size=1, max_size=10))
def test_mixture_in_convex_hull(pairs):
    p = [a for a, _ in pairs]
    out = cal.accuracy_weighted_mixture(p, [b for _, b in pairs])
    assert min(p) <= out <= max(p)


# --- serialization --------------------------------------------------------------------


def test_model_dict_round_trip():
    data = random_data(np.random.default_rng(4), 50, d=2)
    one = LabeledScoreSet(data.scores[:, :1], data.labels)
    for m in (cal.platt_fit(one), cal.logreg_fit(data, 2), cal.isotonic_fit(one),
              cal.binning_fit(one, 5)):
        assert cal.model_from_dict(cal.model_to_dict(m)) == m


@pytest.mark.parametrize("doc", [
    {"format": "other", "version": 1, "method": "platt", "A": 0, "B": 0},
    {"format": "calibra-model", "version": 2, "method": "platt", "A": 0, "B": 0},
    {"format": "calibra-model", "version": 1, "method": "svm"},
    {"format": "calibra-model", "version": 1, "method": "platt", "A": 0},
    {"format": "calibra-model", "version": 1, "method": "isotonic", "knots": [1, 0], "values": [0, 1]},
    {"format": "calibra-model", "version": 1, "method": "binning", "edges": [0, 1], "posteriors": [2.0]},
])
def test_model_dict_rejects_malformed(doc):
    with pytest.raises(DomainError):
        cal.model_from_dict(doc)
