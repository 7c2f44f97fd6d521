"""Score calibrators: Platt, logistic (plain and expanded), isotonic and binning.

All fitted models are immutable; ``predict`` maps an ``(n, d)`` score matrix to
calibrated probabilities in [0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import ClassVar, Union

import numpy as np
from scipy.special import expit

from .data import LabeledScoreSet
from .errors import DomainError, FitError, NumericError

MODEL_FORMAT = "calibra-model"
MODEL_VERSION = 1

DEFAULT_RIDGE = 1e-4
SEPARATION_NORM = 30.0


_P_MIN = np.finfo(float).tiny
_P_MAX = 1.0 - 2.0**-53


def _open_unit(p):
    # sigmoid outputs stay strictly inside (0, 1) even where expit rounds
    return np.clip(p, _P_MIN, _P_MAX)


def _as_matrix(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if scores.ndim == 1:
        scores = scores[:, None]
    if scores.ndim != 2:
        raise DomainError("scores must be a vector or an (n, d) matrix")
    return scores


def _require_both_classes(data: LabeledScoreSet):
    if data.n0 == 0 or data.n1 == 0:
        raise FitError("calibration data must contain both classes")


def _require_single(data: LabeledScoreSet, method: str):
    if data.dim != 1:
        raise DomainError(f"{method} calibration supports a single score column only")


# ---------------------------------------------------------------------------
# Models


@dataclass(frozen=True)
class PlattModel:
    """p(h) = 1 / (1 + exp(A h + B))."""

    method: ClassVar[str] = "platt"
    A: float
    B: float
    dim: int = 1

    def predict(self, scores):
        h = _check_dim(self, scores)[:, 0]
        return _open_unit(expit(-(self.A * h + self.B)))


@dataclass(frozen=True)
class LogisticModel:
    method: ClassVar[str] = "logistic"
    weights: tuple[float, ...]
    intercept: float
    degree: int = 1
    ridge: float = DEFAULT_RIDGE
    dim: int = 1
    separated: bool = False

    def predict(self, scores):
        x = expand_features(_check_dim(self, scores), self.degree)
        return _open_unit(expit(x @ np.asarray(self.weights) + self.intercept))


@dataclass(frozen=True)
class IsotonicModel:
    method: ClassVar[str] = "isotonic"
    knots: tuple[float, ...]
    values: tuple[float, ...]
    dim: int = 1

    def predict(self, scores):
        h = _check_dim(self, scores)[:, 0]
        return np.interp(h, self.knots, self.values)


@dataclass(frozen=True)
class BinningModel:
    method: ClassVar[str] = "binning"
    edges: tuple[float, ...]
    posteriors: tuple[float, ...]
    dim: int = 1

    @property
    def k(self) -> int:
        return len(self.posteriors)

    def predict(self, scores):
        h = _check_dim(self, scores)[:, 0]
        return np.asarray(self.posteriors)[_bin_index(np.asarray(self.edges), h)]


CalibratorModel = Union[PlattModel, LogisticModel, IsotonicModel, BinningModel]


def _check_dim(model, scores):
    scores = _as_matrix(scores)
    if scores.shape[1] != model.dim:
        raise DomainError(
            f"{model.method} model expects {model.dim} score column(s), got {scores.shape[1]}"
        )
    return scores


def predict(model: CalibratorModel, scores) -> np.ndarray:
    return model.predict(scores)


# ---------------------------------------------------------------------------
# Features


def expand_features(scores, degree: int) -> np.ndarray:
    """Polynomial score expansion.

    degree 1 returns the scores unchanged; degree 2 gives ``(h, h^2)`` for one
    score and ``(h1, h2, h1^2, h2^2, h1 h2)`` for two.
    """
    x = _as_matrix(scores)
    d = x.shape[1]
    if d not in (1, 2):
        raise DomainError("score expansion supports one or two score columns")
    if degree == 1:
        return x
    if degree != 2:
        raise DomainError(f"unsupported expansion degree {degree}")
    if d == 1:
        return np.column_stack([x[:, 0], x[:, 0] ** 2])
    h1, h2 = x[:, 0], x[:, 1]
    return np.column_stack([h1, h2, h1**2, h2**2, h1 * h2])


# ---------------------------------------------------------------------------
# Platt


def platt_targets(n0: int, n1: int) -> tuple[float, float]:
    """Smoothed (positive, negative) regression targets."""
    return (n1 + 1) / (n1 + 2), 1 / (n0 + 2)


def platt_objective(params, h, t):
    """Cross-entropy of 1/(1+exp(A h + B)) against targets ``t``, with its gradient."""
    a, b = params
    f = a * h + b
    loss = float(np.sum(np.logaddexp(0.0, f) - (1 - t) * f))
    r = t - expit(-f)
    return loss, np.array([np.dot(r, h), r.sum()])


def _newton(objective, hessian, x0, grad_tol, max_iter, scale, on_step=None):
    """Damped Newton iteration with backtracking (Armijo) line search."""
    x = np.asarray(x0, dtype=float)
    loss, grad = objective(x)
    for it in range(max_iter):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= grad_tol:
            return x, it, False
        step = _solve(hessian(x), -grad)
        slope = float(grad @ step)
        if slope >= 0:
            step, slope = -grad, -gnorm * gnorm
        t = 1.0
        while True:
            cand = x + t * step
            c_loss, c_grad = objective(cand)
            if c_loss <= loss + 1e-4 * t * slope:
                break
            # loss flat to rounding: accept when the gradient still shrinks
            if abs(c_loss - loss) <= 1e-11 * max(1.0, abs(loss)) and (
                np.linalg.norm(c_grad) < gnorm
            ):
                break
            t *= 0.5
            if t < 1e-10:
                # no representable improvement left
                if gnorm <= 1e-9 * scale:
                    return x, it, False
                raise NumericError(
                    f"line search failed at iteration {it} with gradient norm {gnorm:.3e}"
                )
        improved = c_loss < loss
        x, loss, grad = cand, c_loss, c_grad
        if on_step is not None and on_step(x, improved):
            return x, it + 1, True
    gnorm = float(np.linalg.norm(grad))
    if gnorm <= max(grad_tol, 1e-9 * scale):
        return x, max_iter, False
    raise NumericError(f"no convergence in {max_iter} iterations (gradient norm {gnorm:.3e})")


def _solve(hess, rhs):
    try:
        step = np.linalg.solve(hess, rhs)
        if np.all(np.isfinite(step)):
            return step
    except np.linalg.LinAlgError:
        pass
    try:
        step = np.linalg.solve(hess + 1e-8 * np.eye(len(rhs)), rhs)
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular Hessian") from exc
    if not np.all(np.isfinite(step)):
        raise NumericError("singular Hessian")
    return step


def platt_fit(data: LabeledScoreSet) -> PlattModel:
    _require_single(data, "Platt")
    _require_both_classes(data)
    h = data.scores[:, 0]
    n0, n1 = data.n0, data.n1
    t_pos, t_neg = platt_targets(n0, n1)
    t = np.where(data.labels == 1, t_pos, t_neg)

    def hessian(params):
        p = expit(-(params[0] * h + params[1]))
        w = p * (1 - p)
        sw, swh = w.sum(), np.dot(w, h)
        return np.array([[np.dot(w, h * h) + 1e-12, swh], [swh, sw + 1e-12]])

    scale = len(h) * max(1.0, float(np.abs(h).max()))
    x0 = (0.0, math.log((n0 + 1) / (n1 + 1)))
    (a, b), _, _ = _newton(lambda p: platt_objective(p, h, t), hessian, x0, 1e-10, 100, scale)
    return PlattModel(float(a), float(b))


# ---------------------------------------------------------------------------
# Logistic regression


def logistic_objective(params, x, y, ridge):
    """Negative log-likelihood plus ``ridge/2 * |w|^2`` (intercept last, unpenalized)."""
    w, b = params[:-1], params[-1]
    eta = x @ w + b
    loss = float(np.sum(np.logaddexp(0.0, eta) - y * eta) + 0.5 * ridge * np.dot(w, w))
    r = expit(eta) - y
    grad = np.r_[x.T @ r + ridge * w, r.sum()]
    return loss, grad


def logreg_fit(data: LabeledScoreSet, degree: int = 1, ridge: float = DEFAULT_RIDGE) -> LogisticModel:
    """Newton fit of (optionally ridge-penalized) logistic regression on expanded scores.

    Complete separation is detected when the coefficient norm passes 30 while
    the likelihood still improves and every training point is on its correct
    side; the fit then stops and the model is flagged ``separated``.
    """
    _require_both_classes(data)
    if ridge < 0:
        raise DomainError("ridge must be nonnegative")
    x = expand_features(data.scores, degree)
    y = data.labels.astype(float)
    p = x.shape[1]
    design = np.column_stack([x, np.ones(len(y))])
    penalty = np.diag(np.r_[np.full(p, ridge), 0.0])

    def hessian(params):
        eta = design @ params
        s = expit(eta)
        w = s * (1 - s)
        return design.T @ (design * w[:, None]) + penalty

    sign = 2 * y - 1

    def separated(params, improved):
        w = params[:-1]
        if not improved or np.linalg.norm(w) <= SEPARATION_NORM:
            return False
        return bool(np.all(sign * (design @ params) > 0))

    prior = (y.sum() + 0.5) / (len(y) + 1)
    x0 = np.r_[np.zeros(p), math.log(prior / (1 - prior))]
    scale = len(y) * max(1.0, float(np.abs(x).max()))
    params, _, sep = _newton(
        lambda q: logistic_objective(q, x, y, ridge), hessian, x0, 1e-8, 200, scale, separated
    )
    if not sep and ridge == 0:
        # the gradient can fall under tolerance before the norm test fires;
        # without a penalty a separating fit means the MLE does not exist
        sep = bool(np.all(sign * (design @ params) > 0))
    return LogisticModel(
        tuple(float(v) for v in params[:-1]),
        float(params[-1]),
        degree,
        float(ridge),
        data.dim,
        sep,
    )


# ---------------------------------------------------------------------------
# Isotonic regression


def pava(y, w=None) -> np.ndarray:
    """Weighted least-squares nondecreasing fit of the sequence ``y``."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    means, weights, sizes = [], [], []
    for yi, wi in zip(y, w):
        means.append(yi)
        weights.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m, wt, sz = means.pop(), weights.pop(), sizes.pop()
            tot = weights[-1] + wt
            means[-1] = (means[-1] * weights[-1] + m * wt) / tot
            weights[-1] = tot
            sizes[-1] += sz
    return np.repeat(means, sizes)


def isotonic_fit(data: LabeledScoreSet) -> IsotonicModel:
    _require_single(data, "isotonic")
    if len(data) < 1:
        raise FitError("isotonic calibration needs at least one observation")
    knots, inverse, counts = np.unique(data.scores[:, 0], return_inverse=True, return_counts=True)
    positives = np.bincount(inverse, weights=data.labels, minlength=len(knots))
    values = np.clip(pava(positives / counts, counts), 0.0, 1.0)
    return IsotonicModel(tuple(knots.tolist()), tuple(values.tolist()))


# ---------------------------------------------------------------------------
# Histogram binning


def _bin_index(edges, h):
    k = len(edges) - 1
    return np.clip(np.searchsorted(edges, h, side="right") - 1, 0, k - 1)


def bin_likelihoods(data: LabeledScoreSet, edges) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin class likelihood estimates: fraction of each class's scores per bin."""
    edges = np.asarray(edges, dtype=float)
    k = len(edges) - 1
    idx = _bin_index(edges, data.scores[:, 0])
    c0 = np.bincount(idx[data.labels == 0], minlength=k)
    c1 = np.bincount(idx[data.labels == 1], minlength=k)
    return c0 / max(data.n0, 1), c1 / max(data.n1, 1)


def binning_fit(data: LabeledScoreSet, k: int = 10) -> BinningModel:
    """Equal-width histogram binning over the training score range.

    The posterior in each bin comes from the binned class likelihoods and the
    empirical prior n1/n. Empty bins take the posterior of the nearest
    nonempty bin (the lower one on ties).
    """
    _require_single(data, "binning")
    if k < 2:
        raise DomainError("binning needs at least two bins")
    if len(data) < 2:
        raise FitError("binning needs at least two observations")
    h = data.scores[:, 0]
    lo, hi = float(h.min()), float(h.max())
    if not hi > lo:
        raise FitError("degenerate score range for binning")
    edges = np.linspace(lo, hi, k + 1)
    if np.any(np.diff(edges) <= 0):
        raise FitError("score range too narrow for the requested bin count")
    f0, f1 = bin_likelihoods(data, edges)
    pi = data.n1 / len(data)
    num = f1 * pi
    den = num + f0 * (1 - pi)
    filled = den > 0
    if not filled.any():
        raise FitError("all bins empty")
    post = np.zeros(k)
    post[filled] = num[filled] / den[filled]
    full = np.flatnonzero(filled)
    for i in np.flatnonzero(~filled):
        j = np.searchsorted(full, i)
        cands = [c for c in (j - 1, j) if 0 <= c < len(full)]
        best = min(cands, key=lambda c: (abs(full[c] - i), full[c]))
        post[i] = post[full[best]]
    return BinningModel(tuple(edges.tolist()), tuple(np.clip(post, 0.0, 1.0).tolist()))


# ---------------------------------------------------------------------------
# Label-free combination


def accuracy_weighted_mixture(posteriors, accuracies) -> float:
    p = np.asarray(posteriors, dtype=float)
    a = np.asarray(accuracies, dtype=float)
    if p.ndim != 1 or p.shape != a.shape or p.size == 0:
        raise DomainError("need matching, nonempty posterior and accuracy vectors")
    if np.any(a <= 0):
        raise DomainError("accuracies must be positive")
    if np.any((p < 0) | (p > 1)):
        raise DomainError("posteriors must lie in [0, 1]")
    out = float(np.dot(p, a / a.sum()))
    return min(max(out, float(p.min())), float(p.max()))


# ---------------------------------------------------------------------------
# Serialization


def model_to_dict(model: CalibratorModel) -> dict:
    d = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "method": model.method, "dim": model.dim}
    if isinstance(model, PlattModel):
        d.update(A=model.A, B=model.B)
    elif isinstance(model, LogisticModel):
        d.update(weights=list(model.weights), intercept=model.intercept, degree=model.degree,
                 ridge=model.ridge, separated=model.separated)
    elif isinstance(model, IsotonicModel):
        d.update(knots=list(model.knots), values=list(model.values))
    elif isinstance(model, BinningModel):
        d.update(edges=list(model.edges), posteriors=list(model.posteriors))
    else:
        raise DomainError(f"not a calibrator model: {model!r}")
    return d


def model_from_dict(d: dict) -> CalibratorModel:
    if d.get("format") != MODEL_FORMAT:
        raise DomainError("not a calibrator model document")
    if d.get("version") != MODEL_VERSION:
        raise DomainError(f"unsupported model document version {d.get('version')!r}")
    method = d.get("method")
    try:
        if method == "platt":
            return PlattModel(float(d["A"]), float(d["B"]))
        if method == "logistic":
            dim = int(d["dim"])
            degree = int(d["degree"])
            weights = tuple(float(v) for v in d["weights"])
            expected = expand_features(np.zeros((1, dim)), degree).shape[1]
            if len(weights) != expected:
                raise DomainError("weight count does not match dimension and degree")
            return LogisticModel(weights, float(d["intercept"]), degree, float(d["ridge"]), dim,
                                 bool(d.get("separated", False)))
        if method == "isotonic":
            knots = tuple(float(v) for v in d["knots"])
            values = tuple(float(v) for v in d["values"])
            if len(knots) != len(values) or not knots or np.any(np.diff(knots) <= 0):
                raise DomainError("isotonic knots must be strictly increasing, one value each")
            if np.any(np.diff(values) < 0) or min(values) < 0 or max(values) > 1:
                raise DomainError("isotonic values must be nondecreasing in [0, 1]")
            return IsotonicModel(knots, values)
        if method == "binning":
            edges = tuple(float(v) for v in d["edges"])
            post = tuple(float(v) for v in d["posteriors"])
            if len(edges) != len(post) + 1 or len(post) < 1 or np.any(np.diff(edges) <= 0):
                raise DomainError("binning needs k+1 strictly increasing edges for k posteriors")
            if min(post) < 0 or max(post) > 1:
                raise DomainError("bin posteriors must lie in [0, 1]")
            return BinningModel(edges, post)
    except (KeyError, TypeError) as exc:
        raise DomainError(f"malformed {method} model document: {exc}") from exc
    raise DomainError(f"unknown calibration method {method!r}")
