"""Mann-Whitney AUC and calibration accuracy measures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DomainError

METRICS = ("rmse_ind", "rmse_sub", "rb_ind", "rb_sub")


def mann_whitney_auc(scores0, scores1) -> float:
    """Fraction of (class-1, class-0) score pairs ordered correctly, ties counting 1/2.

    Uses midranks, which reproduces the pairwise count exactly: the rank sum is
    a sum of half-integers, so the statistic is exact before the final division.
    """
    s0 = np.asarray(scores0, dtype=float).ravel()
    s1 = np.asarray(scores1, dtype=float).ravel()
    n0, n1 = len(s0), len(s1)
    if n0 == 0 or n1 == 0:
        raise DomainError("both classes need at least one score")
    ranks = rankdata(np.r_[s0, s1], method="average")
    u = ranks[n0:].sum() - n1 * (n1 + 1) / 2
    return float(u) / (n0 * n1)


def rmse_hat(predicted, true_posterior) -> float:
    p = np.asarray(predicted, dtype=float).ravel()
    q = np.asarray(true_posterior, dtype=float).ravel()
    if p.shape != q.shape or p.size == 0:
        raise DomainError("predicted and true posteriors must be nonempty and equally long")
    return math.sqrt(float(np.mean((p - q) ** 2)))


def rb_hat(predicted, labels) -> float:
    """Root Brier score of ``predicted`` against 0/1 ``labels``."""
    p = np.asarray(predicted, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if p.shape != y.shape or p.size == 0:
        raise DomainError("predictions and labels must be nonempty and equally long")
    if not np.all((y == 0) | (y == 1)):
        raise DomainError("labels must be 0 or 1")
    return math.sqrt(float(np.mean((p - y) ** 2)))


@dataclass
class EvalRecord:
    config_id: str = ""
    calibrator_id: str = ""
    n: int = 0
    trial: int = 0
    auc_target: float | None = None
    rho: float | None = None
    rmse_ind: float | None = None
    rmse_sub: float | None = None
    rb_ind: float | None = None
    rb_sub: float | None = None
    failed: bool = False
    error: str = field(default="", compare=False)

    def metric(self, name: str) -> float | None:
        return getattr(self, name)

    @property
    def cell(self) -> tuple:
        return (self.config_id, self.auc_target, self.rho, self.calibrator_id, self.n)


def score_predictions(pred_sub, pred_ind, train_labels, test_labels,
                      true_sub=None, true_ind=None, **ids) -> EvalRecord:
    """Build a record from calibrated predictions on the training and test sets."""
    rec = EvalRecord(**ids)
    rec.rb_sub = rb_hat(pred_sub, train_labels)
    rec.rb_ind = rb_hat(pred_ind, test_labels)
    if true_sub is not None:
        rec.rmse_sub = rmse_hat(pred_sub, true_sub)
        rec.rmse_ind = rmse_hat(pred_ind, true_ind)
    return rec


def evaluate_trial(model, train, test, oracle=None, **ids) -> EvalRecord:
    """Resubstitution (train) and independent (test) accuracy of a fitted model.

    RMSE fields are filled only when a true-posterior ``oracle`` is given.
    """
    true_sub = true_ind = None
    if oracle is not None:
        true_sub = oracle(train.scores)
        true_ind = oracle(test.scores)
    return score_predictions(
        model.predict(train.scores), model.predict(test.scores), train.labels, test.labels,
        true_sub, true_ind, **ids,
    )
