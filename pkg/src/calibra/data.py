from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True, eq=False)
class LabeledScoreSet:
    """Scores of one or more classifiers on the same observations, with labels.

    ``scores`` is an ``(n, d)`` float array, ``labels`` an ``(n,)`` int array of
    0/1 class indicators.
    """

    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim == 1:
            scores = scores[:, None]
        labels = np.asarray(self.labels)
        if scores.ndim != 2 or labels.ndim != 1 or len(labels) != len(scores):
            raise DomainError("scores must be (n, d) and labels (n,)")
        if not np.all(np.isfinite(scores)):
            raise DomainError("scores must be finite")
        if labels.size and not np.all((labels == 0) | (labels == 1)):
            raise DomainError("labels must be 0 or 1")
        scores.setflags(write=False)
        labels = labels.astype(np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.scores.shape[1]

    @property
    def n1(self) -> int:
        return int(self.labels.sum())

    @property
    def n0(self) -> int:
        return len(self.labels) - self.n1

    def column(self, j: int) -> LabeledScoreSet:
        return LabeledScoreSet(self.scores[:, [j]], self.labels)

    def class_scores(self, label: int, j: int = 0) -> np.ndarray:
        return self.scores[self.labels == label, j]
