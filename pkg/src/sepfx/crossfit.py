"""Sample splitting, cross-fitting, and median aggregation across splits.

Estimators in this package cross-fit their nuisance models: the data are
partitioned into K folds, nuisances are fit on the complement of each
fold, and each row is evaluated only with models that never saw it.  The
whole procedure is repeated over S independent partitions and the
resulting (point, variance) pairs are combined by the median rule, which
adds the squared distance of each split's point from the median point to
that split's variance before taking the median of the adjusted variances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BadK,
    DegenerateFold,
    EmptyList,
    MismatchedN,
    MissingCell,
    MissingTreatmentLevel,
)


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of ``n`` rows into ``k`` folds of near-equal size."""

    k: int
    assignment: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    def train_rows(self, fold: int) -> np.ndarray:
        return np.nonzero(self.assignment != fold)[0]

    def test_rows(self, fold: int) -> np.ndarray:
        return np.nonzero(self.assignment == fold)[0]


@dataclass(frozen=True)
class SplitEstimate:
    """Point estimate with an asymptotic variance (not divided by n)."""

    point: float
    variance: float
    n: int


def make_folds(n: int, k: int, seed: int) -> FoldAssignment:
    """Random partition into k folds whose sizes differ by at most one.

    Raises
    ------
    BadK
        If ``k`` is outside ``[2, n]``.
    """
    if not 2 <= k <= n:
        raise BadK(f"k must satisfy 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    assignment[rng.permutation(n)] = np.arange(n) % k
    out = FoldAssignment(k=k, assignment=assignment, seed=seed)
    out.assignment.setflags(write=False)
    return out


def cross_fit(dataset, folds: FoldAssignment, fitter: Callable) -> list:
    """Fit ``fitter(dataset, train_rows)`` once per fold.

    A fitter failing because a treatment cell or level is absent from its
    training rows raises :class:`DegenerateFold` carrying the fold index;
    other fitter errors propagate with the fold index prepended to their
    message.
    """
    fits = []
    for fold in range(folds.k):
        train = folds.train_rows(fold)
        try:
            fits.append(fitter(dataset, train))
        except (MissingCell, MissingTreatmentLevel) as exc:
            raise DegenerateFold(fold, str(exc)) from exc
        except Exception as exc:
            exc.args = (f"fold {fold}: {exc}",) + exc.args[1:]
            raise
    return fits


def median_adjust(estimates: Sequence[SplitEstimate]) -> SplitEstimate:
    """Combine split estimates by the median rule.

    The combined point is the median of the split points.  The combined
    variance is the median over splits of ``variance + (point - combined
    point)**2``, which penalizes splits whose points sit far from the
    median; it is therefore never smaller than the median raw variance.

    Raises
    ------
    EmptyList
        If no estimates are supplied.
    MismatchedN
        If the estimates disagree on the sample size.
    """
    if len(estimates) == 0:
        raise EmptyList("no split estimates to combine")
    sizes = {est.n for est in estimates}
    if len(sizes) != 1:
        raise MismatchedN(f"splits disagree on n: {sorted(sizes)}")
    points = np.array([est.point for est in estimates])
    variances = np.array([est.variance for est in estimates])
    point = float(np.median(points))
    variance = float(np.median(variances + (points - point) ** 2))
    return SplitEstimate(point=point, variance=variance, n=estimates[0].n)


def central_splits(points: Sequence[float]) -> tuple[int, ...]:
    """Indices of the split(s) whose points realize the median.

    One index for an odd number of splits, the two middle indices for an
    even number; averaging per-row contributions over these splits keeps
    the mean of the retained contributions equal to the median point.
    """
    order = np.argsort(np.asarray(points), kind="stable")
    s = len(order)
    if s % 2 == 1:
        return (int(order[s // 2]),)
    return (int(order[s // 2 - 1]), int(order[s // 2]))
