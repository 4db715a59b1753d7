"""Effect estimation for four-arm designs.

In a four-arm design the outcome-channel treatment ``a_y`` and the
mediator-channel treatment ``a_m`` are randomized separately, so the mean
counterfactual outcome under any (a_y, a_m) combination is identified.
The estimator is the augmented inverse-probability form: for each arm
combination, a per-row score

    1{A_Y=a_y, A_M=a_m} * (Y - nu(a_y, a_m, X)) / pi(a_y, a_m, X)
        + nu(a_y, a_m, X)

whose sample mean estimates E[Y^(a_y, a_m)].  ``nu`` is the conditional
outcome mean and ``pi`` the conditional cell probability, both cross-fit.
The direct effect fixes the mediator channel and contrasts the outcome
channel; the indirect effect does the reverse.  Variance comes from the
empirical second moment of the score contrasts around the point estimate,
with the median rule combining repeated sample splits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crossfit import FoldAssignment, cross_fit
from .data import FourArmDataset
from .errors import MissingCell
from .estimation import EffectEstimate, EstimatorConfig, build_estimate, run_battery
from .learners import FittedPredictor, fit_classifier, fit_regressor

CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass
class NuisanceFitFour:
    """Cross-fittable nuisance bundle for a four-arm dataset.

    ``cell_classifiers`` maps each (a_y, a_m) combination to a probability
    model for membership in that cell, or ``None`` when the cell had no
    training rows and was not required (its probability is a structural
    zero).  Cell probabilities are normalized to sum to one across cells;
    the ``propensity`` accessor additionally clips to [clip, 1 - clip]
    before the value is used in a denominator.
    """

    cell_classifiers: dict
    outcome_fit: FittedPredictor
    clip: float

    def cell_probabilities(self, x: np.ndarray) -> np.ndarray:
        raw = np.empty((x.shape[0], len(CELLS)))
        for j, cell in enumerate(CELLS):
            clf = self.cell_classifiers[cell]
            raw[:, j] = 0.0 if clf is None else clf.predict(x)
        return raw / raw.sum(axis=1, keepdims=True)

    def propensity(self, a_y: int, a_m: int, x: np.ndarray) -> np.ndarray:
        probs = self.cell_probabilities(x)[:, CELLS.index((a_y, a_m))]
        return np.clip(probs, self.clip, 1.0 - self.clip)

    def outcome(self, a_y: int, a_m: int, x: np.ndarray) -> np.ndarray:
        stacked = np.column_stack(
            [
                np.full(x.shape[0], float(a_y)),
                np.full(x.shape[0], float(a_m)),
                x,
            ]
        )
        return self.outcome_fit.predict(stacked)


def fit_nuisance_four(
    ds: FourArmDataset,
    train_rows: np.ndarray,
    config: EstimatorConfig,
    required_cells: tuple = CELLS,
) -> NuisanceFitFour:
    """Fit cell-probability and outcome models on the given training rows.

    Cell probabilities are one-vs-rest classifiers normalized across the
    four cells.  A required cell with no training rows raises
    :class:`MissingCell`; an unrequired empty cell gets probability zero.
    """
    x = ds.x[train_rows]
    a_y = ds.a_y[train_rows]
    a_m = ds.a_m[train_rows]
    classifiers = {}
    for cell in CELLS:
        labels = ((a_y == cell[0]) & (a_m == cell[1])).astype(np.float64)
        if labels.sum() == 0.0:
            if cell in required_cells:
                raise MissingCell(f"no training rows in arm cell {cell}")
            classifiers[cell] = None
            continue
        classifiers[cell] = fit_classifier(
            x, labels, config.propensity, clip=config.clip
        )
    stacked = np.column_stack([a_y.astype(np.float64), a_m.astype(np.float64), x])
    outcome_fit = fit_regressor(
        stacked, ds.y[train_rows], config.outcome, interact_cols=(0, 1)
    )
    return NuisanceFitFour(
        cell_classifiers=classifiers, outcome_fit=outcome_fit, clip=config.clip
    )


def eif(
    ds: FourArmDataset,
    a_y: int,
    a_m: int,
    nuis: NuisanceFitFour,
    rows: np.ndarray | None = None,
) -> np.ndarray:
    """Per-row scores whose mean estimates E[Y^(a_y, a_m)].

    Rows outside the (a_y, a_m) cell contribute only their predicted
    outcome; rows inside add the inverse-probability-weighted residual.
    """
    if rows is None:
        rows = np.arange(ds.n)
    x = ds.x[rows]
    nu = nuis.outcome(a_y, a_m, x)
    pi = nuis.propensity(a_y, a_m, x)
    inside = (ds.a_y[rows] == a_y) & (ds.a_m[rows] == a_m)
    return inside * (ds.y[rows] - nu) / pi + nu


def _cells_for_requests(requests) -> tuple:
    cells = []
    for kind, level in requests:
        if kind == "sde":
            pair = ((1, level), (0, level))
        elif kind == "sie":
            pair = ((level, 1), (level, 0))
        elif kind == "mean":
            pair = (tuple(level),)
        else:
            raise ValueError(f"unknown estimand kind {kind!r}")
        cells.extend(pair)
    return tuple(dict.fromkeys(cells))


def _request_cells(kind: str, level) -> tuple:
    if kind == "sde":
        return ((1, level), (0, level))
    if kind == "sie":
        return ((level, 1), (level, 0))
    return (tuple(level), None)


def estimate_effects_four(
    ds: FourArmDataset,
    requests: list,
    config: EstimatorConfig | None = None,
    fitter=None,
) -> list[EffectEstimate]:
    """Estimate several four-arm estimands from shared nuisance fits.

    ``requests`` is a list of ``("sde", a_m)``, ``("sie", a_y)``, or
    ``("mean", (a_y, a_m))`` tuples.  All requests within a split reuse the
    same cross-fit nuisances.  ``fitter`` overrides the default nuisance
    fitting; it receives ``(dataset, train_rows)`` and must return an
    object with ``propensity`` and ``outcome`` accessors.
    """
    config = config or EstimatorConfig()
    needed = _cells_for_requests(requests)
    nuisance_fitter = fitter or (
        lambda data, train: fit_nuisance_four(data, train, config, needed)
    )

    def split_fn(folds: FoldAssignment) -> dict:
        fits = cross_fit(ds, folds, nuisance_fitter)
        scores = {cell: np.empty(ds.n) for cell in needed}
        raw_ipw = {cell: np.empty(ds.n) for cell in needed} if config.diagnostics else None
        raw_reg = {cell: np.empty(ds.n) for cell in needed} if config.diagnostics else None
        for fold in range(folds.k):
            test = folds.test_rows(fold)
            nuis = fits[fold]
            x = ds.x[test]
            for cell in needed:
                nu = nuis.outcome(cell[0], cell[1], x)
                pi = nuis.propensity(cell[0], cell[1], x)
                inside = (ds.a_y[test] == cell[0]) & (ds.a_m[test] == cell[1])
                scores[cell][test] = inside * (ds.y[test] - nu) / pi + nu
                if config.diagnostics:
                    raw_ipw[cell][test] = inside * ds.y[test] / pi
                    raw_reg[cell][test] = nu
        out = {}
        for kind, level in requests:
            plus, minus = _request_cells(kind, level)
            contrib = scores[plus] if minus is None else scores[plus] - scores[minus]
            diag = None
            if config.diagnostics:
                ipw = raw_ipw[plus] if minus is None else raw_ipw[plus] - raw_ipw[minus]
                reg = raw_reg[plus] if minus is None else raw_reg[plus] - raw_reg[minus]
                diag = {"ipw": float(np.mean(ipw)), "outcome_regression": float(np.mean(reg))}
            out[(kind, level)] = (contrib, diag)
        return out

    combined = run_battery(ds.n, config, split_fn)
    return [
        build_estimate(
            combined[(kind, level)],
            estimand=kind,
            fixed_level=list(level) if kind == "mean" else level,
            n=ds.n,
            config=config,
            design="four-arm",
            population="four-arm",
        )
        for kind, level in requests
    ]


def estimate_mean_four(
    ds: FourArmDataset,
    a_y: int,
    a_m: int,
    config: EstimatorConfig | None = None,
    fitter=None,
) -> EffectEstimate:
    """Cross-fit estimate of the counterfactual mean E[Y^(a_y, a_m)]."""
    return estimate_effects_four(ds, [("mean", (a_y, a_m))], config, fitter)[0]


def estimate_sde_four(
    ds: FourArmDataset,
    a_m: int,
    config: EstimatorConfig | None = None,
    fitter=None,
) -> EffectEstimate:
    """Direct effect: contrast the outcome channel at fixed mediator arm."""
    return estimate_effects_four(ds, [("sde", a_m)], config, fitter)[0]


def estimate_sie_four(
    ds: FourArmDataset,
    a_y: int,
    config: EstimatorConfig | None = None,
    fitter=None,
) -> EffectEstimate:
    """Indirect effect: contrast the mediator channel at fixed outcome arm."""
    return estimate_effects_four(ds, [("sie", a_y)], config, fitter)[0]
