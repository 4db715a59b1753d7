"""Effect estimation for two-arm designs.

With a single randomized treatment the mean counterfactual outcome under
separate outcome-channel and mediator-channel levels (a_y, a_m) is
identified by a nested regression: first the outcome on (treatment,
mediators, covariates), then the level-``a_y`` predictions on (treatment,
covariates), evaluated at treatment ``a_m``.  The per-row score

    1{A=a_y} / w(a_m, X) * r(a_m, M, X) / r(a_y, M, X) * (Y - mu(a_y, M, X))
  + 1{A=a_m} / w(a_m, X) * (mu(a_y, M, X) - lam(a_y, a_m, X))
  + lam(a_y, a_m, X)

has mean E[Y^(a_y, a_m)], where ``w`` is the treatment probability given
covariates, ``r`` the treatment probability given mediators and
covariates, ``mu`` the outcome regression, and ``lam`` the nested
projection of ``mu`` onto (treatment, covariates).  When a_y = a_m = a the
score collapses to the standard augmented inverse-probability form

    1{A=a} / w(a, X) * (Y - lam(a, a, X)) + lam(a, a, X).

The outcome regressions support three strategies: a single model with
treatment interactions ("S"), per-arm models ("T"), or an ensemble that
averages the two scores row by row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .crossfit import FoldAssignment, cross_fit
from .data import TwoArmDataset
from .errors import LearnerError, MissingTreatmentLevel
from .estimation import EffectEstimate, EstimatorConfig, build_estimate, run_battery
from .learners import FittedPredictor, fit_classifier, fit_regressor


@dataclass
class NuisanceFitTwo:
    """Single-strategy nuisance bundle for a two-arm dataset.

    ``treat_given_mx`` and ``treat_given_x`` model P(A=1 | ...) given the
    mediator-plus-covariate and covariate-only feature sets, and are
    queried at either level through the complement rule.  ``mu_fits`` maps
    a treatment level to an outcome model over (mediators, covariates);
    ``lam_fits`` maps (a_y, a_m) to the nested projection over covariates.
    """

    treat_given_mx: FittedPredictor
    treat_given_x: FittedPredictor
    mu_fits: dict
    lam_fits: dict
    strategy: str
    clip: float

    def rho(self, level: int, m: np.ndarray, x: np.ndarray) -> np.ndarray:
        p1 = self.treat_given_mx.predict(np.column_stack([m, x]))
        return p1 if level == 1 else 1.0 - p1

    def omega(self, level: int, x: np.ndarray) -> np.ndarray:
        p1 = self.treat_given_x.predict(x)
        return p1 if level == 1 else 1.0 - p1

    def mu(self, level: int, m: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.mu_fits[level].predict(np.column_stack([m, x]))

    def lam(self, a_y: int, a_m: int, x: np.ndarray) -> np.ndarray:
        return self.lam_fits[(a_y, a_m)].predict(x)


@dataclass
class EnsembleNuisanceTwo:
    """Both outcome-model strategies, kept so scores can be averaged."""

    single: NuisanceFitTwo
    stratified: NuisanceFitTwo
    clip: float
    strategy: str = "ensemble"


@dataclass
class _JointMu:
    """Outcome model that includes the treatment as an interacting feature."""

    fit: FittedPredictor
    level: int

    def predict(self, mx: np.ndarray) -> np.ndarray:
        stacked = np.column_stack([np.full(mx.shape[0], float(self.level)), mx])
        return self.fit.predict(stacked)


@dataclass
class _JointLam:
    """Nested projection from a single model over (treatment, covariates)."""

    fit: FittedPredictor
    level: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        stacked = np.column_stack([np.full(x.shape[0], float(self.level)), x])
        return self.fit.predict(stacked)


def _fit_single_strategy(
    ds: TwoArmDataset,
    rows: np.ndarray,
    config: EstimatorConfig,
    treat_given_mx: FittedPredictor,
    treat_given_x: FittedPredictor,
    strategy: str,
) -> NuisanceFitTwo:
    a = ds.a[rows].astype(np.float64)
    y = ds.y[rows]
    mx = np.column_stack([ds.m[rows], ds.x[rows]])
    x = ds.x[rows]

    mu_fits: dict = {}
    lam_fits: dict = {}
    if strategy == "S":
        joint = fit_regressor(
            np.column_stack([a, mx]), y, config.outcome, interact_cols=(0,)
        )
        for level in (0, 1):
            mu_fits[level] = _JointMu(fit=joint, level=level)
            # project the level-specific predictions back onto (A, X)
            targets = mu_fits[level].predict(mx)
            stage2 = fit_regressor(
                np.column_stack([a, x]), targets, config.outcome, interact_cols=(0,)
            )
            for prime in (0, 1):
                lam_fits[(level, prime)] = _JointLam(fit=stage2, level=prime)
    elif strategy == "T":
        arm_rows = {}
        for level in (0, 1):
            arm = np.nonzero(a == level)[0]
            if arm.size == 0:
                raise MissingTreatmentLevel(
                    f"treatment level {level} absent from training rows"
                )
            arm_rows[level] = arm
            mu_fits[level] = fit_regressor(mx[arm], y[arm], config.outcome)
        for level in (0, 1):
            predictions = mu_fits[level].predict(mx)
            for prime in (0, 1):
                arm = arm_rows[prime]
                lam_fits[(level, prime)] = fit_regressor(
                    x[arm], predictions[arm], config.outcome
                )
    else:
        raise LearnerError(f"unknown strategy {strategy!r}")
    return NuisanceFitTwo(
        treat_given_mx=treat_given_mx,
        treat_given_x=treat_given_x,
        mu_fits=mu_fits,
        lam_fits=lam_fits,
        strategy=strategy,
        clip=config.clip,
    )


def fit_nuisance_two(
    ds: TwoArmDataset,
    train_rows: np.ndarray,
    config: EstimatorConfig,
    strategy: str | None = None,
):
    """Fit all two-arm nuisances on the given training rows.

    The nested projection is fit on the same rows as the outcome model (no
    further splitting).  With the ensemble strategy both bundles are
    returned, sharing the treatment-probability fits.

    Raises
    ------
    MissingTreatmentLevel
        If the training rows contain only one treatment level.
    """
    strategy = strategy or config.strategy
    a = ds.a[train_rows].astype(np.float64)
    if np.ptp(a) == 0.0:
        raise MissingTreatmentLevel("training rows contain a single treatment level")
    mx = np.column_stack([ds.m[train_rows], ds.x[train_rows]])
    treat_given_mx = fit_classifier(mx, a, config.propensity, clip=config.clip)
    treat_given_x = fit_classifier(
        ds.x[train_rows], a, config.propensity, clip=config.clip
    )
    if strategy == "ensemble":
        return EnsembleNuisanceTwo(
            single=_fit_single_strategy(
                ds, train_rows, config, treat_given_mx, treat_given_x, "S"
            ),
            stratified=_fit_single_strategy(
                ds, train_rows, config, treat_given_mx, treat_given_x, "T"
            ),
            clip=config.clip,
        )
    return _fit_single_strategy(
        ds, train_rows, config, treat_given_mx, treat_given_x, strategy
    )


def _eif_single(
    ds: TwoArmDataset,
    a_y: int,
    a_m: int,
    nuis: NuisanceFitTwo,
    rows: np.ndarray,
) -> np.ndarray:
    m = ds.m[rows]
    x = ds.x[rows]
    y = ds.y[rows]
    a = ds.a[rows]
    omega = nuis.omega(a_m, x)
    ratio = nuis.rho(a_m, m, x) / nuis.rho(a_y, m, x)
    mu = nuis.mu(a_y, m, x)
    lam = nuis.lam(a_y, a_m, x)
    residual_term = (a == a_y) / omega * ratio * (y - mu)
    projection_term = (a == a_m) / omega * (mu - lam)
    return residual_term + projection_term + lam


def eif(
    ds: TwoArmDataset,
    a_y: int,
    a_m: int,
    nuis,
    rows: np.ndarray | None = None,
) -> np.ndarray:
    """Per-row scores whose mean estimates E[Y^(a_y, a_m)].

    For an ensemble bundle the scores of the two strategies are averaged
    row by row with equal weight.
    """
    if rows is None:
        rows = np.arange(ds.n)
    if isinstance(nuis, EnsembleNuisanceTwo):
        return 0.5 * (
            _eif_single(ds, a_y, a_m, nuis.single, rows)
            + _eif_single(ds, a_y, a_m, nuis.stratified, rows)
        )
    return _eif_single(ds, a_y, a_m, nuis, rows)


def eif_collapsed(
    ds: TwoArmDataset,
    level: int,
    nuis,
    rows: np.ndarray | None = None,
) -> np.ndarray:
    """Reduced score at a_y = a_m: weighted residual around the projection."""
    if rows is None:
        rows = np.arange(ds.n)
    if isinstance(nuis, EnsembleNuisanceTwo):
        return 0.5 * (
            eif_collapsed(ds, level, nuis.single, rows)
            + eif_collapsed(ds, level, nuis.stratified, rows)
        )
    x = ds.x[rows]
    omega = nuis.omega(level, x)
    lam = nuis.lam(level, level, x)
    return (ds.a[rows] == level) / omega * (ds.y[rows] - lam) + lam


def _pairs_for_requests(requests) -> tuple:
    pairs = []
    for kind, level in requests:
        if kind == "sde":
            pairs.extend([(1, level), (0, level)])
        elif kind == "sie":
            pairs.extend([(level, 1), (level, 0)])
        elif kind == "mean":
            pairs.append(tuple(level))
        else:
            raise ValueError(f"unknown estimand kind {kind!r}")
    return tuple(dict.fromkeys(pairs))


def split_scores_two(
    ds: TwoArmDataset,
    folds: FoldAssignment,
    config: EstimatorConfig,
    pairs: tuple,
    fitter=None,
) -> dict:
    """Out-of-fold score vectors for each requested (a_y, a_m) pair."""
    nuisance_fitter = fitter or (
        lambda data, train: fit_nuisance_two(data, train, config)
    )
    fits = cross_fit(ds, folds, nuisance_fitter)
    scores = {pair: np.empty(ds.n) for pair in pairs}
    for fold in range(folds.k):
        test = folds.test_rows(fold)
        for pair in pairs:
            scores[pair][test] = eif(ds, pair[0], pair[1], fits[fold], rows=test)
    return scores


def estimate_effects_two(
    ds: TwoArmDataset,
    requests: list,
    config: EstimatorConfig | None = None,
    fitter=None,
) -> list[EffectEstimate]:
    """Estimate several two-arm estimands from shared nuisance fits.

    ``requests`` follows the four-arm convention: ``("sde", a_m)``,
    ``("sie", a_y)``, or ``("mean", (a_y, a_m))``.

    Raises
    ------
    MissingTreatmentLevel
        If the dataset contains a single treatment level overall.
    """
    config = config or EstimatorConfig()
    if np.ptp(ds.a) == 0:
        raise MissingTreatmentLevel("dataset contains a single treatment level")
    pairs = _pairs_for_requests(requests)

    def split_fn(folds: FoldAssignment) -> dict:
        scores = split_scores_two(ds, folds, config, pairs, fitter)
        out = {}
        for kind, level in requests:
            if kind == "sde":
                contrib = scores[(1, level)] - scores[(0, level)]
            elif kind == "sie":
                contrib = scores[(level, 1)] - scores[(level, 0)]
            else:
                contrib = scores[tuple(level)]
            out[(kind, level)] = (contrib, None)
        return out

    combined = run_battery(ds.n, config, split_fn)
    return [
        build_estimate(
            combined[(kind, level)],
            estimand=kind,
            fixed_level=list(level) if kind == "mean" else level,
            n=ds.n,
            config=config,
            design="two-arm",
            population="two-arm",
            strategy=config.strategy,
        )
        for kind, level in requests
    ]


def estimate_mean_two(
    ds: TwoArmDataset,
    a_y: int,
    a_m: int,
    config: EstimatorConfig | None = None,
    fitter=None,
) -> EffectEstimate:
    """Estimate E[Y^(a_y, a_m)] from two-arm data."""
    return estimate_effects_two(ds, [("mean", (a_y, a_m))], config, fitter)[0]


def estimate_sde_two(
    ds: TwoArmDataset,
    a_m: int,
    config: EstimatorConfig | None = None,
    fitter=None,
) -> EffectEstimate:
    """Direct effect from two-arm data at a fixed mediator-channel level."""
    return estimate_effects_two(ds, [("sde", a_m)], config, fitter)[0]


def estimate_sie_two(
    ds: TwoArmDataset,
    a_y: int,
    config: EstimatorConfig | None = None,
    fitter=None,
) -> EffectEstimate:
    """Indirect effect from two-arm data at a fixed outcome-channel level."""
    return estimate_effects_two(ds, [("sie", a_y)], config, fitter)[0]
