"""Synthetic data generator and Monte Carlo harness.

The generator draws five independent Bernoulli(1/2) covariates, assigns
the mediator-channel treatment by a logistic model in the covariate sum,
and assigns the outcome-channel treatment either by the same logistic
model (model 1, treatments dependent on covariates but conditionally
independent) or by a fair coin (model 2).  Two mediators share a linear
covariate signal plus independent Gaussian noise; the outcome adds a
covariate-modulated effect of the outcome-channel treatment, the two
mediators, a covariate baseline, and Gaussian noise.

Potential outcomes for every treatment combination are materialized from
common noise draws, so the observed data equal the potential outcome
selected by the realized treatments row by row.  Random streams are keyed
by (master seed, replication, stage), with stages ``covariates``,
``mediator-arm``, ``outcome-arm``, ``mediator-noise``, ``outcome-noise``;
each replication is fully reproducible in isolation.

An optional violation adds a direct mediator-channel edge into the
outcome with a chosen coefficient, which breaks the exclusion restriction
that the falsification tests target.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from itertools import product

import numpy as np
from scipy.special import expit

from .data import FourArmDataset, restrict_to_two_arm
from .errors import SepfxError
from .estimation import EstimatorConfig
from .falsification import (
    direct_test_h0i,
    direct_test_h0ii,
    estimate_agreement_effects,
    indirect_test_battery,
)
from .four_arm import estimate_effects_four
from .learners import LearnerSpec, make_spec
from .seeding import derive_seed, stream
from .two_arm import estimate_effects_two

N_COVARIATES = 5
COVARIATE_P = 0.5
ARM_INTERCEPT = -0.5
ARM_SLOPE = 0.1
N_MEDIATORS = 2
MEDIATOR_SHIFT = 0.1
MEDIATOR_X_SLOPE = 0.5
MEDIATOR_SD = 0.5
OUTCOME_SD = 0.5
EFFECT_BASE = 2.0
EFFECT_X_FIRST = 0.25
EFFECT_X_LAST = -0.1
BASELINE_X_FIRST = 0.2
BASELINE_X_LAST = 0.6

ESTIMATOR_NAMES = (
    "sde_four",
    "sie_four",
    "sde_two",
    "sie_two",
    "sde_agreement",
    "sie_agreement",
)


def arm_probability(x: np.ndarray) -> np.ndarray:
    """Mediator-channel assignment probability given covariates."""
    return expit(ARM_INTERCEPT + ARM_SLOPE * x.sum(axis=1))


def treatment_effect_curve(x: np.ndarray) -> np.ndarray:
    """Covariate-modulated effect of the outcome-channel treatment."""
    centered = x - COVARIATE_P
    return (
        EFFECT_BASE
        + EFFECT_X_FIRST * centered[:, :3].sum(axis=1)
        + EFFECT_X_LAST * centered[:, 3:].sum(axis=1)
    )


def baseline_curve(x: np.ndarray) -> np.ndarray:
    """Covariate contribution to the outcome mean."""
    centered = x - COVARIATE_P
    return (
        BASELINE_X_FIRST * centered[:, :3].sum(axis=1)
        + BASELINE_X_LAST * centered[:, 3:].sum(axis=1)
    )


@dataclass(frozen=True)
class SimConfig:
    """Settings for one Monte Carlo study."""

    n: int = 2000
    a_y_model: int = 1
    reps: int = 1000
    master_seed: int = 0
    estimators: tuple[str, ...] = ESTIMATOR_NAMES
    learner: str = "glm"
    k_folds: int = 2
    splits: int = 3
    alpha: float = 0.05
    clip: float = 0.01
    strategy: str = "ensemble"
    sde_level: int = 1
    sie_level: int = 1
    violation: float | None = None
    threads: int = 1

    def __post_init__(self):
        if self.n < 100:
            raise ValueError("n must be at least 100")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if self.a_y_model not in (1, 2):
            raise ValueError("a_y_model must be 1 or 2")
        unknown = set(self.estimators) - set(ESTIMATOR_NAMES)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "a_y_model": self.a_y_model,
            "reps": self.reps,
            "master_seed": self.master_seed,
            "estimators": list(self.estimators),
            "learner": self.learner,
            "k_folds": self.k_folds,
            "splits": self.splits,
            "alpha": self.alpha,
            "clip": self.clip,
            "strategy": self.strategy,
            "sde_level": self.sde_level,
            "sie_level": self.sie_level,
            "violation": self.violation,
            "threads": self.threads,
        }


@dataclass(frozen=True)
class SimTruth:
    """True values of the four estimand families under a configuration."""

    sde_four: float
    sie_four: float
    sde_two: float
    sie_two: float

    def to_json_dict(self) -> dict:
        return {
            "sde_four": self.sde_four,
            "sie_four": self.sie_four,
            "sde_two": self.sde_two,
            "sie_two": self.sie_two,
        }


@dataclass(frozen=True)
class PotentialOutcomes:
    """Covariates, assignments, and the full potential-outcome grid."""

    x: np.ndarray
    a_y: np.ndarray
    a_m: np.ndarray
    mediators: dict
    outcomes: dict


def draw_potentials(cfg: SimConfig, rep: int) -> PotentialOutcomes:
    """Draw one replication's potential-outcome grid deterministically."""
    n = cfg.n
    x = (
        stream(cfg.master_seed, rep, "covariates").random((n, N_COVARIATES))
        < COVARIATE_P
    ).astype(np.float64)
    p_arm = arm_probability(x)
    a_m = (stream(cfg.master_seed, rep, "mediator-arm").random(n) < p_arm).astype(
        np.int64
    )
    p_y = p_arm if cfg.a_y_model == 1 else 0.5
    a_y = (stream(cfg.master_seed, rep, "outcome-arm").random(n) < p_y).astype(
        np.int64
    )
    med_noise = stream(cfg.master_seed, rep, "mediator-noise").normal(
        0.0, MEDIATOR_SD, size=(n, N_MEDIATORS)
    )
    med_base = MEDIATOR_X_SLOPE * (x - COVARIATE_P).sum(axis=1)
    mediators = {
        level: MEDIATOR_SHIFT * level + med_base[:, None] + med_noise
        for level in (0, 1)
    }
    out_noise = stream(cfg.master_seed, rep, "outcome-noise").normal(
        0.0, OUTCOME_SD, size=n
    )
    effect = treatment_effect_curve(x)
    base = baseline_curve(x)
    violation = cfg.violation or 0.0
    outcomes = {}
    for level_y in (0, 1):
        for level_m in (0, 1):
            outcomes[(level_y, level_m)] = (
                effect * level_y
                + mediators[level_m].sum(axis=1)
                + base
                + violation * level_m
                + out_noise
            )
    return PotentialOutcomes(
        x=x, a_y=a_y, a_m=a_m, mediators=mediators, outcomes=outcomes
    )


def generate_dataset(cfg: SimConfig, rep: int) -> FourArmDataset:
    """Observed four-arm dataset for one replication.

    The observed mediators and outcome are the potential values selected
    by the realized treatments, so repeated calls with the same seed and
    replication index are bit-identical.
    """
    pot = draw_potentials(cfg, rep)
    m = np.where(pot.a_m[:, None] == 1, pot.mediators[1], pot.mediators[0])
    y = np.empty(cfg.n)
    for cell, values in pot.outcomes.items():
        rows = (pot.a_y == cell[0]) & (pot.a_m == cell[1])
        y[rows] = values[rows]
    return FourArmDataset(y=y, a_y=pot.a_y, a_m=pot.a_m, m=m, x=pot.x)


def _agreement_weighted_effect(model: int) -> float:
    # average the treatment-effect curve over covariate patterns, weighting
    # by the probability that the two assignments agree at that pattern
    if model == 2:
        return EFFECT_BASE
    numerator = 0.0
    denominator = 0.0
    for bits in product((0, 1), repeat=N_COVARIATES):
        x = np.array(bits, dtype=np.float64).reshape(1, -1)
        p = float(arm_probability(x)[0])
        agree = p * p + (1.0 - p) * (1.0 - p)
        weight = agree / 2.0**N_COVARIATES
        numerator += weight * float(treatment_effect_curve(x)[0])
        denominator += weight
    return numerator / denominator


def true_effects(cfg: SimConfig) -> SimTruth:
    """Exact estimand values implied by the generator.

    The four-arm direct effect and both indirect effects are closed-form
    constants.  The two-arm direct effect reweights the effect curve by
    the per-pattern agreement probability, computed by enumerating all
    covariate patterns; under model 2 agreement is independent of the
    covariates and the value collapses to the base effect.
    """
    return SimTruth(
        sde_four=EFFECT_BASE,
        sie_four=N_MEDIATORS * MEDIATOR_SHIFT,
        sde_two=_agreement_weighted_effect(cfg.a_y_model),
        sie_two=N_MEDIATORS * MEDIATOR_SHIFT,
    )


def estimator_config_for(
    learner: str,
    seed: int,
    k_folds: int = 2,
    splits: int = 3,
    alpha: float = 0.05,
    clip: float = 0.01,
    strategy: str = "ensemble",
) -> EstimatorConfig:
    """Build an estimator configuration from a learner preset name."""
    outcome = make_spec(learner, seed=seed)
    if learner == "glm":
        propensity = LearnerSpec(kind="glm", basis="main")
    else:
        propensity = outcome
    return EstimatorConfig(
        outcome=outcome,
        propensity=propensity,
        k_folds=k_folds,
        splits=splits,
        alpha=alpha,
        clip=clip,
        seed=seed,
        strategy=strategy,
        keep_eif=False,
    )


def _rep_config(cfg: SimConfig, rep: int) -> EstimatorConfig:
    return estimator_config_for(
        cfg.learner,
        seed=derive_seed(cfg.master_seed, "estimation", rep),
        k_folds=cfg.k_folds,
        splits=cfg.splits,
        alpha=cfg.alpha,
        clip=cfg.clip,
        strategy=cfg.strategy,
    )


def _requests_for(cfg: SimConfig, family: str) -> list:
    requests = []
    if f"sde_{family}" in cfg.estimators:
        requests.append(("sde", cfg.sde_level))
    if f"sie_{family}" in cfg.estimators:
        requests.append(("sie", cfg.sie_level))
    return requests


def _simulate_one(cfg: SimConfig, rep: int) -> dict:
    """Estimate every configured estimator on one replication.

    Returns ``{estimator: (point, lo, hi)}``; a family that fails with an
    estimation error maps its estimators to ``None``.
    """
    ds = generate_dataset(cfg, rep)
    config = _rep_config(cfg, rep)
    out: dict = {}

    def record(family: str, runner) -> None:
        requests = _requests_for(cfg, family)
        if not requests:
            return
        names = [f"{kind}_{family}" for kind, _ in requests]
        try:
            estimates = runner(requests)
        except SepfxError:
            for name in names:
                out[name] = None
            return
        for name, est in zip(names, estimates):
            out[name] = (est.point, est.ci[0], est.ci[1])

    record("four", lambda reqs: estimate_effects_four(ds, reqs, config))
    record("agreement", lambda reqs: estimate_agreement_effects(ds, reqs, config))
    if _requests_for(cfg, "two"):
        try:
            ds2 = restrict_to_two_arm(ds)
            record("two", lambda reqs: estimate_effects_two(ds2, reqs, config))
        except SepfxError:
            for kind, _ in _requests_for(cfg, "two"):
                out[f"{kind}_two"] = None
    return out


@dataclass(frozen=True)
class SimResultRow:
    """Aggregated accuracy of one estimator across replications."""

    estimator: str
    estimand: str
    fixed_level: int
    design: str
    population: str
    n: int
    reps: int
    failures: int
    bias: float
    rmse: float
    coverage: float

    def to_json_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "estimand": self.estimand,
            "fixed_level": self.fixed_level,
            "design": self.design,
            "population": self.population,
            "n": self.n,
            "reps": self.reps,
            "failures": self.failures,
            "bias": self.bias,
            "rmse": self.rmse,
            "coverage": self.coverage,
            "bias_x100": 100.0 * self.bias,
            "rmse_x100": 100.0 * self.rmse,
        }


@dataclass(frozen=True)
class SimReport:
    """Full Monte Carlo output: configuration, truths, and accuracy rows."""

    config: SimConfig
    truth: SimTruth
    rows: tuple[SimResultRow, ...]
    runtime_seconds: float

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "truth": self.truth.to_json_dict(),
            "rows": [row.to_json_dict() for row in self.rows],
            "runtime_seconds": self.runtime_seconds,
        }


_ESTIMATOR_META = {
    "sde_four": ("sde", "four-arm", "four-arm", "sde_four"),
    "sie_four": ("sie", "four-arm", "four-arm", "sie_four"),
    "sde_two": ("sde", "two-arm", "two-arm", "sde_two"),
    "sie_two": ("sie", "two-arm", "two-arm", "sie_two"),
    "sde_agreement": ("sde", "four-arm", "two-arm", "sde_two"),
    "sie_agreement": ("sie", "four-arm", "two-arm", "sie_two"),
}


def run_monte_carlo(cfg: SimConfig) -> SimReport:
    """Run the replication study and aggregate bias, RMSE, and coverage.

    Failed replications are counted per estimator and excluded from the
    aggregates.  Coverage is the share of replications whose confidence
    interval contains the true value.
    """
    start = time.perf_counter()
    truth = true_effects(cfg)
    truth_by_name = truth.to_json_dict()
    results = _map_reps(_simulate_one, cfg)

    rows = []
    for name in cfg.estimators:
        estimand, design, population, truth_key = _ESTIMATOR_META[name]
        level = cfg.sde_level if estimand == "sde" else cfg.sie_level
        true_value = truth_by_name[truth_key]
        points = []
        covered = 0
        failures = 0
        for rep_result in results:
            entry = rep_result.get(name)
            if entry is None:
                failures += 1
                continue
            point, lo, hi = entry
            points.append(point)
            covered += int(lo <= true_value <= hi)
        points_arr = np.asarray(points)
        successes = len(points)
        rows.append(
            SimResultRow(
                estimator=name,
                estimand=estimand,
                fixed_level=level,
                design=design,
                population=population,
                n=cfg.n,
                reps=cfg.reps,
                failures=failures,
                bias=float(points_arr.mean() - true_value) if successes else float("nan"),
                rmse=float(np.sqrt(np.mean((points_arr - true_value) ** 2)))
                if successes
                else float("nan"),
                coverage=covered / successes if successes else float("nan"),
            )
        )
    return SimReport(
        config=cfg,
        truth=truth,
        rows=tuple(rows),
        runtime_seconds=time.perf_counter() - start,
    )


def _map_reps(worker, cfg: SimConfig) -> list:
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            chunk = max(1, cfg.reps // (cfg.threads * 8))
            return list(
                pool.map(partial(worker, cfg), range(cfg.reps), chunksize=chunk)
            )
    return [worker(cfg, rep) for rep in range(cfg.reps)]


@dataclass(frozen=True)
class FalsificationStudyRow:
    """Rejection rate of one falsification test across replications."""

    test: str
    mediator: int | None
    fixed_level: int | None
    reps: int
    failures: int
    rejection_rate: float
    mean_estimate: float

    def to_json_dict(self) -> dict:
        return {
            "test": self.test,
            "mediator": self.mediator,
            "fixed_level": self.fixed_level,
            "reps": self.reps,
            "failures": self.failures,
            "rejection_rate": self.rejection_rate,
            "mean_estimate": self.mean_estimate,
        }


@dataclass(frozen=True)
class FalsificationStudyReport:
    config: SimConfig
    rows: tuple[FalsificationStudyRow, ...]
    runtime_seconds: float

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_json_dict(),
            "rows": [row.to_json_dict() for row in self.rows],
            "runtime_seconds": self.runtime_seconds,
        }


def _falsify_one(cfg: SimConfig, rep: int) -> dict:
    ds = generate_dataset(cfg, rep)
    config = _rep_config(cfg, rep)
    out: dict = {}
    for med in range(ds.n_mediators):
        try:
            res = direct_test_h0i(ds, mediator_index=med, alpha=cfg.alpha)
            out[("H0(i)", med, None)] = (res.reject, res.estimate)
        except SepfxError:
            out[("H0(i)", med, None)] = None
    try:
        res = direct_test_h0ii(ds, alpha=cfg.alpha)
        out[("H0(ii)", None, None)] = (res.reject, res.estimate)
    except SepfxError:
        out[("H0(ii)", None, None)] = None
    try:
        for res in indirect_test_battery(ds, config):
            key = (res.test, None, res.fixed_level)
            out[key] = (res.reject, res.estimate)
    except SepfxError:
        for kind in ("SDE", "SIE"):
            for level in (0, 1):
                out[(f"indirect-{kind}", None, level)] = None
    return out


def run_falsification_study(cfg: SimConfig) -> FalsificationStudyReport:
    """Estimate rejection rates of every falsification test by simulation.

    With no violation configured the rates estimate test size; with a
    violation they estimate power.
    """
    start = time.perf_counter()
    results = _map_reps(_falsify_one, cfg)
    keys = sorted(
        {key for rep_result in results for key in rep_result},
        key=lambda k: (k[0], -1 if k[1] is None else k[1], -1 if k[2] is None else k[2]),
    )
    rows = []
    for key in keys:
        rejects = []
        estimates = []
        failures = 0
        for rep_result in results:
            entry = rep_result.get(key)
            if entry is None:
                failures += 1
                continue
            rejects.append(entry[0])
            estimates.append(entry[1])
        rows.append(
            FalsificationStudyRow(
                test=key[0],
                mediator=key[1],
                fixed_level=key[2],
                reps=cfg.reps,
                failures=failures,
                rejection_rate=float(np.mean(rejects)) if rejects else float("nan"),
                mean_estimate=float(np.mean(estimates)) if estimates else float("nan"),
            )
        )
    return FalsificationStudyReport(
        config=cfg,
        rows=tuple(rows),
        runtime_seconds=time.perf_counter() - start,
    )
