"""Separable direct and indirect effect estimation.

Estimators for four-arm designs that randomize the outcome and mediator
treatment channels independently, matched estimators for standard two-arm
designs, agreement-population contrasts that link the two, and the
falsification tests and Monte Carlo machinery built on top of them.
"""

__version__ = "0.1.0"

from .crossfit import FoldAssignment, SplitEstimate, central_splits, make_folds, median_adjust
from .data import (
    ColumnMap,
    FourArmDataset,
    TwoArmDataset,
    ValidationReport,
    load_four_arm,
    load_two_arm,
    restrict_to_two_arm,
    save_four_arm,
    save_two_arm,
    validate,
)
from .errors import (
    BadK,
    DataError,
    DegenerateFold,
    EmptyAgreementSet,
    EmptyDataset,
    EmptyList,
    EmptySubset,
    LearnerError,
    MismatchedN,
    MissingCell,
    MissingColumn,
    MissingTreatmentLevel,
    NonBinaryTreatment,
    NonNumericCell,
    SepfxError,
    SingleClassWarning,
    SingularDesign,
    TooFewRows,
)
from .estimation import EffectEstimate, EstimatorConfig
from .falsification import (
    TestResult,
    direct_test_h0i,
    direct_test_h0ii,
    estimate_agreement_effects,
    estimate_sde_agreement,
    estimate_sie_agreement,
    estimate_theta,
    indirect_test,
    indirect_test_battery,
)
from .four_arm import (
    estimate_effects_four,
    estimate_mean_four,
    estimate_sde_four,
    estimate_sie_four,
)
from .learners import LearnerSpec, fit_classifier, fit_regressor, fit_super_learner, make_spec
from .seeding import derive_seed, stream
from .simulation import (
    ESTIMATOR_NAMES,
    FalsificationStudyReport,
    SimConfig,
    SimReport,
    SimTruth,
    draw_potentials,
    generate_dataset,
    run_falsification_study,
    run_monte_carlo,
    true_effects,
)
from .two_arm import estimate_effects_two, estimate_mean_two, estimate_sde_two, estimate_sie_two

__all__ = [
    "__version__",
    "BadK",
    "ColumnMap",
    "DataError",
    "DegenerateFold",
    "ESTIMATOR_NAMES",
    "EffectEstimate",
    "EmptyAgreementSet",
    "EmptyDataset",
    "EmptyList",
    "EmptySubset",
    "EstimatorConfig",
    "FalsificationStudyReport",
    "FoldAssignment",
    "FourArmDataset",
    "LearnerError",
    "LearnerSpec",
    "MismatchedN",
    "MissingCell",
    "MissingColumn",
    "MissingTreatmentLevel",
    "NonBinaryTreatment",
    "NonNumericCell",
    "SepfxError",
    "SimConfig",
    "SimReport",
    "SimTruth",
    "SingleClassWarning",
    "SingularDesign",
    "SplitEstimate",
    "TestResult",
    "TooFewRows",
    "TwoArmDataset",
    "ValidationReport",
    "central_splits",
    "derive_seed",
    "direct_test_h0i",
    "direct_test_h0ii",
    "draw_potentials",
    "estimate_agreement_effects",
    "estimate_effects_four",
    "estimate_effects_two",
    "estimate_mean_four",
    "estimate_mean_two",
    "estimate_sde_agreement",
    "estimate_sde_four",
    "estimate_sde_two",
    "estimate_sie_agreement",
    "estimate_sie_four",
    "estimate_sie_two",
    "estimate_theta",
    "fit_classifier",
    "fit_regressor",
    "fit_super_learner",
    "generate_dataset",
    "indirect_test",
    "indirect_test_battery",
    "load_four_arm",
    "load_two_arm",
    "make_folds",
    "make_spec",
    "median_adjust",
    "restrict_to_two_arm",
    "run_falsification_study",
    "run_monte_carlo",
    "save_four_arm",
    "save_two_arm",
    "stream",
    "true_effects",
    "validate",
]
