"""Doubly robust ATE estimation by targeted and collaborative targeted
minimum loss estimation, including scalable pre-ordered variants, a discrete
super-learner over orderings, high-dimensional propensity-score screening
for claims data, and a Monte-Carlo replication harness.
"""

from .analysis import METHODS, estimate_ate
from .data import (Dataset, DataError, FoldAssignment, OutcomeScaler,
                   load_csv, make_folds, scale_outcome, unscale_ate)
from .engine import (CandidateTriplet, CtmleOptions, SelectionScore,
                     SequenceBuilder, build_sequence, cv_scores,
                     iptw_post_selection, run_ctmle, select_candidate)
from .estimators import (EstimateReport, OutcomeModel, PropensityFit, aiptw,
                         eic_values, fit_outcome_model, fit_propensity,
                         gcomp, ic_inference, intercept_only_propensity,
                         iptw, truncate_ps, unadjusted)
from .glm import LogisticFit, fit_epsilon, fit_logistic, predict_proba
from .hdps import (ClaimMatrix, HdpsCovariate, bross_score, hdps_pipeline,
                   load_claims_csv, prevalence_screen, recurrence_expand)
from .preorder import (CovariateOrdering, fixed_order, logistic_preorder,
                       partial_corr_preorder, partial_correlation)
from .simgen import (PlantedConfounder, ReplicationMetrics, StudySpec,
                     generate, plasmode_outcomes, plasmode_study, replicate,
                     study_spec, synthetic_claims, true_ate)
from .superlearner import DEFAULT_STRATEGIES, run_sl_ctmle
from .tmle import TargetedOutcomeModel, clever_covariate, target, tmle_ate

__version__ = "0.1.0"
