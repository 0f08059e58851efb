"""Robust off-policy evaluation and policy learning when the conditional
reward distribution may drift within a KL ball of the logging
environment.

Public surface, by concern:

* scalar dual machinery and primal oracles: :mod:`driftdro.dual`
* nuisance fitting (propensities, dual fields, loss regressions):
  :mod:`driftdro.nuisance`
* cross-fitted doubly-robust value estimation: :mod:`driftdro.estimator`
* policy-tree learning and exact tree search: :mod:`driftdro.learner`,
  :mod:`driftdro.treesearch`
* joint-shift baseline: :mod:`driftdro.baseline`
* simulation designs and evaluation metrics: :mod:`driftdro.bench`
"""

from ._core import active_backend_name, available_backends
from .baseline import BaselineConfig, JointDualValue, joint_dro_value, learn_joint_dro
from .basis import BasisSpec, default_basis
from .bench import (
    HardInstance,
    empirical_robust_value,
    hard_instance_generator,
    kl_sphere_perturb,
    simulate_linear_boundary,
    target_policy_rings,
    v_min_metric,
)
from .dataset import (
    Dataset,
    PotentialOutcomeTable,
    read_dataset_csv,
    read_outcome_table_csv,
    write_dataset_csv,
    write_outcome_table_csv,
)
from .dual import (
    DEFAULT_ALPHA_FLOOR,
    DiscreteDist,
    DualParams,
    SolverConfig,
    SolverError,
    bernoulli_worst_mean,
    binary_kl,
    loss,
    loss_grad,
    max_feasible_radius,
    solve_dual,
    worst_case_mean_discrete,
)
from .estimator import (
    EstimatorConfig,
    FoldPlan,
    RobustValueReport,
    estimate_policy_value,
    estimate_policy_value_sweep,
    estimate_policy_value_with_covariate_shift,
    make_folds,
)
from .learner import (
    LearnerConfig,
    NuisanceBundle,
    ScoreMatrix,
    build_score_matrix,
    fit_per_action_nuisances,
    learn,
)
from .nuisance import (
    DualFieldModel,
    NuisanceConfig,
    PropensityModel,
    RegressionModel,
    eval_dual_field,
    fit_dual_field,
    fit_propensity,
    fit_regression,
    g_hat_target,
    predict_propensity,
)
from .trees import Leaf, PolicyTree, Split, as_policy, constant_policy
from .treesearch import policy_value_from_scores, search_policy_tree

__version__ = "0.1.0"
