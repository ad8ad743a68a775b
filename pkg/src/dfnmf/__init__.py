"""Fair graph clustering by deep nonnegative matrix tri-factorization."""

__version__ = "0.1.0"

from .deep import (
    DeepModel,
    FitReport,
    LayerSchedule,
    default_schedule,
    fit,
    objective,
    pretrain,
    update_Hi,
    update_Wp,
)
from .fairness import (
    FairnessMatrix,
    build_fairness_matrix,
    build_intersectional_matrix,
    fairness_penalty,
)
from .graph import GraphDataset, SbmSpec, calibrate_sbm, generate_sbm, homophily, load_edge_list
from .metrics import (
    MetricReport,
    acc,
    ari,
    average_balance,
    evaluate,
    modularity,
    statistical_parity_deviation,
)
from .nmtf import nmtf_fit, shallow_fair_fit
from .sweep import k_sensitivity, pareto_front, run_sweep, select_lambda_star
