"""Causal DAG tools for diagnostic test accuracy studies."""

from .estimators import (
    AccuracyEstimate,
    CrossTab2x2,
    EmOptions,
    LcaResult,
    VerificationData,
    accuracy_from_data,
    accuracy_vs,
    begg_greenes,
    bias_report,
    conditional_covariance,
    correct_for_known_reference,
    lca_em,
    stratified_accuracy,
)
from .graph import (
    Dag,
    Node,
    NodeRole,
    Path,
    all_paths,
    ancestors,
    backdoor_paths,
    d_separated,
    descendants,
    make_dag,
    minimal_adjustment_sets,
    open_paths,
    parse_dag,
)
from .patterns import AnalysisSpec, BiasFinding, BiasKind, detect_biases, validate_roles
from .probability import (
    BayesNet,
    Cpt,
    Dataset,
    JointTable,
    attach_cpts,
    condition,
    empirical_joint,
    exact_joint,
    marginal,
    query_prob,
    sample,
)
from .scenarios import Scenario, ScenarioReport, builtin_scenarios, load_scenario, run_scenario

__version__ = "0.1.0"
