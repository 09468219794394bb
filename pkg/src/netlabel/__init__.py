"""Semi-supervised node classification on partially labeled networks.

A pairwise factor model couples per-node attribute (and optional neural
embedding) scores with per-edge correlation scores.  Learners estimate the
marginal-likelihood gradient by belief propagation, conditional-softmax
regression, or Metropolis-Hastings sampling; prediction decodes the most
likely configuration with the known labels held fixed.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .deepnet import DeepNet, SgdConfig, embed_all, train_wide_deep
from .estimator import FactorGraphClassifier
from .evaluation import (
    MetricsReport,
    SyntheticSpec,
    evaluate,
    generate_synthetic,
    glp_baseline,
    logistic_baseline,
)
from .factors import (
    FactorScorer,
    global_statistics,
    local_statistics,
    log_attribute_factor,
    log_correlation_factor,
    log_deep_factor,
    log_potential,
    softmax_local_statistics,
)
from .features import (
    FeatureSchema,
    MITable,
    RawUserRecord,
    build_mi_table,
    content_features,
    encode_profile,
    featurize,
    read_raw_records,
    whitespace_tokenize,
    write_node_file,
)
from .learning import (
    HistoryEntry,
    LearnerConfig,
    StopReason,
    TrainingRun,
    predict,
    save_history_csv,
    train,
    train_lbp,
    train_mh,
    train_mh_plus,
    train_parallel,
    train_sr,
)
from .lbp import max_sum_decode, sum_product
from .network import (
    DatasetSplit,
    Edge,
    EdgeKind,
    LoadOptions,
    PartiallyLabeledNetwork,
    filter_rare_categories,
    load_network,
    save_network,
    split_labels,
)
from .oracle import ExactSummary, enumerate_summary, exact_gradient, log_marginal_objective
from .params import ParameterVector, SufficientStatistics
from .sampling import MarkovChain, sample_map, stream

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "DatasetSplit",
    "DeepNet",
    "Edge",
    "EdgeKind",
    "ExactSummary",
    "FactorGraphClassifier",
    "FactorScorer",
    "FeatureSchema",
    "HistoryEntry",
    "LearnerConfig",
    "LoadOptions",
    "MarkovChain",
    "MetricsReport",
    "MITable",
    "ParameterVector",
    "PartiallyLabeledNetwork",
    "RawUserRecord",
    "SgdConfig",
    "StopReason",
    "SufficientStatistics",
    "SyntheticSpec",
    "TrainingRun",
    "build_mi_table",
    "content_features",
    "embed_all",
    "encode_profile",
    "enumerate_summary",
    "evaluate",
    "exact_gradient",
    "featurize",
    "filter_rare_categories",
    "generate_synthetic",
    "global_statistics",
    "glp_baseline",
    "load_checkpoint",
    "load_network",
    "local_statistics",
    "log_attribute_factor",
    "log_correlation_factor",
    "log_deep_factor",
    "log_marginal_objective",
    "log_potential",
    "logistic_baseline",
    "max_sum_decode",
    "predict",
    "read_raw_records",
    "sample_map",
    "save_checkpoint",
    "save_history_csv",
    "save_network",
    "softmax_local_statistics",
    "split_labels",
    "stream",
    "sum_product",
    "train",
    "train_lbp",
    "train_mh",
    "train_mh_plus",
    "train_parallel",
    "train_sr",
    "train_wide_deep",
    "whitespace_tokenize",
    "write_node_file",
]
