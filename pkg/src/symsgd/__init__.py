"""Parallel SGD for linear learners with sound model combiners.

Training drivers live in :mod:`symsgd.parallel`; scikit-learn wrappers in
:mod:`symsgd.estimator`; everything they build on (sparse vectors, learner
steps, combiners, metrics, LibSVM io, verification helpers) is re-exported
here for direct use.
"""

from .combiner import ExactCombiner, OracleScaleError, ProjectedCombiner, Projection
from .core import (
    Dataset,
    DenseVector,
    DimensionMismatch,
    Example,
    InvalidLabel,
    SparseVector,
)
from .dataio import (
    DatasetStats,
    ParseError,
    dataset_stats,
    dump_libsvm,
    generate_synthetic,
    load_libsvm,
    max_abs_scale,
    parse_libsvm,
    save_libsvm,
    unit_normalize,
)
from .estimator import SymSGDClassifier, SymSGDRegressor
from .learners import (
    LABEL_CONVENTIONS,
    LEARNERS,
    Hyperparams,
    apply_action,
    combiner_action,
    sgd_step,
)
from .metrics import UndefinedMetric, auc, loss
from .parallel import (
    ALGORITHMS,
    ParallelConfig,
    TrainReport,
    detect_frequent_features,
    train,
    train_async_symsgd,
    train_hogwild,
    train_mr_symsgd,
    train_sequential,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "Dataset",
    "DatasetStats",
    "DenseVector",
    "DimensionMismatch",
    "ExactCombiner",
    "Example",
    "Hyperparams",
    "InvalidLabel",
    "LABEL_CONVENTIONS",
    "LEARNERS",
    "OracleScaleError",
    "ParallelConfig",
    "ParseError",
    "ProjectedCombiner",
    "Projection",
    "SparseVector",
    "SymSGDClassifier",
    "SymSGDRegressor",
    "TrainReport",
    "UndefinedMetric",
    "apply_action",
    "auc",
    "combiner_action",
    "dataset_stats",
    "detect_frequent_features",
    "dump_libsvm",
    "generate_synthetic",
    "load_libsvm",
    "loss",
    "max_abs_scale",
    "parse_libsvm",
    "save_libsvm",
    "sgd_step",
    "train",
    "train_async_symsgd",
    "train_hogwild",
    "train_mr_symsgd",
    "train_sequential",
    "unit_normalize",
]
