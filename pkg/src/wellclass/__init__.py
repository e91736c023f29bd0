"""Semi-supervised well-log classification: a two-layer neural classifier
bootstrapped by confidence-thresholded pseudo-labelling, plus baseline
classifiers, a cross-validation harness and synthetic data generation."""

from .data import (
    CsvSchema,
    Dataset,
    NormParams,
    UNLABELED,
    apply_norm,
    concat,
    derive_seed,
    fit_norm,
    load_csv,
    normalize,
    oversample_balance,
    save_csv,
    stratified_kfold,
)
from .mlp import (
    DivergenceError,
    MlpConfig,
    MlpModel,
    TrainTrace,
    accuracy,
    backprop_step,
    batch_gradients,
    forward,
    forward_batch,
    grad_check,
    init_model,
    train,
)
from .selftrain import (
    Assignment,
    Bucket,
    BucketScheme,
    BucketTable,
    DEFAULT_SCHEME,
    DynamicsTrace,
    PolicySchedule,
    PolicyStage,
    PseudoLabeledSample,
    SelectionPolicy,
    bucketize,
    default_schedule,
    emit_dynamics,
    run_selftrain,
    select,
)
from .baselines import (
    BaggedTreesClassifier,
    GaussianNbClassifier,
    KnnClassifier,
    LdaClassifier,
    LinearSvmClassifier,
    classify_all,
    fit_baseline,
    make_baseline,
)
from .evaluate import (
    AccuracyStats,
    MlpClassifier,
    RoutingTable,
    agreement_count,
    balance_factor,
    class_counts,
    routing_table,
    run_cv,
)
from .synth import SynthConfig, blob_config, generate

__version__ = "0.1.0"
