"""Trainable TSK fuzzy classifiers with saturation diagnostics."""

from .data import (
    Dataset,
    NormStats,
    SplitSpec,
    load_dense,
    load_sparse_index_value,
    save_dense,
    split,
    synth_gaussian,
    zscore_fit_transform,
)
from .diagnostics import (
    DiagnosticsCollector,
    DiagnosticsRecord,
    SweepSpec,
    average_firing,
    count_fired_rules,
    firing_percentiles,
    landscape_probe,
    measure,
    saturation_sweep,
)
from .errors import (
    ConfigError,
    DegenerateInputError,
    NumericError,
    ParseError,
    SchemaError,
    TskError,
)
from .gradients import (
    GradientSet,
    Loss,
    finite_diff_grad,
    grad_l1_norms,
    loss_and_grad,
    loss_value,
    relative_error,
)
from .initializers import InitSpec, init_model, kmeans_centers
from .model import (
    EPS_LOG,
    FIRED_THRESHOLD,
    SIGMA_MIN,
    Defuzz,
    FiringState,
    TskModel,
    defuzzify,
)
from .seeding import rng, substream_seed
from .trainer import (
    AdamState,
    TrainConfig,
    TrainEvent,
    TrainReport,
    effective_batch_size,
    evaluate,
    train,
)

__version__ = "0.1.0"
