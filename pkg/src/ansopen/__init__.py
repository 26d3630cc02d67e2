"""Open-world classification with one-vs-rest heads trained on
adaptively synthesized negative samples."""

from .data import (
    ClusterSpec,
    EmbeddingDataset,
    OpenWorldSplit,
    SyntheticSpec,
    category_stats,
    generate_synthetic,
    load_dataset,
    make_open_world_split,
    save_dataset,
)
from .errors import (
    AnsError,
    FormatError,
    NumericError,
    ShapeError,
    ValidationError,
)
from .fixtures import standard_datasets, standard_spec
from .known import (
    KnownClassifier,
    KnownTrainConfig,
    load_known,
    predict_known,
    save_known,
    train_known,
)
from .metrics import EvalReport, evaluate
from .openworld import (
    MspModel,
    OpenWorldModel,
    OvrTrainConfig,
    TrainTrace,
    infer,
    load_open_world,
    predict_msp,
    save_open_world,
    train_msp,
    train_ovr,
)
from .sampler import (
    MODES,
    AnsConfig,
    NegativeBatch,
    ascend,
    estimate_radius_bound,
    generate_negatives,
    project_to_shell,
    sample_noise,
)

__version__ = "0.1.0"

__all__ = [
    "AnsConfig",
    "AnsError",
    "ClusterSpec",
    "EmbeddingDataset",
    "EvalReport",
    "FormatError",
    "KnownClassifier",
    "KnownTrainConfig",
    "MODES",
    "MspModel",
    "NegativeBatch",
    "NumericError",
    "OpenWorldModel",
    "OpenWorldSplit",
    "OvrTrainConfig",
    "ShapeError",
    "SyntheticSpec",
    "TrainTrace",
    "ValidationError",
    "ascend",
    "category_stats",
    "estimate_radius_bound",
    "evaluate",
    "generate_negatives",
    "generate_synthetic",
    "infer",
    "load_dataset",
    "load_known",
    "load_open_world",
    "make_open_world_split",
    "predict_known",
    "predict_msp",
    "project_to_shell",
    "sample_noise",
    "save_dataset",
    "save_known",
    "save_open_world",
    "standard_datasets",
    "standard_spec",
    "train_known",
    "train_msp",
    "train_ovr",
    "__version__",
]
