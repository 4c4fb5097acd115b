"""Auto-augmentation contrastive learning for windowed sensor time series."""

from .augment import (
    AugmentationOp,
    apply_segment_permutation,
    jitter,
    make_views,
    parse_aug_pair,
    permute,
    scale,
    segment_boundaries,
)
from .checkpoint import (
    Checkpoint,
    build_model,
    load_checkpoint,
    save_checkpoint,
    state_from_net,
)
from .data import (
    DatasetManifest,
    SyntheticSpec,
    WindowedDataset,
    generate_synthetic,
    import_ucihar,
    load_container,
    save_container,
    split_few_shot,
    window_series,
)
from .evaluation import (
    EvalReport,
    confusion_matrix,
    export_augmentation_views,
    export_embeddings,
    finetune,
    top10_average,
)
from .losses import LossConfig, autocl_loss, nt_xent, pearson_term
from .models import (
    AutoCLNet,
    Encoder,
    ForwardTrace,
    Generator,
    ModelSpec,
    PredictionHead,
    Projector,
    init_model,
    init_prediction_head,
)
from .training import (
    TrainConfig,
    TrainState,
    build_optimizer,
    early_stop_update,
    pretrain_autocl,
    pretrain_simclr,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentationOp",
    "AutoCLNet",
    "Checkpoint",
    "DatasetManifest",
    "EvalReport",
    "Encoder",
    "ForwardTrace",
    "Generator",
    "LossConfig",
    "ModelSpec",
    "PredictionHead",
    "Projector",
    "SyntheticSpec",
    "TrainConfig",
    "TrainState",
    "WindowedDataset",
    "apply_segment_permutation",
    "autocl_loss",
    "build_model",
    "build_optimizer",
    "confusion_matrix",
    "early_stop_update",
    "export_augmentation_views",
    "export_embeddings",
    "finetune",
    "generate_synthetic",
    "import_ucihar",
    "init_model",
    "init_prediction_head",
    "jitter",
    "load_checkpoint",
    "load_container",
    "make_views",
    "nt_xent",
    "parse_aug_pair",
    "pearson_term",
    "permute",
    "pretrain_autocl",
    "pretrain_simclr",
    "save_checkpoint",
    "save_container",
    "scale",
    "segment_boundaries",
    "split_few_shot",
    "state_from_net",
    "top10_average",
    "window_series",
]
