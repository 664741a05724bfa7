"""Focus U-Net: a dual attention-gated encoder-decoder for class-imbalanced
binary segmentation, built on a self-contained numpy autodiff core, with the
hybrid focal loss family, a reproducible training loop and a CLI."""

from .attention import (
    AttentionDims,
    adaptive_kernel_channel,
    adaptive_kernel_spatial,
    additive_attention_gate,
    channel_attention,
    focal_filter,
    focus_gate,
    spatial_attention,
)
from .data import (
    AugmentationConfig,
    Sample,
    SplitPlan,
    augment,
    kfold_split,
    load_dataset,
    load_png_pair,
    resize,
    save_dataset,
    single_split,
    synth_polyp_dataset,
    zscore_normalize,
)
from .losses import (
    LossConfig,
    cross_entropy,
    dice_ce_loss,
    focal_loss,
    focal_tversky_loss,
    hybrid_focal_loss,
    soft_dice,
    tversky_index,
    tversky_loss,
)
from .metrics import ConfusionCounts, binarize, confusion, evaluate_masks, mean_metrics
from .model import (
    FocusUNet,
    NetworkConfig,
    aggregate_supervised_loss,
    build,
    deep_supervision_weight,
    expected_parameter_count,
)
from .tensor import (
    GraphNode,
    Parameter,
    backward,
    finite_diff_check,
    precision,
)
from .trainer import (
    Checkpoint,
    TrainConfig,
    evaluate_model,
    load_checkpoint,
    nesterov_step,
    poly_lr,
    restore_model,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"
