"""wrinkleforge: weakly supervised facial-wrinkle segmentation at desk scale.

The pipeline has two stages. First, texture maps (pixels darker than their
Gaussian-blurred neighborhood) masked to the face region act as free weak
labels for pretraining a small U-Net as a regressor. Second, the pretrained
weights transfer into a 4-channel (RGB + texture) classifier finetuned on
majority-voted human annotations with a soft Dice loss.
"""

from .config import (
    AugmentConfig,
    IDENTITY_AUGMENT,
    INPUT_MODE_RGB,
    INPUT_MODE_RGBTEX,
    OptimizerConfig,
    TrainConfig,
    load_config,
    save_config,
)
from .fusion import AgreementReport, AnnotationSet, agreement, jaccard, majority_vote, pearson
from .image_io import (
    BinaryMask,
    Image,
    apply_mask,
    load_mask,
    load_png,
    save_mask,
    save_png,
    to_grayscale,
)
from .losses import LossValue, mse, soft_dice, softmax_rows
from .metrics import ConfusionCounts, EvalResult, confusion, evaluate, evaluate_dataset
from .micronet import (
    Checkpoint,
    Model,
    UNetSpec,
    build,
    expand_input_channels,
    load_checkpoint,
    model_from_checkpoint,
    replace_head,
    save_checkpoint,
)
from .optim import AdamWState, SgdrSchedule, adamw_step, sgdr_lr
from .presets import desk_experiment_configs, paper_faithful_configs
from .synthcorpus import SynthSpec, generate, validate
from .texture import (
    GaussianKernel,
    TextureMap,
    batch_weak_labels,
    gaussian_blur,
    load_texture,
    make_gaussian,
    save_texture,
    texture_map,
    weak_label,
)
from .trainer import finetune, predict, pretrain, run_experiment

__version__ = "0.1.0"
