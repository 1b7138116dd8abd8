"""Ready-made training configurations.

`desk_experiment_configs` is the calibrated desk-scale setup: a width-8
depth-3 net on 64x64 crops that runs the full four-row comparison in minutes
on a single CPU core. `paper_faithful_configs` mirrors the published
protocol (depth-4 U-Net, 300/150 epochs, cosine restarts with doubled
periods); it assumes full-resolution data and GPU-scale compute and exists
for fidelity, not for the test suite.
"""

from __future__ import annotations

from .config import AugmentConfig, TrainConfig
from .micronet import UNetSpec
from .optim import SgdrSchedule

DESK_AUGMENT = AugmentConfig(hflip_p=0.5, scale_range=(0.95, 1.05),
                             rotate_deg=5.0, translate_frac=0.03, shear_deg=0.0)


def desk_experiment_configs(dataset_root, seed: int = 0,
                            label_fraction: float = 1.0,
                            base_width: int = 8) -> tuple[TrainConfig, TrainConfig]:
    """Pretrain + finetune configs for a 64x64 corpus on a laptop CPU."""
    pre = TrainConfig(
        stage="pretrain", dataset_root=str(dataset_root),
        spec=UNetSpec(in_channels=3, out_channels=1, base_width=base_width,
                      depth=3, seed=seed),
        epochs=8, batch_size=8,
        schedule=SgdrSchedule(initial_period=8, max_lr=1e-3),
        augment=DESK_AUGMENT, seed=seed,
    )
    ft = TrainConfig(
        stage="finetune", dataset_root=str(dataset_root),
        spec=UNetSpec(in_channels=4, out_channels=2, base_width=base_width,
                      depth=3, seed=seed),
        epochs=36, batch_size=8,
        schedule=SgdrSchedule(initial_period=36, max_lr=1e-3, period_decay=0.9),
        augment=DESK_AUGMENT, seed=seed, label_fraction=label_fraction,
    )
    return pre, ft


def paper_faithful_configs(dataset_root, seed: int = 0,
                           label_fraction: float = 1.0) -> tuple[TrainConfig, TrainConfig]:
    """The published protocol: 300-epoch pretrain (T0=100, peak 1e-3) and
    150-epoch finetune (T0=50, peak 1e-4, peak decay 0.9), depth-4 U-Net."""
    pre = TrainConfig(
        stage="pretrain", dataset_root=str(dataset_root),
        spec=UNetSpec(in_channels=3, out_channels=1, base_width=64, depth=4, seed=seed),
        epochs=300, batch_size=26,
        schedule=SgdrSchedule(initial_period=100, max_lr=1e-3),
        augment=DESK_AUGMENT, seed=seed,
    )
    ft = TrainConfig(
        stage="finetune", dataset_root=str(dataset_root),
        spec=UNetSpec(in_channels=4, out_channels=2, base_width=64, depth=4, seed=seed),
        epochs=150, batch_size=14,
        schedule=SgdrSchedule(initial_period=50, max_lr=1e-4, period_decay=0.9),
        augment=DESK_AUGMENT, seed=seed, label_fraction=label_fraction,
    )
    return pre, ft
