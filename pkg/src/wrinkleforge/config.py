"""Training configuration: a serializable, hash-stamped hyperparameter record."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import InvalidSpecError
from .micronet import UNetSpec
from .optim import SgdrSchedule

INPUT_MODE_RGB = "rgb"
INPUT_MODE_RGBTEX = "rgb+texture"


@dataclass(frozen=True)
class OptimizerConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05

    def to_dict(self) -> dict:
        return {"beta1": self.beta1, "beta2": self.beta2,
                "eps": self.eps, "weight_decay": self.weight_decay}

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        return cls(**d)


@dataclass(frozen=True)
class AugmentConfig:
    """Geometric augmentation ranges; all zeros/unit ranges mean identity."""

    hflip_p: float = 0.5
    scale_range: tuple[float, float] = (0.95, 1.05)
    rotate_deg: float = 5.0
    translate_frac: float = 0.03
    shear_deg: float = 0.0

    def is_identity(self) -> bool:
        return (self.hflip_p == 0.0 and tuple(self.scale_range) == (1.0, 1.0)
                and self.rotate_deg == 0.0 and self.translate_frac == 0.0
                and self.shear_deg == 0.0)

    def to_dict(self) -> dict:
        return {"hflip_p": self.hflip_p, "scale_range": list(self.scale_range),
                "rotate_deg": self.rotate_deg, "translate_frac": self.translate_frac,
                "shear_deg": self.shear_deg}

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentConfig":
        d = dict(d)
        d["scale_range"] = tuple(d["scale_range"])
        return cls(**d)


IDENTITY_AUGMENT = AugmentConfig(hflip_p=0.0, scale_range=(1.0, 1.0),
                                 rotate_deg=0.0, translate_frac=0.0, shear_deg=0.0)


@dataclass(frozen=True)
class TrainConfig:
    stage: str                      # "pretrain" or "finetune"
    dataset_root: str
    spec: UNetSpec
    epochs: int
    batch_size: int
    schedule: SgdrSchedule
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    label_fraction: float = 1.0
    input_mode: str = INPUT_MODE_RGBTEX   # finetune input: "rgb" or "rgb+texture"
    dtype: str = "float32"
    init_hash: str | None = None    # optional pin on the init checkpoint's hash

    def __post_init__(self):
        if self.stage not in ("pretrain", "finetune"):
            raise InvalidSpecError(f"unknown stage {self.stage!r}")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise InvalidSpecError(f"split fractions must sum to 1, got {self.split}")
        if not 0.0 < self.label_fraction <= 1.0:
            raise InvalidSpecError(f"label_fraction must be in (0, 1], got {self.label_fraction}")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidSpecError("epochs and batch_size must be >= 1")
        if self.input_mode not in (INPUT_MODE_RGB, INPUT_MODE_RGBTEX):
            raise InvalidSpecError(f"unknown input_mode {self.input_mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise InvalidSpecError(f"dtype must be float32 or float64, got {self.dtype}")

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "dataset_root": self.dataset_root,
            "spec": self.spec.to_dict(),
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "schedule": self.schedule.to_dict(),
            "optimizer": self.optimizer.to_dict(),
            "augment": self.augment.to_dict(),
            "split": list(self.split),
            "seed": self.seed,
            "label_fraction": self.label_fraction,
            "input_mode": self.input_mode,
            "dtype": self.dtype,
            "init_hash": self.init_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["spec"] = UNetSpec.from_dict(d["spec"])
        d["schedule"] = SgdrSchedule.from_dict(d["schedule"])
        d["optimizer"] = OptimizerConfig.from_dict(d.get("optimizer", {}))
        d["augment"] = AugmentConfig.from_dict(d["augment"]) if "augment" in d else AugmentConfig()
        d["split"] = tuple(d.get("split", (0.8, 0.1, 0.1)))
        return cls(**d)

    def config_hash(self) -> str:
        """Digest of the canonical JSON form; stamped into checkpoints."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed, spec=replace(self.spec, seed=seed))


def load_config(path) -> TrainConfig:
    return TrainConfig.from_dict(json.loads(Path(path).read_text()))


def save_config(config: TrainConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
