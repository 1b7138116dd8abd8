"""Dataset splits, deterministic subsampling, and geometric augmentation.

Dataset directory layout (all PNG, zero-padded numeric ids):

    <root>/images/<id>.png         3-channel face image
    <root>/face_masks/<id>.png     binary face-region mask
    <root>/weak_labels/<id>.png    8-bit texture map (pretraining target)
    <root>/truth/<id>.png          fused wrinkle ground truth
    <root>/annotations/<a>/<id>.png   per-annotator masks
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .config import AugmentConfig, TrainConfig
from .errors import DatasetMissingError, TooFewSamplesError, WrinkleforgeError
from .image_io import load_mask, load_png
from .texture import load_texture


@dataclass(frozen=True)
class SplitManifest:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    seed: int

    def to_dict(self) -> dict:
        return {"train": list(self.train), "val": list(self.val),
                "test": list(self.test), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitManifest":
        return cls(tuple(d["train"]), tuple(d["val"]), tuple(d["test"]), d["seed"])


def make_split(ids: list[str], config: TrainConfig) -> SplitManifest:
    """Deterministic train/val/test partition, persisted next to the dataset.

    Sizes are floor(f_train * n) / floor(f_val * n) / remainder. A manifest
    already on disk for this seed is reused so reruns see the identical split.
    """
    if len(ids) < 10:
        raise TooFewSamplesError(f"need at least 10 ids to split, got {len(ids)}")
    manifest_path = Path(config.dataset_root) / "splits" / f"seed_{config.seed}.json"
    if manifest_path.is_file():
        manifest = SplitManifest.from_dict(json.loads(manifest_path.read_text()))
        if sorted(manifest.train + manifest.val + manifest.test) != sorted(ids):
            raise WrinkleforgeError(
                f"{manifest_path} does not cover the current id set; "
                "delete it to re-split")
        return manifest
    rng = np.random.default_rng(config.seed)
    perm = [ids[i] for i in rng.permutation(len(ids))]
    n = len(ids)
    n_train = math.floor(config.split[0] * n)
    n_val = math.floor(config.split[1] * n)
    manifest = SplitManifest(tuple(perm[:n_train]),
                             tuple(perm[n_train:n_train + n_val]),
                             tuple(perm[n_train + n_val:]), config.seed)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(manifest.to_dict(), sort_keys=True) + "\n")
    return manifest


def subsample_ids(ids, fraction: float, seed: int) -> list[str]:
    """Pick a fixed fraction of ids, stable across runs and platforms.

    Ids are ranked by sha256(seed:id) and the lowest round(fraction * n)
    digests win, so the subset depends only on (ids, fraction, seed).
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    ids = sorted(ids)
    if fraction == 1.0:
        return ids
    count = max(1, round(fraction * len(ids)))
    ranked = sorted(ids, key=lambda i: hashlib.sha256(f"{seed}:{i}".encode()).hexdigest())
    return sorted(ranked[:count])


def list_corpus_ids(root) -> list[str]:
    images = Path(root) / "images"
    if not images.is_dir():
        raise DatasetMissingError(f"{images} not found")
    ids = sorted(p.stem for p in images.glob("*.png"))
    if not ids:
        raise DatasetMissingError(f"{images} holds no PNG images")
    return ids


def load_arrays(root, ids, *, need_weak=False, need_truth=False):
    """Load corpus samples as stacked float arrays keyed by role.

    Returns a dict with "image" (n, 3, H, W), "face" (n, H, W), and when
    requested "weak" (n, H, W) in [0, 1] and "truth" (n, H, W) in {0, 1}.
    """
    root = Path(root)
    images, faces, weaks, truths = [], [], [], []
    for i in ids:
        try:
            img = load_png(root / "images" / f"{i}.png")
            face = load_mask(root / "face_masks" / f"{i}.png")
        except FileNotFoundError as e:
            raise DatasetMissingError(str(e)) from e
        images.append(img.data.transpose(2, 0, 1))
        faces.append(face.data)
        if need_weak:
            try:
                weaks.append(load_texture(root / "weak_labels" / f"{i}.png").data / 255.0)
            except FileNotFoundError as e:
                raise DatasetMissingError(str(e)) from e
        if need_truth:
            try:
                truths.append(load_mask(root / "truth" / f"{i}.png").data)
            except FileNotFoundError as e:
                raise DatasetMissingError(str(e)) from e
    out = {"image": np.stack(images), "face": np.stack(faces).astype(np.float64)}
    if need_weak:
        out["weak"] = np.stack(weaks)
    if need_truth:
        out["truth"] = np.stack(truths).astype(np.float64)
    return out


def sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Per-sample RNG stream so augmentation draws are order-independent."""
    return np.random.default_rng(np.random.SeedSequence(entropy=(seed, epoch, index)))


def augment_sample(channels: np.ndarray, target: np.ndarray, target_kind: str,
                   params: AugmentConfig, rng: np.random.Generator):
    """Apply one random geometric transform to input channels and target alike.

    channels is (C, H, W); target is (H, W). Input channels and continuous
    targets resample bilinearly, mask targets by nearest neighbor (so they
    stay binary). With identity parameters the inputs pass through untouched.
    """
    if params.is_identity():
        return channels, target
    flip = rng.random() < params.hflip_p
    scale = rng.uniform(params.scale_range[0], params.scale_range[1])
    angle = np.deg2rad(rng.uniform(-params.rotate_deg, params.rotate_deg))
    shear = np.deg2rad(rng.uniform(-params.shear_deg, params.shear_deg))
    h, w = target.shape
    ty = rng.uniform(-params.translate_frac, params.translate_frac) * h
    tx = rng.uniform(-params.translate_frac, params.translate_frac) * w

    if flip:
        channels = channels[:, :, ::-1]
        target = target[:, ::-1]

    if scale == 1.0 and angle == 0.0 and shear == 0.0 and tx == 0.0 and ty == 0.0:
        return np.ascontiguousarray(channels), np.ascontiguousarray(target)

    # forward map: rotate+shear+scale about the image center, then translate
    c, s = np.cos(angle), np.sin(angle)
    lin = np.array([[c, -s], [s, c]]) @ np.array([[1.0, np.tan(shear)], [0.0, 1.0]]) * scale
    center = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    inv = np.linalg.inv(lin)
    # ndimage maps output coords to input coords: x_in = inv @ (x_out - center - t) + center
    offset = center - inv @ (center + np.array([ty, tx]))

    def warp(plane, order):
        return ndimage.affine_transform(plane, inv, offset=offset, order=order,
                                        mode="constant", cval=0.0, prefilter=False)

    warped = np.stack([warp(ch, 1) for ch in channels])
    t_order = 0 if target_kind == "mask" else 1
    warped_t = warp(target, t_order)
    if target_kind == "mask":
        warped_t = (warped_t > 0.5).astype(target.dtype)
    return warped, warped_t
