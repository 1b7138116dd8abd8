"""Procedural wrinkle corpus generator.

Each sample is a skin-toned image with smooth shading and mild noise, an
elliptical face region, and a handful of dark curved strokes standing in for
wrinkles. Three synthetic annotators perturb the true strokes (dilation,
dropped curves, small offsets), mimicking how human raters disagree about
extent, miss wrinkles, and drift at boundaries. Realism is a non-goal; what
matters is that wrinkle pixels sit darker than their blurred neighborhood so
the texture transform responds to them, and that annotator overlap lands in
a plausible inter-rater band.

Output layout: images/, face_masks/, truth/, annotations/{a,b,c}/,
manifest.json. Generation is per-sample seeded, so corpora are byte-identical
for a given spec regardless of how the work is scheduled.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from .errors import InvalidSpecError, WrinkleforgeError
from .image_io import BinaryMask, Image, load_mask, load_png, save_mask, save_png
from .fusion import jaccard

ANNOTATORS = ("a", "b", "c")
_JITTER_RETRIES = 60


@dataclass(frozen=True)
class SynthSpec:
    count: int = 600
    size: int = 64
    wrinkle_count_range: tuple[int, int] = (3, 6)
    wrinkle_width_range: tuple[int, int] = (2, 3)
    wrinkle_darkness: float = 0.45
    skin_noise: float = 0.012
    luminance_range: tuple[float, float] = (0.5, 1.0)   # per-image illumination scale
    shading_amp: float = 0.12
    face_shape: tuple[float, float] = (0.42, 0.36)   # ellipse semi-axes as size fractions
    dilate_p: float = 0.5
    drop_p: float = 0.15
    offset_px: int = 1
    jaccard_band: tuple[float, float] = (0.25, 0.6)
    seed: int = 0

    def __post_init__(self):
        if self.count < 0 or self.size < 8 or self.size % 8 != 0:
            raise InvalidSpecError("size must be a positive multiple of 8")
        if self.wrinkle_count_range[0] > self.wrinkle_count_range[1]:
            raise InvalidSpecError("empty wrinkle_count_range")
        if self.wrinkle_width_range[0] > self.wrinkle_width_range[1] \
                or self.wrinkle_width_range[0] < 1:
            raise InvalidSpecError("bad wrinkle_width_range")
        if not 0.0 <= self.wrinkle_darkness <= 1.0:
            raise InvalidSpecError("wrinkle_darkness must be in [0, 1]")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "count", "size", "wrinkle_darkness", "skin_noise", "shading_amp",
            "dilate_p", "drop_p", "offset_px", "seed")}
        d["wrinkle_count_range"] = list(self.wrinkle_count_range)
        d["wrinkle_width_range"] = list(self.wrinkle_width_range)
        d["luminance_range"] = list(self.luminance_range)
        d["face_shape"] = list(self.face_shape)
        d["jaccard_band"] = list(self.jaccard_band)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        for k in ("wrinkle_count_range", "wrinkle_width_range", "luminance_range",
                  "face_shape", "jaccard_band"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def _face_ellipse(spec: SynthSpec, rng) -> np.ndarray:
    s = spec.size
    cy = s / 2 + rng.uniform(-0.02, 0.02) * s
    cx = s / 2 + rng.uniform(-0.02, 0.02) * s
    ay = spec.face_shape[0] * s * rng.uniform(0.92, 1.05)
    ax = spec.face_shape[1] * s * rng.uniform(0.92, 1.05)
    yy, xx = np.mgrid[0:s, 0:s]
    return (((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2 <= 1.0).astype(np.uint8)


def _bezier_points(p0, p1, p2, n: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)[:, None]
    return ((1 - t) ** 2) * p0 + 2 * (1 - t) * t * p1 + (t**2) * p2


def _draw_curve(size: int, rng, face: np.ndarray, width: int) -> np.ndarray:
    """Rasterize one quadratic curve with bounded curvature inside the face."""
    ys, xs = np.nonzero(face)
    # keep endpoints off the face boundary
    inner = np.zeros((size, size), np.uint8)
    inner[ys, xs] = 1
    inner = cv2.erode(inner, np.ones((3, 3), np.uint8), iterations=2)
    iys, ixs = np.nonzero(inner)
    if len(iys) < 2:
        return np.zeros((size, size), np.uint8)
    a = rng.integers(0, len(iys))
    p0 = np.array([ixs[a], iys[a]], dtype=np.float64)
    angle = rng.uniform(0, 2 * np.pi)
    length = rng.uniform(0.25, 0.55) * size
    p2 = p0 + length * np.array([np.cos(angle), np.sin(angle)])
    p2 = np.clip(p2, 1, size - 2)
    mid = (p0 + p2) / 2
    perp = np.array([-(p2 - p0)[1], (p2 - p0)[0]])
    norm = np.linalg.norm(perp)
    if norm > 0:
        perp = perp / norm
    bow = rng.uniform(-0.25, 0.25) * np.linalg.norm(p2 - p0)
    p1 = mid + bow * perp
    pts = _bezier_points(p0, p1, p2, max(8, int(2 * length)))
    canvas = np.zeros((size, size), np.uint8)
    cv2.polylines(canvas, [np.round(pts).astype(np.int32)], isClosed=False,
                  color=1, thickness=width)
    return canvas & face   # truth stays inside the face region


def _jitter_annotation(curves: list[np.ndarray], spec: SynthSpec, rng,
                       size: int) -> np.ndarray:
    kept = [c for c in curves if rng.random() >= spec.drop_p]
    if not kept and curves:
        kept = [curves[rng.integers(0, len(curves))]]   # raters rarely miss everything
    mask = np.zeros((size, size), np.uint8)
    for c in kept:
        mask |= c
    if rng.random() < spec.dilate_p:
        mask = cv2.dilate(mask, np.ones((2, 2), np.uint8))
    dy = int(rng.integers(-spec.offset_px, spec.offset_px + 1))
    dx = int(rng.integers(-spec.offset_px, spec.offset_px + 1))
    shifted = np.zeros_like(mask)
    src_y = slice(max(0, -dy), size - max(0, dy))
    src_x = slice(max(0, -dx), size - max(0, dx))
    dst_y = slice(max(0, dy), size - max(0, -dy))
    dst_x = slice(max(0, dx), size - max(0, -dx))
    shifted[dst_y, dst_x] = mask[src_y, src_x]
    return shifted


def _make_sample(spec: SynthSpec, index: int):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(spec.seed, index)))
    s = spec.size
    face = _face_ellipse(spec, rng)

    # skin-toned base over a light backdrop; per-image illumination scale and
    # multiplicative low-frequency shading stand in for lighting diversity
    skin = np.array([0.76, 0.62, 0.52]) + rng.uniform(-0.08, 0.08, 3)
    backdrop = np.array([0.86, 0.86, 0.88])
    img = np.where(face[:, :, None] == 1, skin, backdrop)
    lum = rng.uniform(spec.luminance_range[0], spec.luminance_range[1])
    coarse = rng.standard_normal((4, 4))
    shading = 1.0 + np.clip(ndimage.zoom(coarse, s / 4, order=3), -2.5, 2.5) * spec.shading_amp
    img = img * lum * shading[:, :, None]

    n_wrinkles = int(rng.integers(spec.wrinkle_count_range[0],
                                  spec.wrinkle_count_range[1] + 1))
    curves = []
    for _ in range(n_wrinkles):
        width = int(rng.integers(spec.wrinkle_width_range[0],
                                 spec.wrinkle_width_range[1] + 1))
        curve = _draw_curve(s, rng, face, width)
        if curve.any():
            curves.append(curve)
    truth = np.zeros((s, s), np.uint8)
    for c in curves:
        truth |= c

    # darken along softened strokes so the dip is steep at the wrinkle core
    soft = cv2.GaussianBlur(truth.astype(np.float64), (3, 3), 0.8)
    soft = soft / soft.max() if soft.max() > 0 else soft
    img = img * (1.0 - spec.wrinkle_darkness * soft[:, :, None])

    img = img + rng.normal(0.0, spec.skin_noise, (s, s, 1))
    img = np.clip(img, 0.0, 1.0)

    annotations = None
    if truth.any():
        lo, hi = spec.jaccard_band
        best, best_dist = None, np.inf
        for _ in range(_JITTER_RETRIES):
            cand = [_jitter_annotation(curves, spec, rng, s) for _ in ANNOTATORS]
            masks = [BinaryMask(c) for c in cand]
            js = [jaccard(masks[0], masks[1]), jaccard(masks[1], masks[2]),
                  jaccard(masks[0], masks[2])]
            mean_j = float(np.mean(js))
            if lo <= mean_j <= hi:
                annotations = cand
                break
            dist = min(abs(mean_j - lo), abs(mean_j - hi))
            if dist < best_dist:
                best, best_dist = cand, dist
        if annotations is None:
            annotations = best
    else:
        annotations = [np.zeros((s, s), np.uint8) for _ in ANNOTATORS]

    return img, face, truth, annotations


def generate(spec: SynthSpec, out_dir) -> dict:
    """Write a corpus in the dataset layout; returns the manifest."""
    out_dir = Path(out_dir)
    for sub in ("images", "face_masks", "truth"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    for a in ANNOTATORS:
        (out_dir / "annotations" / a).mkdir(parents=True, exist_ok=True)

    ids = []
    for index in range(spec.count):
        image_id = f"{index:05d}"
        img, face, truth, annotations = _make_sample(spec, index)
        save_png(Image(img), out_dir / "images" / f"{image_id}.png")
        save_mask(BinaryMask(face), out_dir / "face_masks" / f"{image_id}.png")
        save_mask(BinaryMask(truth), out_dir / "truth" / f"{image_id}.png")
        for a, mask in zip(ANNOTATORS, annotations):
            save_mask(BinaryMask(mask), out_dir / "annotations" / a / f"{image_id}.png")
        ids.append(image_id)

    manifest = {"count": spec.count, "size": spec.size, "ids": ids,
                "spec": spec.to_dict()}
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def validate(corpus_dir) -> dict:
    """Check layout completeness and mask sanity; violations become report rows.

    Checks: every image has a face mask, truth mask, and all annotator masks;
    masks load as strict binary PNGs; truth pixels stay inside the face
    region; all rasters of a sample agree on dimensions.
    """
    root = Path(corpus_dir)
    violations = []
    images = sorted((root / "images").glob("*.png")) if (root / "images").is_dir() else []
    if not images:
        violations.append({"id": None, "kind": "layout", "detail": "no images found"})
    for img_path in images:
        image_id = img_path.stem
        try:
            img = load_png(img_path)
        except WrinkleforgeError as e:
            violations.append({"id": image_id, "kind": "corrupt_image", "detail": str(e)})
            continue
        masks = {}
        mask_paths = {"face": root / "face_masks" / f"{image_id}.png",
                      "truth": root / "truth" / f"{image_id}.png"}
        for a in ANNOTATORS:
            mask_paths[f"annotation_{a}"] = root / "annotations" / a / f"{image_id}.png"
        for role, path in mask_paths.items():
            if not path.is_file():
                violations.append({"id": image_id, "kind": "missing",
                                   "detail": f"{role}: {path.name}"})
                continue
            try:
                masks[role] = load_mask(path)
            except WrinkleforgeError as e:
                violations.append({"id": image_id, "kind": "bad_mask",
                                   "detail": f"{role}: {e}"})
        for role, mask in masks.items():
            if (mask.height, mask.width) != (img.height, img.width):
                violations.append({"id": image_id, "kind": "dimensions",
                                   "detail": f"{role} is {mask.height}x{mask.width}, "
                                             f"image is {img.height}x{img.width}"})
        if "face" in masks and "truth" in masks \
                and (masks["truth"].data & ~masks["face"].data.astype(bool)).any():
            violations.append({"id": image_id, "kind": "truth_outside_face",
                               "detail": "truth mask has pixels outside the face region"})
    return {"checked": len(images), "violations": violations}
