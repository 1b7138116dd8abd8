"""Multi-annotator label fusion and inter-rater agreement."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DegenerateInputError, InvalidThresholdError, ShapeMismatchError
from .image_io import BinaryMask


@dataclass(frozen=True)
class AnnotationSet:
    """Wrinkle masks from two or more annotators over the same raster."""

    annotator_ids: tuple[str, ...]
    masks: tuple[BinaryMask, ...]

    def __post_init__(self):
        if len(self.annotator_ids) != len(self.masks):
            raise ShapeMismatchError("annotator_ids and masks must align")
        if len(self.masks) < 2:
            raise ShapeMismatchError("an AnnotationSet needs at least 2 annotators")
        shapes = {(m.height, m.width) for m in self.masks}
        if len(shapes) != 1:
            raise ShapeMismatchError(f"masks disagree on dimensions: {sorted(shapes)}")
        if len(set(self.annotator_ids)) != len(self.annotator_ids):
            raise ShapeMismatchError("annotator ids must be unique")


@dataclass(frozen=True)
class PairAgreement:
    a: str
    b: str
    jaccard: float
    pearson: float


@dataclass(frozen=True)
class AgreementReport:
    pairs: tuple[PairAgreement, ...]
    average_jaccard: float
    average_pearson: float

    def to_dict(self) -> dict:
        return {
            "pairs": [
                {"a": p.a, "b": p.b, "jaccard": p.jaccard, "pearson": p.pearson}
                for p in self.pairs
            ],
            "average_jaccard": self.average_jaccard,
            "average_pearson": self.average_pearson,
        }


def majority_vote(annotations: AnnotationSet, threshold: int = 2) -> BinaryMask:
    """Keep pixels labeled by at least `threshold` annotators.

    threshold=1 degenerates to pixelwise OR, threshold=n to AND. The default
    2 is the 2-of-3 rule, which suppresses single-annotator idiosyncrasies.
    """
    n = len(annotations.masks)
    if not 1 <= threshold <= n:
        raise InvalidThresholdError(f"threshold must be in [1, {n}], got {threshold}")
    votes = np.zeros(annotations.masks[0].data.shape, dtype=np.int64)
    for m in annotations.masks:
        votes += m.data
    return BinaryMask((votes >= threshold).astype(np.uint8))


def jaccard(a: BinaryMask, b: BinaryMask) -> float:
    """|a AND b| / |a OR b|. Two empty masks agree perfectly: 1.0."""
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeMismatchError(f"{a.height}x{a.width} vs {b.height}x{b.width}")
    inter = int(np.logical_and(a.data, b.data).sum())
    union = int(np.logical_or(a.data, b.data).sum())
    if union == 0:
        return 1.0
    return inter / union


def pearson(a: BinaryMask, b: BinaryMask) -> float:
    """Sample Pearson correlation of the flattened {0,1} vectors.

    Constant masks make the denominator zero; that is an error rather than a
    silent 0 so that averaged reports cannot be quietly corrupted.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeMismatchError(f"{a.height}x{a.width} vs {b.height}x{b.width}")
    x = a.data.ravel().astype(np.float64)
    y = b.data.ravel().astype(np.float64)
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.sqrt((dx * dx).sum() * (dy * dy).sum())
    if denom == 0.0:
        raise DegenerateInputError("constant mask: Pearson correlation undefined")
    return float((dx * dy).sum() / denom)


def agreement(annotations: AnnotationSet) -> AgreementReport:
    """Pairwise Jaccard and Pearson for every unordered annotator pair.

    Pairs are ordered lexicographically by annotator id so reports are
    deterministic. A degenerate (constant) mask raises with the offending
    pair named.
    """
    by_id = dict(zip(annotations.annotator_ids, annotations.masks))
    pairs = []
    for ia, ib in combinations(sorted(by_id), 2):
        try:
            r = pearson(by_id[ia], by_id[ib])
        except DegenerateInputError as e:
            raise DegenerateInputError(f"pair ({ia}, {ib}): {e}") from e
        pairs.append(PairAgreement(ia, ib, jaccard(by_id[ia], by_id[ib]), r))
    return AgreementReport(
        pairs=tuple(pairs),
        average_jaccard=float(np.mean([p.jaccard for p in pairs])),
        average_pearson=float(np.mean([p.pearson for p in pairs])),
    )
