"""Independent reference implementations used to verify the library.

Everything here deliberately avoids the code paths under test: convolution is
dense 2-D, metrics walk pixels one by one, the AdamW recurrence is simulated
on scalars. Slow is fine; independent is the point.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def dense_conv2d_reflect101(plane: np.ndarray, kernel2d: np.ndarray) -> np.ndarray:
    """Direct dense 2-D convolution with reflect-101 (edge not repeated) borders."""
    k = kernel2d.shape[0]
    half = (k - 1) // 2
    padded = np.pad(plane, half, mode="reflect")
    windows = sliding_window_view(padded, (k, k))
    return np.einsum("hwij,ij->hw", windows, kernel2d)


def confusion_enum(pred: np.ndarray, truth: np.ndarray):
    """Per-pixel python enumeration of TP/FP/FN/TN."""
    tp = fp = fn = tn = 0
    for p, t in zip(pred.ravel().tolist(), truth.ravel().tolist()):
        if p == 1 and t == 1:
            tp += 1
        elif p == 1 and t == 0:
            fp += 1
        elif p == 0 and t == 1:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def metrics_enum(pred: np.ndarray, truth: np.ndarray) -> dict:
    """Eqs. for JSI/P/R/F1/Acc restated from the counts, with the shared
    zero-denominator conventions."""
    tp, fp, fn, tn = confusion_enum(pred, truth)
    total = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if tp + fp + fn == 0:
        jsi, f1 = 1.0, 1.0
    else:
        jsi = tp / (tp + fp + fn)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"tp": tp, "fp": fp, "fn": fn, "tn": tn, "jsi": jsi,
            "precision": precision, "recall": recall, "f1": f1,
            "accuracy": (tp + tn) / total}


def jaccard_enum(a: np.ndarray, b: np.ndarray) -> float:
    inter = union = 0
    for x, y in zip(a.ravel().tolist(), b.ravel().tolist()):
        if x == 1 and y == 1:
            inter += 1
        if x == 1 or y == 1:
            union += 1
    return 1.0 if union == 0 else inter / union


def majority_enum(masks: list[np.ndarray], threshold: int) -> np.ndarray:
    """Brute-force per-pixel vote counting."""
    out = np.zeros_like(masks[0])
    h, w = masks[0].shape
    for y in range(h):
        for x in range(w):
            votes = sum(int(m[y, x]) for m in masks)
            out[y, x] = 1 if votes >= threshold else 0
    return out


def fd_gradient(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function at x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def adamw_scalar_sim(p0: float, grads: list[float], lr: float, beta1=0.9,
                     beta2=0.999, eps=1e-8, weight_decay=0.05) -> float:
    """Hand simulation of the AdamW recurrence on one scalar parameter."""
    p, m, v = p0, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        p = p - lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * p)
    return p


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)
