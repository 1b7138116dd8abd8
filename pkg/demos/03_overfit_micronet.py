"""Micro U-Net learning-capability check.

Overfits a width-8 depth-2 network to a single 32x32 synthetic sample with
the soft Dice loss and AdamW under a cosine schedule, then visualizes the
prediction against the ground truth. This is the smallest end-to-end proof
that the hand-rolled backward pass actually trains.
"""

from pathlib import Path

import numpy as np

from wrinkleforge import Image, save_png
from wrinkleforge.losses import soft_dice
from wrinkleforge.micronet import (
    UNetSpec,
    build,
    softmax_channels,
    softmax_channels_backward,
)
from wrinkleforge.optim import AdamWState, SgdrSchedule, adamw_step, sgdr_lr
from wrinkleforge.synthcorpus import SynthSpec, _make_sample

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)


def main():
    img, face, truth, _ = _make_sample(SynthSpec(count=1, size=32, seed=5), 0)
    x = (img.transpose(2, 0, 1) * face[None])[None]
    y = truth.astype(np.int64)[None]
    print(f"sample has {truth.sum()} wrinkle pixels of {truth.size}")

    model = build(UNetSpec(in_channels=3, out_channels=2, base_width=8,
                           depth=2, seed=1), dtype=np.float64)
    state = AdamWState()
    params = model.param_values()
    schedule = SgdrSchedule(initial_period=500, max_lr=1e-3)

    for step in range(500):
        lr = sgdr_lr(schedule, step)
        logits = model.forward(x)
        probs = softmax_channels(logits)
        n, c, h, w = probs.shape
        flat = probs.transpose(0, 2, 3, 1).reshape(-1, c)
        onehot = np.zeros((y.size, c))
        onehot[np.arange(y.size), y.ravel()] = 1.0
        loss = soft_dice(flat, onehot)
        dprobs = loss.grad.reshape(n, h, w, c).transpose(0, 3, 1, 2)
        model.zero_grads()
        model.backward(softmax_channels_backward(probs, dprobs))
        adamw_step(params, model.param_grads(), state, lr)
        if step % 25 == 0 or loss.value < 0.05:
            print(f"step {step:3d}: lr {lr:.5f}  soft dice {loss.value:.4f}")
        if loss.value < 0.05:
            break

    logits = model.forward(x)
    pred = (logits[0, 1] > logits[0, 0]).astype(float)
    inter = float((pred.astype(bool) & truth.astype(bool)).sum())
    union = float((pred.astype(bool) | truth.astype(bool)).sum())
    print(f"final JSI against the sample truth: {inter / union:.3f}")

    panel = np.concatenate([
        img,
        np.repeat(truth[:, :, None], 3, axis=2).astype(float),
        np.repeat(pred[:, :, None], 3, axis=2),
    ], axis=1)
    save_png(Image(np.clip(panel, 0, 1)), OUT / "overfit_panel.png")
    print(f"panel (image | truth | prediction) at {OUT / 'overfit_panel.png'}")


if __name__ == "__main__":
    main()
