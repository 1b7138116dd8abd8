"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Criteria 7-9 share a session fixture that generates the 600-image corpus and
runs the four-row experiment for three seeds, then reruns all three for the
byte-determinism check. Expect roughly half an hour on a single CPU core.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import (
    confusion_enum,
    dense_conv2d_reflect101,
    fd_gradient,
    jaccard_enum,
    majority_enum,
    metrics_enum,
    relative_error,
)
from wrinkleforge import fusion, metrics
from wrinkleforge.image_io import BinaryMask, Image
from wrinkleforge.losses import mse, soft_dice, softmax_rows
from wrinkleforge.micronet import (
    UNetSpec,
    build,
    checkpoint_from_model,
    expand_input_channels,
    model_from_checkpoint,
    softmax_channels,
    softmax_channels_backward,
)
from wrinkleforge.optim import AdamWState, SgdrSchedule, adamw_step, sgdr_lr
from wrinkleforge.presets import desk_experiment_configs
from wrinkleforge.synthcorpus import SynthSpec, _make_sample, generate
from wrinkleforge.texture import batch_weak_labels, gaussian_blur, make_gaussian, texture_map
from wrinkleforge.trainer import EXPERIMENT_ROWS, run_experiment

SEEDS = (0, 1, 2)


def report_line(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {num:2d}] {status}: {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_01_texture_filter_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    kernel = make_gaussian(21, 5.0)
    worst = 0.0
    for _ in range(20):
        plane = rng.random((32, 32))
        sep = gaussian_blur(Image(plane[:, :, None]), kernel).data[:, :, 0]
        dense = dense_conv2d_reflect101(plane, kernel.weights)
        worst = max(worst, float(np.abs(sep - dense).max()))
    black = texture_map(Image(np.zeros((16, 16, 1))), kernel).data
    white = texture_map(Image(np.ones((16, 16, 1))), kernel).data
    black_err = float(np.abs(black - 255.0).max())
    white_err = float(np.abs(white - (1.0 - 255.0 / 256.0) * 255.0).max())
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-10 and black_err < 1e-9 and white_err < 1e-9 and elapsed < 5.0
    report_line(1, ok, f"blur max err {worst:.2e}, black {black_err:.2e}, "
                       f"white {white_err:.2e}, {elapsed:.2f}s")


def test_criterion_02_metric_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(102)
    worst_ratio = 0.0
    for _ in range(1000):
        p = (rng.random((8, 8)) > rng.random()).astype(np.uint8)
        t = (rng.random((8, 8)) > rng.random()).astype(np.uint8)
        r = metrics.evaluate(BinaryMask(p), BinaryMask(t))
        e = metrics_enum(p, t)
        assert (r.counts.tp, r.counts.fp, r.counts.fn, r.counts.tn) == \
            (e["tp"], e["fp"], e["fn"], e["tn"])
        for field in ("jsi", "precision", "recall", "f1", "accuracy"):
            worst_ratio = max(worst_ratio, abs(getattr(r, field) - e[field]))
        j = fusion.jaccard(BinaryMask(p), BinaryMask(t))
        worst_ratio = max(worst_ratio, abs(j - jaccard_enum(p, t)))
    elapsed = time.perf_counter() - t0
    ok = worst_ratio <= 1e-12 and elapsed < 5.0
    report_line(2, ok, f"1000 pairs, counts exact, worst ratio err "
                       f"{worst_ratio:.2e}, {elapsed:.2f}s")


def test_criterion_03_gradient_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(103)

    pred, target = rng.random(6), rng.random(6)
    g = mse(pred, target).grad
    fd = fd_gradient(lambda: mse(pred, target).value, pred, h=1e-4)
    mse_worst = max(relative_error(a, f) for a, f in zip(g, fd))

    logits = rng.standard_normal((6, 3))
    probs = softmax_rows(logits)
    onehot = np.zeros((6, 3))
    onehot[np.arange(6), rng.integers(0, 3, 6)] = 1.0
    g = soft_dice(probs, onehot).grad
    # step below the loss's 1e-5 row-normalization gate
    fd = fd_gradient(lambda: soft_dice(probs, onehot).value, probs, h=1e-6)
    dice_worst = float(np.max(np.abs(g - fd) /
                              np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-8)))

    spec = UNetSpec(in_channels=2, out_channels=1, base_width=2, depth=1, seed=7)
    m = build(spec, dtype=np.float64)
    x = rng.random((1, 2, 8, 8))
    y = rng.random((1, 1, 8, 8))
    m.forward(x)
    loss = mse(m.forward(x), y)
    m.zero_grads()
    m.backward(loss.grad)
    h = 1e-5
    net_worst, checked = 0.0, 0
    for name, p in m.parameters().items():
        flat, gflat = p.value.ravel(), p.grad.ravel()
        for i in rng.choice(flat.size, size=min(16, flat.size), replace=False):
            orig = flat[i]
            flat[i] = orig + h
            lp = mse(m.forward(x), y).value
            flat[i] = orig - h
            lm = mse(m.forward(x), y).value
            flat[i] = orig
            net_worst = max(net_worst, relative_error(gflat[i], (lp - lm) / (2 * h)))
            checked += 1
    elapsed = time.perf_counter() - t0
    ok = (mse_worst < 1e-4 and dice_worst < 1e-4 and net_worst < 1e-3
          and checked >= 100 and elapsed < 60.0)
    report_line(3, ok, f"mse rel {mse_worst:.2e}, dice rel {dice_worst:.2e}, "
                       f"net rel {net_worst:.2e} over {checked} params, {elapsed:.1f}s")


def test_criterion_04_fusion_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    for _ in range(1000):
        masks = [(rng.random((8, 8)) > rng.random()).astype(np.uint8) for _ in range(3)]
        aset = fusion.AnnotationSet(("a", "b", "c"), tuple(BinaryMask(m) for m in masks))
        fused = fusion.majority_vote(aset, 2)
        assert np.array_equal(fused.data, majority_enum(masks, 2))
        assert np.array_equal(fusion.majority_vote(aset, 1).data,
                              masks[0] | masks[1] | masks[2])
        assert np.array_equal(fusion.majority_vote(aset, 3).data,
                              masks[0] & masks[1] & masks[2])
    elapsed = time.perf_counter() - t0
    ok = elapsed < 5.0
    report_line(4, ok, f"1000 sets exact (vote/OR/AND), {elapsed:.2f}s")


def test_criterion_05_transfer_preservation():
    t0 = time.perf_counter()
    spec = UNetSpec(in_channels=3, out_channels=1, base_width=8, depth=2, seed=105)
    m0 = build(spec, dtype=np.float64)
    ckpt = checkpoint_from_model(m0, None, 0, "acc5")
    grown = expand_input_channels(ckpt, 4)
    m4 = model_from_checkpoint(grown, dtype=np.float64)
    m3 = model_from_checkpoint(ckpt, dtype=np.float64)
    rng = np.random.default_rng(105)
    worst = 0.0
    for _ in range(10):
        x3 = rng.random((1, 3, 16, 16))
        extra = rng.random((1, 1, 16, 16))
        out3 = m3.forward(x3)
        out4 = m4.forward(np.concatenate([x3, extra], axis=1))
        worst = max(worst, float(np.abs(out4 - out3).max()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-7 and elapsed < 10.0
    report_line(5, ok, f"10 inputs, max deviation {worst:.2e}, {elapsed:.2f}s")


def test_criterion_06_overfit_smoke():
    t0 = time.perf_counter()
    sspec = SynthSpec(count=1, size=32, seed=5)
    img, face, truth, _ = _make_sample(sspec, 0)
    x = (img.transpose(2, 0, 1) * face[None])[None]
    y = truth.astype(np.int64)[None]
    spec = UNetSpec(in_channels=3, out_channels=2, base_width=8, depth=2, seed=1)
    m = build(spec, dtype=np.float64)
    state = AdamWState()
    params = m.param_values()
    sched = SgdrSchedule(initial_period=500, max_lr=1e-3)
    final = np.inf
    for step in range(500):
        lr = sgdr_lr(sched, step)
        logits = m.forward(x)
        probs = softmax_channels(logits)
        n, c, h, w = probs.shape
        flat_p = probs.transpose(0, 2, 3, 1).reshape(-1, c)
        onehot = np.zeros((y.size, c))
        onehot[np.arange(y.size), y.ravel()] = 1.0
        loss = soft_dice(flat_p, onehot)
        dprobs = loss.grad.reshape(n, h, w, c).transpose(0, 3, 1, 2)
        m.zero_grads()
        m.backward(softmax_channels_backward(probs, dprobs))
        adamw_step(params, m.param_grads(), state, lr)
        final = loss.value
        if final < 0.05:
            break
    elapsed = time.perf_counter() - t0
    ok = final < 0.05 and elapsed < 120.0
    report_line(6, ok, f"soft dice {final:.4f} after {step + 1} steps, {elapsed:.1f}s")


# ---- criteria 7-9: the three-seed experiment ----

@pytest.fixture(scope="module")
def experiment_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("acceptance_exp")
    corpus = base / "corpus"
    generate(SynthSpec(count=600, size=64, seed=1234), corpus)
    t0 = time.perf_counter()
    runs, reruns = {}, {}
    for seed in SEEDS:
        pre, ft = desk_experiment_configs(corpus, seed=seed, label_fraction=0.05)
        runs[seed] = run_experiment(pre, ft, base / f"run_seed{seed}")
    first_elapsed = time.perf_counter() - t0
    for seed in SEEDS:
        pre, ft = desk_experiment_configs(corpus, seed=seed, label_fraction=0.05)
        reruns[seed] = run_experiment(pre, ft, base / f"rerun_seed{seed}")
    return base, runs, reruns, first_elapsed


def test_criterion_07_directional_pretraining_gain(experiment_runs):
    _, runs, _, elapsed = experiment_runs
    ours = float(np.median([runs[s]["rows"]["pretrain_rgbtex"]["jsi"] for s in SEEDS]))
    baseline = float(np.median([runs[s]["rows"]["no_pretrain_rgb"]["jsi"] for s in SEEDS]))
    gap = ours - baseline
    ok = gap >= 0.02 and elapsed < 1800.0
    report_line(7, ok, f"median JSI pretrain+texture {ours:.4f} vs no-pretrain RGB "
                       f"{baseline:.4f}, gap {gap:.4f} (>= 0.02), 3 seeds in "
                       f"{elapsed / 60:.1f} min")


def test_criterion_08_ablation_ordering(experiment_runs):
    _, runs, _, _ = experiment_runs
    wins = 0
    per_seed = []
    for s in SEEDS:
        rows = {name: runs[s]["rows"][name]["jsi"] for name in EXPERIMENT_ROWS}
        top = max(rows, key=rows.get)
        per_seed.append(f"seed {s}: top {top} ({rows[top]:.4f})")
        if top == "pretrain_rgbtex":
            wins += 1
    ok = wins >= 2
    report_line(8, ok, f"pretrain_rgbtex top row in {wins}/3 seeds; " + "; ".join(per_seed))


def test_criterion_09_rerun_determinism(experiment_runs):
    base, runs, reruns, _ = experiment_runs
    mismatches = []
    for seed in SEEDS:
        if runs[seed] != reruns[seed]:
            mismatches.append(f"report dict seed {seed}")
        a, b = base / f"run_seed{seed}", base / f"rerun_seed{seed}"
        rels = ["report.json", "pretrain/journal.jsonl", "pretrain/checkpoint.wrnk"]
        rels += [f"rows/{name}/{f}" for name in EXPERIMENT_ROWS
                 for f in ("journal.jsonl", "checkpoint.wrnk")]
        for rel in rels:
            if (a / rel).read_bytes() != (b / rel).read_bytes():
                mismatches.append(f"{rel} seed {seed}")
    ok = not mismatches
    report_line(9, ok, "journals, checkpoints, reports byte-identical across reruns"
                if ok else f"mismatches: {mismatches}")


def test_criterion_10_batch_pipeline(tmp_path):
    corpus = tmp_path / "corpus256"
    generate(SynthSpec(count=200, size=256, wrinkle_count_range=(4, 9),
                       wrinkle_width_range=(2, 5), seed=77), corpus)
    kernel = make_gaussian(21, 5.0)
    r1 = batch_weak_labels(corpus / "images", corpus / "face_masks",
                           tmp_path / "out_j1", kernel, jobs=1)
    t0 = time.perf_counter()
    r8 = batch_weak_labels(corpus / "images", corpus / "face_masks",
                           tmp_path / "out_j8", kernel, jobs=8)
    elapsed = time.perf_counter() - t0
    assert r1["processed"] == r8["processed"] == 200
    identical = all(
        (tmp_path / "out_j1" / f"{i:05d}.png").read_bytes()
        == (tmp_path / "out_j8" / f"{i:05d}.png").read_bytes()
        for i in range(200))
    ok = identical and elapsed < 60.0
    report_line(10, ok, f"200 images byte-identical at --jobs 1 vs 8, "
                        f"jobs-8 pass in {elapsed:.1f}s")
