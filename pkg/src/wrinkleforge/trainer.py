"""Two-stage training orchestration.

Stage 1 (pretrain) regresses RGB images onto their masked texture maps with
MSE. Stage 2 (finetune) starts from the pretrained weights, grows the first
convolution for a texture input channel, swaps the 1-channel regression head
for a 2-channel classification head, and trains with soft Dice on fused
wrinkle masks. `run_experiment` assembles the four-row comparison table
(pretraining on/off, texture input channel on/off).

Every run is a deterministic function of (config, dataset bytes): sample
order, augmentation draws, and parameter init all derive from the config
seed. Journals hold only deterministic fields; wall-clock timings go to a
sidecar file so reruns stay byte-identical.
"""

from __future__ import annotations

import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import metrics
from .config import INPUT_MODE_RGB, INPUT_MODE_RGBTEX, TrainConfig
from .data import (
    augment_sample,
    list_corpus_ids,
    load_arrays,
    make_split,
    sample_rng,
    subsample_ids,
)
from .errors import (
    DatasetMissingError,
    HashMismatchError,
    IncompatibleCheckpointError,
    InvalidSpecError,
    ShapeMismatchError,
)
from .image_io import BinaryMask, Image, apply_mask
from .losses import mse, soft_dice
from .micronet import (
    Checkpoint,
    Model,
    build,
    checkpoint_from_model,
    expand_input_channels,
    model_from_checkpoint,
    replace_head,
    save_checkpoint,
    softmax_channels,
    softmax_channels_backward,
)
from .optim import AdamWState, adamw_step, sgdr_lr
from .texture import DEFAULT_KERNEL_SIZE, DEFAULT_SIGMA, TextureMap, batch_weak_labels, make_gaussian

_ORDER_STREAM = 0x0BDE5

EXPERIMENT_ROWS = ("no_pretrain_rgb", "no_pretrain_rgbtex",
                   "pretrain_rgb", "pretrain_rgbtex")


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(seed, epoch, _ORDER_STREAM)))
    return rng.permutation(n)


def _optimizer_snapshot(state: AdamWState) -> dict[str, np.ndarray]:
    snap = {"step": np.array([state.step], dtype=np.float64)}
    for k, v in state.m.items():
        snap[f"m/{k}"] = v.copy()
    for k, v in state.v.items():
        snap[f"v/{k}"] = v.copy()
    return snap


class _Journal:
    """Per-epoch JSONL log; deterministic fields only. Timings live beside it."""

    def __init__(self, out_dir: Path):
        out_dir.mkdir(parents=True, exist_ok=True)
        self.journal_path = out_dir / "journal.jsonl"
        self.timing_path = out_dir / "timings.jsonl"
        self.journal_path.write_text("")
        self.timing_path.write_text("")

    def log(self, epoch: int, lr: float, train_loss: float, val_metric: float,
            wall_ms: float) -> None:
        entry = {"epoch": epoch, "lr": lr, "train_loss": train_loss,
                 "val_metric": val_metric}
        with self.journal_path.open("a") as f:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
        with self.timing_path.open("a") as f:
            f.write(json.dumps({"epoch": epoch, "wall_ms": wall_ms}) + "\n")


def _pretrain_batch(arrays, indices, config: TrainConfig, epoch: int):
    xs, ys = [], []
    for i in indices:
        ch, tgt = augment_sample(arrays["image"][i], arrays["weak"][i], "continuous",
                                 config.augment, sample_rng(config.seed, epoch, int(i)))
        xs.append(ch)
        ys.append(tgt)
    return np.stack(xs), np.stack(ys)[:, None]


def _finetune_channels(arrays, i, with_texture: bool):
    face = arrays["face"][i]
    ch = arrays["image"][i] * face[None]
    if with_texture:
        ch = np.concatenate([ch, arrays["weak"][i][None]], axis=0)
    return ch


def _finetune_batch(arrays, indices, config: TrainConfig, epoch: int):
    with_texture = config.input_mode == INPUT_MODE_RGBTEX
    xs, ys = [], []
    for i in indices:
        ch = _finetune_channels(arrays, i, with_texture)
        ch, tgt = augment_sample(ch, arrays["truth"][i], "mask",
                                 config.augment, sample_rng(config.seed, epoch, int(i)))
        xs.append(ch)
        ys.append(tgt)
    return np.stack(xs), np.stack(ys)


_VAL_BATCH = 16


def _val_mse(model: Model, val_x, val_y) -> float:
    sq_sum, count = 0.0, 0
    for start in range(0, len(val_x), _VAL_BATCH):
        out = model.forward(val_x[start:start + _VAL_BATCH])
        diff = out.astype(np.float64) - val_y[start:start + _VAL_BATCH]
        sq_sum += float(np.sum(diff * diff))
        count += diff.size
    return sq_sum / count


def _val_jsi(model: Model, val_x, val_truth) -> float:
    tp = fp = fn = 0
    for start in range(0, len(val_x), _VAL_BATCH):
        logits = model.forward(val_x[start:start + _VAL_BATCH])
        pred = logits[:, 1] > logits[:, 0]   # ties go to background
        truth = val_truth[start:start + _VAL_BATCH] > 0.5
        tp += int(np.sum(pred & truth))
        fp += int(np.sum(pred & ~truth))
        fn += int(np.sum(~pred & truth))
    denom = tp + fp + fn
    return 1.0 if denom == 0 else tp / denom


def _train(config: TrainConfig, model: Model, arrays, train_idx, val_idx,
           out_dir: Path, *, stage_batch, stage_loss, stage_val, better):
    """Shared epoch loop: train, validate, track the best checkpoint.

    The epoch-0 (untrained) validation score is a selection candidate too,
    so the returned checkpoint is never worse than the initial weights.
    """
    journal = _Journal(out_dir)
    state = AdamWState(beta1=config.optimizer.beta1, beta2=config.optimizer.beta2,
                       eps=config.optimizer.eps, weight_decay=config.optimizer.weight_decay)
    params = model.param_values()

    best_metric = stage_val(model)
    best_epoch = 0
    best_params = {k: v.copy() for k, v in params.items()}
    best_opt = _optimizer_snapshot(state)

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        lr = sgdr_lr(config.schedule, epoch - 1)
        order = _epoch_order(config.seed, epoch, len(train_idx))
        loss_sum, loss_n = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch_idx = [train_idx[j] for j in order[start:start + config.batch_size]]
            x, y = stage_batch(arrays, batch_idx, epoch)
            model.zero_grads()
            loss = stage_loss(model, x, y)
            adamw_step(params, model.param_grads(), state, lr)
            loss_sum += loss * len(batch_idx)
            loss_n += len(batch_idx)
        val_metric = stage_val(model)
        if better(val_metric, best_metric):
            best_metric = val_metric
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
            best_opt = _optimizer_snapshot(state)
        wall_ms = (time.perf_counter() - t0) * 1000.0
        journal.log(epoch, lr, loss_sum / loss_n, val_metric, wall_ms)

    model.load_values(best_params)
    ckpt = checkpoint_from_model(model, best_opt, best_epoch, config.config_hash())
    save_checkpoint(ckpt, out_dir / "checkpoint.wrnk")
    return ckpt


def pretrain(config: TrainConfig, out_dir) -> Checkpoint:
    """Weakly supervised stage: RGB in, masked texture map (0..1) out, MSE loss.

    Saves the best-validation-MSE checkpoint plus a per-epoch journal under
    out_dir and returns the checkpoint.
    """
    if config.stage != "pretrain":
        raise InvalidSpecError("config.stage must be 'pretrain'")
    if config.spec.in_channels != 3 or config.spec.out_channels != 1:
        raise InvalidSpecError("pretraining expects a 3-in 1-out spec")
    dtype = np.float32 if config.dtype == "float32" else np.float64
    ids = list_corpus_ids(config.dataset_root)
    split = make_split(ids, config)
    arrays = load_arrays(config.dataset_root, split.train + split.val, need_weak=True)
    n_train = len(split.train)
    train_idx = list(range(n_train))
    val_idx = list(range(n_train, n_train + len(split.val)))
    val_x = arrays["image"][val_idx].astype(dtype)
    val_y = arrays["weak"][val_idx][:, None]

    model = build(config.spec, dtype=dtype)
    # start the sigmoid regression head at the mean target: texture values sit
    # near 0, and a raw random head first saturates toward the mean with dead
    # gradients before learning any structure
    mean_target = float(np.clip(arrays["weak"][train_idx].mean(), 1e-4, 1.0 - 1e-4))
    head_w = model.parameters()["head/w"]
    head_b = model.parameters()["head/b"]
    head_w.value = head_w.value * 0.1
    head_b.value = np.array([np.log(mean_target / (1.0 - mean_target))],
                            dtype=head_b.value.dtype)

    def stage_loss(model, x, y):
        out = model.forward(x)
        loss = mse(out, y)
        model.backward(loss.grad)
        return loss.value

    return _train(
        config, model, arrays, train_idx, val_idx, Path(out_dir),
        stage_batch=lambda a, idx, ep: _pretrain_batch(a, idx, config, ep),
        stage_loss=stage_loss,
        stage_val=lambda m: _val_mse(m, val_x, val_y),
        better=lambda new, best: new < best,
    )


def _init_finetune_model(config: TrainConfig, init: Checkpoint | None,
                         need_in: int, dtype, force: bool) -> Model:
    if init is None:
        return build(config.spec, dtype=dtype)
    if config.init_hash is not None and init.config_hash != config.init_hash and not force:
        raise HashMismatchError(
            f"init checkpoint hash {init.config_hash} != pinned {config.init_hash}")
    if (init.spec.base_width != config.spec.base_width
            or init.spec.depth != config.spec.depth):
        raise IncompatibleCheckpointError(
            "init checkpoint architecture does not match the finetune spec")
    if init.spec.in_channels > need_in:
        raise IncompatibleCheckpointError(
            f"cannot shrink {init.spec.in_channels} input channels to {need_in}")
    ckpt = init
    if ckpt.spec.in_channels < need_in:
        ckpt = expand_input_channels(ckpt, need_in)
    ckpt = replace_head(ckpt, config.spec.out_channels, config.seed)
    return model_from_checkpoint(ckpt, dtype=dtype)


def finetune(config: TrainConfig, init: Checkpoint | None, out_dir,
             force: bool = False) -> Checkpoint:
    """Supervised stage: masked RGB (optionally + texture) in, 2-class out.

    With `init`, the pretrained weights are transferred (channel expansion,
    head swap); without it, a fresh network trains on the labeled data alone,
    which is the no-pretraining baseline. label_fraction < 1 subsamples the
    training ids deterministically; validation selection uses micro-JSI.
    """
    if config.stage != "finetune":
        raise InvalidSpecError("config.stage must be 'finetune'")
    need_in = 4 if config.input_mode == INPUT_MODE_RGBTEX else 3
    if config.spec.in_channels != need_in:
        raise InvalidSpecError(
            f"input_mode {config.input_mode!r} needs {need_in} input channels, "
            f"spec has {config.spec.in_channels}")
    if config.spec.out_channels != 2:
        raise InvalidSpecError("finetuning expects a 2-channel output spec")
    dtype = np.float32 if config.dtype == "float32" else np.float64
    ids = list_corpus_ids(config.dataset_root)
    split = make_split(ids, config)
    train_ids = subsample_ids(list(split.train), config.label_fraction, config.seed)
    need_weak = config.input_mode == INPUT_MODE_RGBTEX
    ordered_ids = train_ids + list(split.val)
    arrays = load_arrays(config.dataset_root, ordered_ids,
                         need_weak=need_weak, need_truth=True)
    if not need_weak:
        arrays["weak"] = None
    train_idx = list(range(len(train_ids)))
    val_idx = list(range(len(train_ids), len(ordered_ids)))
    val_x = np.stack([_finetune_channels(arrays, i, need_weak) for i in val_idx]).astype(dtype)
    val_truth = arrays["truth"][val_idx]

    model = _init_finetune_model(config, init, need_in, dtype, force)
    # start the classification head at the wrinkle prior of the labeled split:
    # a large random head saturates the softmax toward the majority class and
    # the dice gradient vanishes before anything is learned
    prior = float(np.clip(arrays["truth"][train_idx].mean(), 1e-4, 0.5))
    head_w = model.parameters()["head/w"]
    head_b = model.parameters()["head/b"]
    head_w.value = head_w.value * 0.1
    head_b.value = np.array([0.0, np.log(prior / (1.0 - prior))], dtype=head_b.value.dtype)

    def stage_loss(model, x, y):
        logits = model.forward(x)
        probs = softmax_channels(logits)
        n, c, h, w = probs.shape
        flat_p = probs.transpose(0, 2, 3, 1).reshape(-1, c)
        onehot = np.zeros((y.size, c))
        onehot[np.arange(y.size), y.ravel().astype(int)] = 1.0
        loss = soft_dice(flat_p, onehot)
        dprobs = loss.grad.reshape(n, h, w, c).transpose(0, 3, 1, 2)
        model.backward(softmax_channels_backward(probs, dprobs))
        return loss.value

    return _train(
        config, model, arrays, train_idx, val_idx, Path(out_dir),
        stage_batch=lambda a, idx, ep: _finetune_batch(a, idx, config, ep),
        stage_loss=stage_loss,
        stage_val=lambda m: _val_jsi(m, val_x, val_truth),
        better=lambda new, best: new > best,
    )


def predict(ckpt: Checkpoint, img: Image, face: BinaryMask,
            texture: TextureMap | None = None) -> BinaryMask:
    """Segment wrinkles with a finetuned checkpoint.

    The input is the masked RGB image, with the texture map (scaled to
    [0, 1]) as a fourth channel when the checkpoint expects one. The wrinkle
    channel must strictly beat the background channel; ties carry no positive
    evidence and stay background.
    """
    masked = apply_mask(img, face).data.transpose(2, 0, 1)
    if ckpt.spec.in_channels == 4:
        if texture is None:
            raise ShapeMismatchError("this checkpoint needs a texture-map channel")
        if texture.data.shape != masked.shape[1:]:
            raise ShapeMismatchError(
                f"texture {texture.data.shape} vs image {masked.shape[1:]}")
        x = np.concatenate([masked, texture.data[None] / 255.0], axis=0)
    elif ckpt.spec.in_channels == 3:
        x = masked
    else:
        raise IncompatibleCheckpointError(
            f"predict supports 3- or 4-channel checkpoints, got {ckpt.spec.in_channels}")
    model = model_from_checkpoint(ckpt, dtype=np.float64)
    logits = model.forward(x[None])
    return BinaryMask((logits[0, 1] > logits[0, 0]).astype(np.uint8))


def ensure_weak_labels(dataset_root, jobs: int | None = None) -> None:
    """Generate weak labels for a corpus if any are missing."""
    root = Path(dataset_root)
    ids = list_corpus_ids(root)
    weak_dir = root / "weak_labels"
    if all((weak_dir / f"{i}.png").is_file() for i in ids):
        return
    kernel = make_gaussian(DEFAULT_KERNEL_SIZE, DEFAULT_SIGMA)
    report = batch_weak_labels(root / "images", root / "face_masks", weak_dir,
                               kernel, jobs=jobs)
    if report["failed"]:
        raise DatasetMissingError(
            f"weak-label generation failed for {len(report['failed'])} ids")


def _evaluate_on_test(ckpt: Checkpoint, config: TrainConfig, split) -> metrics.EvalResult:
    need_weak = ckpt.spec.in_channels == 4
    arrays = load_arrays(config.dataset_root, list(split.test),
                         need_weak=need_weak, need_truth=True)
    model = model_from_checkpoint(ckpt, dtype=np.float64)
    total = metrics.ConfusionCounts(0, 0, 0, 0)
    bs = config.batch_size
    for start in range(0, len(split.test), bs):
        idx = list(range(start, min(start + bs, len(split.test))))
        x = np.stack([_finetune_channels(arrays, i, need_weak) for i in idx])
        logits = model.forward(x)
        for j, i in enumerate(idx):
            pred = BinaryMask((logits[j, 1] > logits[j, 0]).astype(np.uint8))
            truth = BinaryMask((arrays["truth"][i] > 0.5).astype(np.uint8))
            total = total + metrics.confusion(pred, truth)
    return metrics.metrics_from_counts(total)


def run_experiment(pretrain_config: TrainConfig, finetune_config: TrainConfig,
                   out_dir) -> dict:
    """Pretrain once, then finetune the four comparison rows and evaluate.

    Rows: {no pretraining, texture pretraining} x {RGB, RGB+Texture}. Each
    row's test-split metrics land in out_dir/report.json together with the
    config hashes; reruns with the same seeds reproduce the report bytes.
    """
    if pretrain_config.dataset_root != finetune_config.dataset_root:
        raise InvalidSpecError("pretrain and finetune configs must share a dataset")
    if pretrain_config.seed != finetune_config.seed:
        raise InvalidSpecError("pretrain and finetune configs must share a seed "
                               "(the split would otherwise leak test images)")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ensure_weak_labels(pretrain_config.dataset_root)

    pre_ckpt = pretrain(pretrain_config, out_dir / "pretrain")
    ids = list_corpus_ids(finetune_config.dataset_root)
    split = make_split(ids, finetune_config)

    def row_config(mode: str) -> TrainConfig:
        in_ch = 4 if mode == INPUT_MODE_RGBTEX else 3
        return replace(finetune_config, input_mode=mode,
                       spec=replace(finetune_config.spec, in_channels=in_ch))

    rows = {}
    for name in EXPERIMENT_ROWS:
        use_init = name.startswith("pretrain")
        mode = INPUT_MODE_RGBTEX if name.endswith("rgbtex") else INPUT_MODE_RGB
        cfg = row_config(mode)
        ckpt = finetune(cfg, pre_ckpt if use_init else None, out_dir / "rows" / name)
        result = _evaluate_on_test(ckpt, cfg, split)
        rows[name] = result.to_dict()

    report = {
        "seed": finetune_config.seed,
        "label_fraction": finetune_config.label_fraction,
        "rows": rows,
        "config_hashes": {
            "pretrain": pretrain_config.config_hash(),
            "finetune": finetune_config.config_hash(),
        },
    }
    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report
