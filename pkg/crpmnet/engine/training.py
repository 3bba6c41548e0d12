"""
Losses, the Adam optimizer, stratified pixel sampling, score-map refinement and the two-step training framework:
step 1 trains the patch classifier on windows around sampled pixels, step 2 transfers it into the dense and fusion
networks and trains the decoder on refined dense labels.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from crpmnet.engine.cops import softmax_probs
from crpmnet.engine.ctensor import CTensor, FloatArray, mirror_pad, stack
from crpmnet.engine.nets import (
    Network,
    build_cs_cnn,
    build_crpm,
    class_map,
    predict_scene,
    transfer_to_dilated,
)
from crpmnet.polsar.tiling import TileSet, tile_scene
from crpmnet.shared.constants import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPSILON,
    LOG_GUARD,
    PATCH_OFFSET,
    PATCH_SIZE,
    SCENE_MARGIN,
    TILE_STRIDE,
    TILE_WINDOW,
)
from crpmnet.shared.exceptions import DimensionError, TrainingPreconditionError
from crpmnet.shared.train_config import TrainConfig

logger = logging.getLogger(__name__)

IntArray = NDArray[np.int64]


def focal_loss(probs: FloatArray, label: int, alpha: float = 0.25, gamma: float = 2.0) -> float:
    """-alpha * (1 - p)^gamma * log(p), p the probability of the true class clamped to 1e-12"""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.shape[-1]:
        raise DimensionError(f"Label {label} is outside the {probs.shape[-1]} classes")
    p = max(float(probs[label]), LOG_GUARD)
    return -alpha * (1.0 - p) ** gamma * math.log(p)


def focal_loss_with_grad(scores: FloatArray, labels: IntArray, alpha: float, gamma: float) -> tuple[float, FloatArray]:
    """
    Mean focal loss of a [N, K] score batch and its gradient w.r.t. the scores, through the softmax:

        dL/ds_j = (dL/dp * p) * (delta_j - p_j),  dL/dp * p = -alpha * ((1 - p)^gamma - gamma * (1 - p)^(gamma - 1) * p * log p)
    """
    probs = softmax_probs(scores, axis=-1)
    count = probs.shape[0]
    p = np.maximum(probs[np.arange(count), labels], LOG_GUARD)
    log_p = np.log(p)
    q = 1.0 - p
    losses = -alpha * q**gamma * log_p
    scale = q**gamma
    if gamma != 0:
        # the gamma term vanishes at p = 1 for gamma >= 1; keep it finite for 0 < gamma < 1 as well
        safe_q = np.where(q > 0, q, 1.0)
        scale = scale - np.where(q > 0, gamma * safe_q ** (gamma - 1) * p * log_p, 0.0)
    factor = -alpha * scale
    onehot = np.zeros_like(probs)
    onehot[np.arange(count), labels] = 1.0
    grad = factor[:, None] * (onehot - probs) / count
    return float(losses.mean()), grad


def weighted_cross_entropy(probs: FloatArray, targets: IntArray, weights: FloatArray) -> float:
    """sum W * (-log p_M) / sum W over a class-first [..., K, H, W] probability map"""
    loss, _ = _weighted_cross_entropy(probs, targets, weights)
    return loss


def _weighted_cross_entropy(probs: FloatArray, targets: IntArray, weights: FloatArray) -> tuple[float, FloatArray]:
    if probs.shape[:-3] + probs.shape[-2:] != targets.shape or targets.shape != weights.shape:
        raise DimensionError(f"Probabilities {probs.shape}, labels {targets.shape} and weights {weights.shape} differ")
    total = float(weights.sum())
    if total <= 0:
        raise TrainingPreconditionError("Loss weights sum to zero")
    picked = np.take_along_axis(probs, np.expand_dims(targets, -3), axis=-3)[..., 0, :, :]
    loss = float(np.sum(weights * -np.log(np.maximum(picked, LOG_GUARD))) / total)
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, np.expand_dims(targets, -3), 1.0, axis=-3)
    grad = np.expand_dims(weights / total, -3) * (probs - onehot)
    return loss, grad


def weighted_cross_entropy_with_grad(scores: FloatArray, targets: IntArray, weights: FloatArray) -> tuple[float, FloatArray]:
    """Weight-normalized cross-entropy of class-first score maps and its gradient (W / sum W) * (p - onehot(M))"""
    return _weighted_cross_entropy(softmax_probs(scores, axis=-3), targets, weights)


@dataclass
class AdamState:
    """First and second moments per real parameter plane, and the number of steps taken"""

    first: dict[str, FloatArray] = field(default_factory=dict)
    second: dict[str, FloatArray] = field(default_factory=dict)
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    epsilon: float = ADAM_EPSILON


def _group(key: str) -> str:
    return key.split(".", 1)[0]


def adam_step(
    params: dict[str, FloatArray],
    grads: dict[str, FloatArray],
    state: AdamState,
    lr: float,
    frozen: set[str] | frozenset[str] = frozenset(),
) -> tuple[dict[str, FloatArray], AdamState]:
    """
    One bias-corrected Adam update applied to every plane separately. Planes whose group is frozen, or that have no
    gradient, keep their values.
    """
    step = state.step + 1
    first, second = dict(state.first), dict(state.second)
    updated = dict(params)
    for key, grad in grads.items():
        if _group(key) in frozen:
            continue
        if key not in params:
            raise DimensionError(f"Gradient for unknown parameter {key}")
        if grad.shape != params[key].shape:
            raise DimensionError(f"Gradient {grad.shape} does not match parameter {key} {params[key].shape}")
        m = state.beta1 * first.get(key, np.zeros_like(grad)) + (1 - state.beta1) * grad
        v = state.beta2 * second.get(key, np.zeros_like(grad)) + (1 - state.beta2) * grad * grad
        m_hat = m / (1 - state.beta1**step)
        v_hat = v / (1 - state.beta2**step)
        updated[key] = params[key] - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        first[key], second[key] = m, v
    return updated, AdamState(first, second, step, state.beta1, state.beta2, state.epsilon)


@dataclass(frozen=True)
class TrainingPixels:
    """Sampled training pixels. Labels are internal (0-based) class indices."""

    rows: IntArray
    cols: IntArray
    labels: IntArray

    def __len__(self) -> int:
        return int(self.rows.size)


def sample_training_pixels(
    labels: NDArray[np.integer], class_count: int, per_class_count: int, max_rate: float, seed: int
) -> TrainingPixels:
    """
    Per class: min(per_class_count, floor(max_rate * class_total)) labeled pixels drawn without replacement.
    ``labels`` holds external classes 1..K with 0 for unlabeled pixels, which are never drawn.
    """
    rng = np.random.default_rng(seed)
    flat = np.asarray(labels).ravel()
    width = labels.shape[1]
    rate = Fraction(str(max_rate))
    chosen = []
    classes = []
    for klass in range(1, class_count + 1):
        candidates = np.flatnonzero(flat == klass)
        if candidates.size == 0:
            raise TrainingPreconditionError(f"Class {klass} has no labeled pixels")
        count = min(per_class_count, math.floor(rate * candidates.size))
        if count == 0:
            logger.warning("Class %d: %d pixels at rate %s leaves no training pixels", klass, candidates.size, max_rate)
        picked = rng.choice(candidates, size=count, replace=False)
        logger.debug("Class %d: sampled %d of %d pixels", klass, count, candidates.size)
        chosen.append(picked)
        classes.append(np.full(count, klass - 1, dtype=np.int64))
    index = np.concatenate(chosen).astype(np.int64)
    if index.size == 0:
        raise TrainingPreconditionError("No training pixels were sampled")
    return TrainingPixels(index // width, index % width, np.concatenate(classes))


def held_out_mask(labels: NDArray[np.integer], pixels: TrainingPixels) -> NDArray[np.bool_]:
    """Labeled pixels that were not sampled for training"""
    mask = np.asarray(labels) > 0
    mask[pixels.rows, pixels.cols] = False
    return mask


@dataclass(frozen=True)
class RefinedLabels:
    """Dense class labels M and per-pixel loss weights W"""

    targets: IntArray
    weights: FloatArray


def refine_score_map(predicted: IntArray, pixels: TrainingPixels, config: TrainConfig) -> RefinedLabels:
    """
    Start from the predicted map with weight w_else everywhere; at every training pixel write the true label and the
    weight w_train if the prediction was right, w_error if it was wrong.
    """
    predicted = np.asarray(predicted, dtype=np.int64)
    height, width = predicted.shape
    if len(pixels) and (
        pixels.rows.min() < 0 or pixels.cols.min() < 0 or pixels.rows.max() >= height or pixels.cols.max() >= width
    ):
        raise DimensionError(f"Training pixels lie outside the {height}x{width} predicted map")
    targets = predicted.copy()
    weights = np.full(predicted.shape, config.w_else)
    correct = predicted[pixels.rows, pixels.cols] == pixels.labels
    targets[pixels.rows, pixels.cols] = pixels.labels
    weights[pixels.rows, pixels.cols] = np.where(correct, config.w_train, config.w_error)
    logger.info(
        "Refined map: %d training pixels correct, %d misclassified", int(correct.sum()), int((~correct).sum())
    )
    return RefinedLabels(targets, weights)


def _extract_patches(features: CTensor, pixels: TrainingPixels) -> CTensor:
    """[N, C, 10, 10] windows with each pixel at (4, 4), read from the scene mirror-extended by 5"""
    padded = mirror_pad(features, SCENE_MARGIN)
    top = SCENE_MARGIN - PATCH_OFFSET
    rows, cols = pixels.rows + top, pixels.cols + top

    def gather(plane: FloatArray) -> FloatArray:
        windows = sliding_window_view(plane, (PATCH_SIZE, PATCH_SIZE), axis=(1, 2))
        return np.ascontiguousarray(windows[:, rows, cols].transpose(1, 0, 2, 3))

    return CTensor(gather(padded.real), gather(padded.imag))


def _apply(net: Network, planes: dict[str, FloatArray]) -> None:
    net.params.load_arrays(planes)


def _epoch_batches(rng: np.random.Generator, count: int, batch: int) -> list[IntArray]:
    order = rng.permutation(count)
    return [order[start : start + batch] for start in range(0, count, batch)]


@dataclass
class Step1Result:
    network: Network
    pixels: TrainingPixels
    epoch_losses: list[float]


def train_step1(
    features: CTensor, labels: NDArray[np.integer], class_count: int, config: TrainConfig
) -> Step1Result:
    """
    Train the patch classifier with the focal loss and Adam on 10x10 windows around stratified samples. Batches are
    reshuffled every epoch; the last partial batch is kept.
    """
    if labels.shape != (features.height, features.width):
        raise DimensionError(f"Labels {labels.shape} do not match the {features.height}x{features.width} scene")
    pixels = sample_training_pixels(labels, class_count, config.per_class_count, config.max_rate, config.seed)
    patches = _extract_patches(features, pixels)
    net = build_cs_cnn(features.channels, class_count, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    state = AdamState()
    epoch_losses = []
    logger.info("Step 1: %d training pixels, %d parameters", len(pixels), net.params.parameter_count)
    for epoch in range(1, config.epochs_step1 + 1):
        losses = []
        for step, index in enumerate(_epoch_batches(rng, len(pixels), config.batch_step1), start=1):
            trace = net.forward(patches[index])
            scores = trace.values[net.spec.head_layer][..., 0, 0]
            loss, grad = focal_loss_with_grad(scores, pixels.labels[index], config.alpha, config.gamma)
            grads = net.backward(trace, grad[..., None, None])
            planes, state = adam_step(net.params.arrays(), grads.arrays(), state, config.lr_step1, net.params.frozen)
            _apply(net, planes)
            losses.append(loss)
            logger.info("epoch=%d step=%d loss=%.6f lr=%g", epoch, step, loss, config.lr_step1)
        epoch_losses.append(float(np.mean(losses)))
        logger.info("epoch=%d mean_loss=%.6f", epoch, epoch_losses[-1])
    return Step1Result(net, pixels, epoch_losses)


def _tile_targets(refined: RefinedLabels, tile_set: TileSet) -> tuple[IntArray, FloatArray]:
    """Per-tile labels and weights; pixels in a mirror extension carry weight 0"""
    full_h = max(p.row + p.height for p in tile_set.placements)
    full_w = max(p.col + p.width for p in tile_set.placements)
    targets = np.zeros((full_h, full_w), dtype=np.int64)
    weights = np.zeros((full_h, full_w))
    targets[: tile_set.height, : tile_set.width] = refined.targets
    weights[: tile_set.height, : tile_set.width] = refined.weights
    tile_targets = np.stack([targets[p.row : p.row + p.height, p.col : p.col + p.width] for p in tile_set.placements])
    tile_weights = np.stack([weights[p.row : p.row + p.height, p.col : p.col + p.width] for p in tile_set.placements])
    return tile_targets, tile_weights


@dataclass
class Step2Result:
    network: Network
    dilated: Network
    predicted: IntArray
    refined: RefinedLabels
    epoch_losses: list[float]


def train_step2(features: CTensor, cs_net: Network, pixels: TrainingPixels, config: TrainConfig) -> Step2Result:
    """
    Transfer the trained patch classifier into the dilated and fusion networks, predict the dense map O with the
    dilated network, refine it at the training pixels and train the fusion network's trainable groups on 128x128
    tiles with the weighted cross-entropy.
    """
    dilated = transfer_to_dilated(cs_net)
    crpm = build_crpm(cs_net, seed=config.seed)
    tile_set = tile_scene(features, TILE_WINDOW, TILE_STRIDE)
    predicted = class_map(predict_scene(dilated, features))
    refined = refine_score_map(predicted, pixels, config)
    tile_targets, tile_weights = _tile_targets(refined, tile_set)
    tiles = stack([tile.data for tile in tile_set.tiles])
    rng = np.random.default_rng(config.seed + 1)
    state = AdamState()
    epoch_losses = []
    logger.info("Step 2: %d tiles, trainable groups %s", len(tile_set), sorted(set(crpm.params.layers) - crpm.params.frozen))
    for epoch in range(1, config.epochs_step2 + 1):
        losses = []
        for step, index in enumerate(_epoch_batches(rng, len(tile_set), config.batch_step2), start=1):
            if not tile_weights[index].any():
                logger.debug("epoch=%d step=%d: batch carries no loss weight, skipped", epoch, step)
                continue
            trace = crpm.forward(tiles[index])
            scores = trace.values[crpm.spec.head_layer]
            loss, grad = weighted_cross_entropy_with_grad(scores, tile_targets[index], tile_weights[index])
            grads = crpm.backward(trace, grad)
            planes, state = adam_step(crpm.params.arrays(), grads.arrays(), state, config.lr_step2, crpm.params.frozen)
            _apply(crpm, planes)
            losses.append(loss)
            logger.info("epoch=%d step=%d loss=%.6f lr=%g", epoch, step, loss, config.lr_step2)
        if losses:
            epoch_losses.append(float(np.mean(losses)))
            logger.info("epoch=%d mean_loss=%.6f", epoch, epoch_losses[-1])
    return Step2Result(crpm, dilated, predicted, refined, epoch_losses)

