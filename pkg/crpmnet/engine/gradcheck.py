"""
Finite-difference verification of every analytic backward pass.

Each check draws a small random instance, evaluates the scalar loss L = sum(G * output) for a random upstream G
(real and imaginary parts paired separately), and compares the analytic gradients of every input and parameter
plane with central differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from crpmnet.engine.cops import (
    CConvLayer,
    GradBundle,
    cconv2d,
    cconv2d_backward,
    cmaxpool2d,
    cmaxpool2d_backward,
    crelu,
    crelu_backward,
    ctransconv2d,
    ctransconv2d_backward,
    riap_head,
    riap_head_backward,
)
from crpmnet.engine.ctensor import CTensor, FloatArray
from crpmnet.engine.nets import Network, build_cs_cnn
from crpmnet.engine.training import IntArray, focal_loss_with_grad, weighted_cross_entropy_with_grad
from crpmnet.shared.constants import GRADCHECK_INSTANCES, GRADCHECK_STEP, GRADCHECK_TOLERANCE, PATCH_SIZE
from crpmnet.shared.exceptions import DimensionError

logger = logging.getLogger(__name__)

Gradients = list[tuple[str, FloatArray, FloatArray]]
CORRUPTION_SCALE = 1.5
COMPOSITE_COORDINATES = 40


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_error: float
    instances: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def relative_error(analytic: FloatArray, numeric: FloatArray) -> float:
    """max |a - n| / max(max |a|, max |n|, 1e-12)"""
    scale = max(float(np.abs(analytic).max(initial=0.0)), float(np.abs(numeric).max(initial=0.0)), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0.0)) / scale


def numeric_gradient(
    loss: Callable[[], float], array: FloatArray, step: float = GRADCHECK_STEP, coordinates: list[int] | None = None
) -> FloatArray:
    """
    Central differences of ``loss`` w.r.t. ``array``, perturbed in place and restored. Only ``coordinates`` (flat
    indices) are evaluated when given; the rest stay 0.
    """
    flat = array.reshape(-1)
    if not np.shares_memory(flat, array):
        raise ValueError("numeric_gradient needs a contiguous array it can perturb in place")
    grad = np.zeros(flat.size)
    for index in range(flat.size) if coordinates is None else coordinates:
        original = flat[index]
        flat[index] = original + step
        upper = loss()
        flat[index] = original - step
        lower = loss()
        flat[index] = original
        grad[index] = (upper - lower) / (2 * step)
    return grad.reshape(array.shape)


def _pairing(out: CTensor, upstream: CTensor) -> float:
    return float(np.sum(out.real * upstream.real) + np.sum(out.imag * upstream.imag))


def _planes(rng: np.random.Generator, shape: tuple[int, ...]) -> tuple[FloatArray, FloatArray]:
    return rng.standard_normal(shape), rng.standard_normal(shape)


def _required_input_grad(bundle: GradBundle) -> CTensor:
    if bundle.grad_input is None:
        raise DimensionError("The backward pass returned no input gradient")
    return bundle.grad_input


def _worst(loss: Callable[[], float], gradients: Gradients, corrupt: bool) -> float:
    worst = 0.0
    for name, array, analytic in gradients:
        if corrupt:
            analytic = analytic * CORRUPTION_SCALE + 1e-3
        error = relative_error(analytic, numeric_gradient(loss, array))
        logger.debug("%s: relative error %.3e", name, error)
        worst = max(worst, error)
    return worst


def check_cconv2d(rng: np.random.Generator, corrupt: bool = False) -> float:
    kernel = int(rng.choice([1, 3]))
    stride, dilation = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    padding = tuple(int(v) for v in rng.integers(0, 2, size=4))
    x_r, x_i = _planes(rng, (2, 3, 7, 7))
    w_r, w_i = _planes(rng, (2, 3, kernel, kernel))
    b_r, b_i = _planes(rng, (2,))

    def layer() -> CConvLayer:
        return CConvLayer(CTensor(w_r, w_i), CTensor(b_r, b_i), stride, dilation, padding)  # type: ignore[arg-type]

    out = cconv2d(CTensor(x_r, x_i), layer())
    upstream = CTensor(*_planes(rng, out.shape))

    def loss() -> float:
        return _pairing(cconv2d(CTensor(x_r, x_i), layer()), upstream)

    bundle = cconv2d_backward(upstream, CTensor(x_r, x_i), layer())
    grad_input = _required_input_grad(bundle)
    return _worst(
        loss,
        [
            ("input.real", x_r, grad_input.real),
            ("input.imag", x_i, grad_input.imag),
            ("weight.real", w_r, bundle.grad_weights.real),
            ("weight.imag", w_i, bundle.grad_weights.imag),
            ("bias.real", b_r, bundle.grad_bias.real),
            ("bias.imag", b_i, bundle.grad_bias.imag),
        ],
        corrupt,
    )


def _away_from_zero(rng: np.random.Generator, shape: tuple[int, ...]) -> FloatArray:
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.1, 1.0, size=shape)


def check_crelu(rng: np.random.Generator, corrupt: bool = False) -> float:
    x_r, x_i = _away_from_zero(rng, (3, 4, 4)), _away_from_zero(rng, (3, 4, 4))
    upstream = CTensor(*_planes(rng, x_r.shape))

    def loss() -> float:
        return _pairing(crelu(CTensor(x_r, x_i)), upstream)

    grad = crelu_backward(upstream, CTensor(x_r, x_i))
    return _worst(loss, [("input.real", x_r, grad.real), ("input.imag", x_i, grad.imag)], corrupt)


def _well_separated(rng: np.random.Generator, shape: tuple[int, ...]) -> FloatArray:
    # distinct values 0.01 apart so no perturbation changes a window's maximum
    count = int(np.prod(shape))
    return (rng.permutation(count) * 0.01 - count * 0.005).reshape(shape)


def check_cmaxpool2d(rng: np.random.Generator, corrupt: bool = False) -> float:
    stride = int(rng.integers(1, 3))
    dilation = int(rng.integers(1, 3)) if stride == 1 else 1
    x_r, x_i = _well_separated(rng, (2, 2, 6, 6)), _well_separated(rng, (2, 2, 6, 6))
    record = cmaxpool2d(CTensor(x_r, x_i), 2, stride, dilation)
    upstream = CTensor(*_planes(rng, record.output.shape))

    def loss() -> float:
        return _pairing(cmaxpool2d(CTensor(x_r, x_i), 2, stride, dilation).output, upstream)

    grad = cmaxpool2d_backward(upstream, record)
    return _worst(loss, [("input.real", x_r, grad.real), ("input.imag", x_i, grad.imag)], corrupt)


def check_ctransconv2d(rng: np.random.Generator, corrupt: bool = False) -> float:
    x_r, x_i = _planes(rng, (2, 3, 3, 3))
    w_r, w_i = _planes(rng, (3, 2, 2, 2))
    b_r, b_i = _planes(rng, (2,))

    def layer() -> CConvLayer:
        return CConvLayer(CTensor(w_r, w_i), CTensor(b_r, b_i), transposed=True)

    upstream = CTensor(*_planes(rng, (2, 2, 6, 6)))

    def loss() -> float:
        return _pairing(ctransconv2d(CTensor(x_r, x_i), layer()), upstream)

    bundle = ctransconv2d_backward(upstream, CTensor(x_r, x_i), layer())
    grad_input = _required_input_grad(bundle)
    return _worst(
        loss,
        [
            ("input.real", x_r, grad_input.real),
            ("input.imag", x_i, grad_input.imag),
            ("weight.real", w_r, bundle.grad_weights.real),
            ("weight.imag", w_i, bundle.grad_weights.imag),
            ("bias.real", b_r, bundle.grad_bias.real),
            ("bias.imag", b_i, bundle.grad_bias.imag),
        ],
        corrupt,
    )


def check_riap_head(rng: np.random.Generator, corrupt: bool = False) -> float:
    shape = (3, 4, 4)
    # |z| >= 0.5 and phase away from the branch cut at +-pi
    magnitude = rng.uniform(0.5, 1.5, size=shape)
    phase = rng.uniform(-np.pi + 0.2, np.pi - 0.2, size=shape)
    z_r, z_i = magnitude * np.cos(phase), magnitude * np.sin(phase)
    head = rng.standard_normal(5)
    upstream = rng.standard_normal(shape)

    def loss() -> float:
        return float(np.sum(riap_head(CTensor(z_r, z_i), head) * upstream))

    grad_z, grad_head = riap_head_backward(upstream, CTensor(z_r, z_i), head)
    return _worst(
        loss, [("input.real", z_r, grad_z.real), ("input.imag", z_i, grad_z.imag), ("head", head, grad_head)], corrupt
    )


def check_focal_loss(rng: np.random.Generator, corrupt: bool = False) -> float:
    scores = rng.standard_normal((4, 3))
    labels = rng.integers(0, 3, size=4)
    alpha = float(rng.uniform(0.1, 1.0))
    gamma = float(rng.choice([0.0, 0.5, 1.0, 2.0]))

    def loss() -> float:
        return focal_loss_with_grad(scores, labels, alpha, gamma)[0]

    _, grad = focal_loss_with_grad(scores, labels, alpha, gamma)
    return _worst(loss, [("scores", scores, grad)], corrupt)


def check_weighted_cross_entropy(rng: np.random.Generator, corrupt: bool = False) -> float:
    scores = rng.standard_normal((2, 3, 4, 4))
    targets = rng.integers(0, 3, size=(2, 4, 4))
    weights = rng.choice([0.5, 50.0, 100.0], size=(2, 4, 4))

    def loss() -> float:
        return weighted_cross_entropy_with_grad(scores, targets, weights)[0]

    _, grad = weighted_cross_entropy_with_grad(scores, targets, weights)
    return _worst(loss, [("scores", scores, grad)], corrupt)


def cs_cnn_loss(net: Network, patches: CTensor, labels: IntArray, alpha: float, gamma: float) -> float:
    scores = net.forward(patches).values[net.spec.head_layer][..., 0, 0]
    return focal_loss_with_grad(scores, labels, alpha, gamma)[0]


def cs_cnn_gradients(net: Network, patches: CTensor, labels: IntArray, alpha: float, gamma: float) -> dict[str, FloatArray]:
    """Analytic gradients of the mean focal loss of a patch batch, keyed like ``NetworkParams.arrays``"""
    trace = net.forward(patches)
    scores = trace.values[net.spec.head_layer][..., 0, 0]
    _, grad = focal_loss_with_grad(scores, labels, alpha, gamma)
    return net.backward(trace, grad[..., None, None]).arrays()


def check_cs_cnn(
    rng: np.random.Generator, corrupt: bool = False, coordinates: int | None = COMPOSITE_COORDINATES
) -> float:
    """
    Whole patch classifier under the focal loss. ``coordinates`` parameter entries, drawn at random across all
    planes, are perturbed; None perturbs every entry.
    """
    net = build_cs_cnn(2, 3, seed=int(rng.integers(2**31)))
    net.params.head = rng.standard_normal(5)
    patches = CTensor(*_planes(rng, (2, 2, PATCH_SIZE, PATCH_SIZE)))
    labels = rng.integers(0, 3, size=2)
    planes = net.params.arrays()
    analytic = cs_cnn_gradients(net, patches, labels, 0.25, 2.0)

    def loss() -> float:
        return cs_cnn_loss(net, patches, labels, 0.25, 2.0)

    keys = sorted(planes)
    if coordinates is None:
        chosen = {key: None for key in keys}
    else:
        sizes = np.array([planes[key].size for key in keys])
        picks = rng.choice(int(sizes.sum()), size=coordinates, replace=False)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        chosen = {}
        for pick in sorted(int(p) for p in picks):
            slot = int(np.searchsorted(offsets, pick, side="right") - 1)
            chosen.setdefault(keys[slot], []).append(pick - int(offsets[slot]))  # type: ignore[union-attr]
    analytic_all, numeric_all = [], []
    for key, indices in chosen.items():
        grad = analytic[key] * CORRUPTION_SCALE + 1e-3 if corrupt else analytic[key]
        numeric = numeric_gradient(loss, planes[key], coordinates=indices)
        flat_a, flat_n = grad.reshape(-1), numeric.reshape(-1)
        if indices is not None:
            flat_a, flat_n = flat_a[indices], flat_n[indices]
        analytic_all.append(flat_a)
        numeric_all.append(flat_n)
    return relative_error(np.concatenate(analytic_all), np.concatenate(numeric_all))


GRADIENT_CHECKS: dict[str, Callable[..., float]] = {
    "cconv2d": check_cconv2d,
    "crelu": check_crelu,
    "cmaxpool2d": check_cmaxpool2d,
    "ctransconv2d": check_ctransconv2d,
    "riap_head": check_riap_head,
    "focal_loss": check_focal_loss,
    "weighted_cross_entropy": check_weighted_cross_entropy,
    "cs_cnn": check_cs_cnn,
}


def run_gradient_checks(
    seed: int = 0,
    tolerance: float = GRADCHECK_TOLERANCE,
    instances: int = GRADCHECK_INSTANCES,
    corrupt: str | None = None,
) -> list[CheckResult]:
    """
    Run every registered check on ``instances`` seeded random instances. ``corrupt`` names one check whose analytic
    gradients are distorted, to exercise the failure path.
    """
    if corrupt is not None and corrupt not in GRADIENT_CHECKS:
        raise KeyError(f"Unknown gradient check {corrupt!r}")
    results = []
    for position, (name, check) in enumerate(GRADIENT_CHECKS.items()):
        rng = np.random.default_rng([seed, position])
        worst = max(check(rng, corrupt == name) for _ in range(instances))
        result = CheckResult(name, worst, instances, tolerance)
        logger.info("%s: max relative error %.3e over %d instances", name, worst, instances)
        results.append(result)
    return results
