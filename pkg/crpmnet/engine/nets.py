"""
Layer graphs for the patch classifier (Cs-CNN), its dilated dense counterpart and the CRPM fusion network, together
with parameter transfer, forward/backward passes and whole-scene inference.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from crpmnet.engine.cops import (
    CConvLayer,
    GradBundle,
    PoolRecord,
    cconv2d,
    cconv2d_backward,
    cmaxpool2d,
    cmaxpool2d_backward,
    cmaxpool2d_values,
    conv_output_size,
    crelu,
    crelu_backward,
    ctransconv2d,
    ctransconv2d_backward,
    pool_output_size,
    riap_head,
    riap_head_backward,
    softmax_probs,
)
from crpmnet.engine.ctensor import CTensor, FloatArray, _spatial_pad, concat_channels, crop_center, mirror_pad
from crpmnet.polsar.tiling import reassemble, tile_scene
from crpmnet.shared.constants import ENCODER_MARGIN, PATCH_OFFSET, PATCH_SIZE, SCENE_MARGIN, TILE_STRIDE, TILE_WINDOW
from crpmnet.shared.exceptions import DimensionError, IncompatibleDataError
from crpmnet.shared.utils import get_thread_count

logger = logging.getLogger(__name__)

LAYER_KINDS = ("cconv", "crelu", "cmaxpool", "ctransconv", "mirror_pad", "crop_concat", "concat", "riap_head", "softmax")
NETWORK_KINDS = ("cs", "dilated", "crpm")
HEAD = "head"
INPUT = "input"
# Dilated stack that keeps the window top-left at (-4, -4) from the pixel it classifies
DILATED_GEOMETRY = {
    "conv1": {"padding": (2, 0, 2, 0)},
    "pool1": {"stride": 1, "dilation": 1},
    "conv2": {"dilation": 2, "padding": (2, 2, 2, 2)},
    "pool2": {"stride": 1, "dilation": 2},
}
# Context a dense tile needs around its core so every core pixel sees its full 10x10 receptive field
DENSE_HALO = (PATCH_OFFSET, PATCH_SIZE - PATCH_OFFSET - 1)


@dataclass(frozen=True)
class LayerSpec:
    """
    One node of a network graph. ``source`` defaults to the previous layer; concatenation nodes also read ``skip``,
    whose channels come first. Convolution nodes read their values from the parameter group ``param``.
    """

    name: str
    kind: str
    source: str | None = None
    skip: str | None = None
    param: str | None = None
    stride: int = 1
    dilation: int = 1
    padding: tuple[int, int, int, int] = (0, 0, 0, 0)
    window: int = 2
    margin: int = 0

    def to_dict(self) -> dict[str, Any]:
        spec = asdict(self)
        spec["padding"] = list(self.padding)
        return spec

    @classmethod
    def from_dict(cls, spec: dict[str, Any]) -> LayerSpec:
        values = dict(spec)
        values["padding"] = tuple(values.get("padding", (0, 0, 0, 0)))
        return cls(**values)


@dataclass(frozen=True)
class NetworkSpec:
    """Topologically ordered layer graph with named taps on intermediate outputs"""

    kind: str
    input_channels: int
    class_count: int
    layers: tuple[LayerSpec, ...]
    taps: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in NETWORK_KINDS:
            raise IncompatibleDataError(f"Unknown network kind {self.kind!r}")
        if self.input_channels < 1 or self.class_count < 2:
            raise DimensionError("Networks need at least one input channel and two classes")
        seen = {INPUT}
        previous = INPUT
        for layer in self.layers:
            if layer.kind not in LAYER_KINDS:
                raise IncompatibleDataError(f"Layer {layer.name}: unknown kind {layer.kind!r}")
            if layer.name in seen:
                raise IncompatibleDataError(f"Layer name {layer.name!r} is used twice")
            for ref in (layer.source, layer.skip):
                if ref is not None and ref not in seen:
                    raise IncompatibleDataError(f"Layer {layer.name} reads {ref!r} before it is computed")
            if layer.kind in ("cconv", "ctransconv") and layer.param is None:
                raise IncompatibleDataError(f"Layer {layer.name} has no parameter group")
            if layer.kind in ("crop_concat", "concat") and layer.skip is None:
                raise IncompatibleDataError(f"Layer {layer.name} has nothing to concatenate")
            seen.add(layer.name)
            previous = layer.name
        for tap, target in self.taps.items():
            if target not in seen:
                raise IncompatibleDataError(f"Tap {tap!r} points at the unknown layer {target!r}")
        logger.debug("Validated %s network spec ending at %s", self.kind, previous)

    def source_of(self, index: int) -> str:
        layer = self.layers[index]
        if layer.source is not None:
            return layer.source
        return self.layers[index - 1].name if index else INPUT

    @property
    def param_names(self) -> list[str]:
        names: list[str] = []
        for layer in self.layers:
            if layer.param is not None and layer.param not in names:
                names.append(layer.param)
        return names

    @property
    def head_layer(self) -> str:
        for layer in self.layers:
            if layer.kind == "riap_head":
                return layer.name
        raise IncompatibleDataError("Network has no classification head")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "input_channels": self.input_channels,
            "class_count": self.class_count,
            "layers": [layer.to_dict() for layer in self.layers],
            "taps": dict(self.taps),
        }

    @classmethod
    def from_dict(cls, spec: dict[str, Any]) -> NetworkSpec:
        return cls(
            kind=spec["kind"],
            input_channels=int(spec["input_channels"]),
            class_count=int(spec["class_count"]),
            layers=tuple(LayerSpec.from_dict(layer) for layer in spec["layers"]),
            taps=dict(spec.get("taps", {})),
        )


@dataclass
class NetworkParams:
    """
    Mutable container of layer values keyed by parameter group, the five head values (w_r, w_i, w_m, w_p, b) and
    the set of frozen groups. Networks built by transfer hold the same container, so replacing a group here is
    seen by all of them.
    """

    layers: dict[str, CConvLayer]
    head: FloatArray
    frozen: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        self.head = np.asarray(self.head, dtype=np.float64)
        if self.head.shape != (5,):
            raise DimensionError(f"Head holds 5 values, got shape {self.head.shape}")

    def trainable(self, group: str) -> bool:
        return group not in self.frozen

    @property
    def parameter_count(self) -> int:
        return sum(layer.parameter_count for layer in self.layers.values()) + int(self.head.size)

    def arrays(self) -> dict[str, FloatArray]:
        """Every real parameter plane keyed ``<group>.weight.real`` etc. The head is keyed ``head``."""
        planes: dict[str, FloatArray] = {}
        for key, layer in self.layers.items():
            planes[f"{key}.weight.real"] = layer.weights.real
            planes[f"{key}.weight.imag"] = layer.weights.imag
            planes[f"{key}.bias.real"] = layer.bias.real
            planes[f"{key}.bias.imag"] = layer.bias.imag
        planes[HEAD] = self.head
        return planes

    def load_arrays(self, planes: dict[str, FloatArray]) -> None:
        """Replace parameter values from planes keyed like ``arrays``. Missing keys keep their values."""
        for key, layer in list(self.layers.items()):
            weights = CTensor(
                planes.get(f"{key}.weight.real", layer.weights.real),
                planes.get(f"{key}.weight.imag", layer.weights.imag),
            )
            bias = CTensor(planes.get(f"{key}.bias.real", layer.bias.real), planes.get(f"{key}.bias.imag", layer.bias.imag))
            if weights.shape != layer.weights.shape or bias.shape != layer.bias.shape:
                raise DimensionError(f"New values for {key} do not match its shapes")
            self.layers[key] = layer.with_values(weights, bias)
        if HEAD in planes:
            head = np.asarray(planes[HEAD], dtype=np.float64)
            if head.shape != (5,):
                raise DimensionError(f"Head holds 5 values, got shape {head.shape}")
            self.head = head.copy()


@dataclass
class ForwardTrace:
    """Every intermediate value of one forward pass plus the pooling records the backward pass needs"""

    values: dict[str, Any]
    pools: dict[str, PoolRecord]
    output_name: str

    @property
    def output(self) -> Any:
        return self.values[self.output_name]


@dataclass
class ParamGrads:
    """Gradients of the trainable parameter groups and of the head (None when frozen)"""

    layers: dict[str, GradBundle]
    head: FloatArray | None

    def arrays(self) -> dict[str, FloatArray]:
        """Same keys as ``NetworkParams.arrays``, trainable groups only"""
        planes: dict[str, FloatArray] = {}
        for key, bundle in self.layers.items():
            planes[f"{key}.weight.real"] = bundle.grad_weights.real
            planes[f"{key}.weight.imag"] = bundle.grad_weights.imag
            planes[f"{key}.bias.real"] = bundle.grad_bias.real
            planes[f"{key}.bias.imag"] = bundle.grad_bias.imag
        if self.head is not None:
            planes[HEAD] = self.head
        return planes


def _add(a: Any, b: Any) -> Any:
    if a is None:
        return b
    if isinstance(a, CTensor):
        return CTensor(a.real + b.real, a.imag + b.imag)
    return a + b


def _merge_bundle(a: GradBundle | None, b: GradBundle) -> GradBundle:
    if a is None:
        return GradBundle(None, b.grad_weights, b.grad_bias)
    return GradBundle(None, _add(a.grad_weights, b.grad_weights), _add(a.grad_bias, b.grad_bias))


@dataclass
class Network:
    """A network spec bound to its (possibly shared) parameters"""

    spec: NetworkSpec
    params: NetworkParams

    def __post_init__(self) -> None:
        missing = [name for name in self.spec.param_names if name not in self.params.layers]
        if missing:
            raise IncompatibleDataError(f"Parameters for {', '.join(missing)} are missing")
        unused = [name for name in self.params.layers if name not in self.spec.param_names]
        if unused:
            raise IncompatibleDataError(f"Parameter groups {', '.join(unused)} are not used by the network")
        for layer in self.spec.layers:
            if layer.param is not None and self.params.layers[layer.param].transposed != (layer.kind == "ctransconv"):
                raise IncompatibleDataError(f"Parameter group {layer.param} does not fit layer {layer.name}")

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def class_count(self) -> int:
        return self.spec.class_count

    def layer_values(self, layer: LayerSpec) -> CConvLayer:
        """The layer's parameter values with the geometry this network applies them with"""
        base = self.params.layers[str(layer.param)]
        return CConvLayer(base.weights, base.bias, layer.stride, layer.dilation, layer.padding, base.transposed)

    def trace_shapes(self, channels: int, height: int, width: int) -> dict[str, tuple[int, int, int]]:
        """[C, H, W] of every layer output for an input of the given shape; raises on any inconsistency"""
        if channels != self.spec.input_channels:
            raise IncompatibleDataError(f"Network expects {self.spec.input_channels} input channels, got {channels}")
        shapes = {INPUT: (channels, height, width)}
        for index, layer in enumerate(self.spec.layers):
            c, h, w = shapes[self.spec.source_of(index)]
            if layer.kind == "cconv":
                values = self.layer_values(layer)
                if c != values.in_channels:
                    raise DimensionError(f"{layer.name} expects {values.in_channels} channels, gets {c}")
                top, bottom, left, right = layer.padding
                k, s, d = values.kernel_size, layer.stride, layer.dilation
                c, h, w = (
                    values.out_channels,
                    conv_output_size(h, k, s, d, top, bottom),
                    conv_output_size(w, k, s, d, left, right),
                )
            elif layer.kind == "ctransconv":
                values = self.layer_values(layer)
                if c != values.in_channels:
                    raise DimensionError(f"{layer.name} expects {values.in_channels} channels, gets {c}")
                c, h, w = values.out_channels, 2 * h, 2 * w
            elif layer.kind == "cmaxpool":
                span = layer.dilation * (layer.window - 1) + 1
                if layer.stride > 1 and (h < span or w < span):
                    raise DimensionError(f"{layer.name}: a {h}x{w} map is smaller than the pooling window")
                h = pool_output_size(h, layer.window, layer.stride, layer.dilation)
                w = pool_output_size(w, layer.window, layer.stride, layer.dilation)
            elif layer.kind == "mirror_pad":
                if layer.margin >= min(h, w):
                    raise DimensionError(f"{layer.name}: margin {layer.margin} exceeds the {h}x{w} extent")
                h, w = h + 2 * layer.margin, w + 2 * layer.margin
            elif layer.kind in ("crop_concat", "concat"):
                cs, hs, ws = shapes[str(layer.skip)]
                if layer.kind == "concat" and (hs, ws) != (h, w):
                    raise DimensionError(f"{layer.name}: cannot concatenate {hs}x{ws} with {h}x{w}")
                if hs < h or ws < w:
                    raise DimensionError(f"{layer.name}: skip {hs}x{ws} is smaller than {h}x{w}")
                c = cs + c
            if h < 1 or w < 1:
                raise DimensionError(f"{layer.name}: input {height}x{width} yields an empty output")
            shapes[layer.name] = (c, h, w)
        return shapes

    def forward(self, x: CTensor, inference: bool = False) -> ForwardTrace:
        """Run every layer on a [C, H, W] or [N, C, H, W] input. ``inference`` skips the pooling argmax records."""
        self.trace_shapes(x.channels, x.height, x.width)
        values: dict[str, Any] = {INPUT: x}
        pools: dict[str, PoolRecord] = {}
        for index, layer in enumerate(self.spec.layers):
            value = values[self.spec.source_of(index)]
            if layer.kind == "cconv":
                out = cconv2d(value, self.layer_values(layer))
            elif layer.kind == "ctransconv":
                out = ctransconv2d(value, self.layer_values(layer))
            elif layer.kind == "crelu":
                out = crelu(value)
            elif layer.kind == "cmaxpool" and inference:
                out = cmaxpool2d_values(value, layer.window, layer.stride, layer.dilation)
            elif layer.kind == "cmaxpool":
                record = cmaxpool2d(value, layer.window, layer.stride, layer.dilation)
                pools[layer.name] = record
                out = record.output
            elif layer.kind == "mirror_pad":
                out = mirror_pad(value, layer.margin)
            elif layer.kind == "crop_concat":
                out = concat_channels(crop_center(values[str(layer.skip)], value.height, value.width), value)
            elif layer.kind == "concat":
                out = concat_channels(values[str(layer.skip)], value)
            elif layer.kind == "riap_head":
                out = riap_head(value, self.params.head)
            else:
                out = softmax_probs(value, axis=-3)
            values[layer.name] = out
        return ForwardTrace(values, pools, self.spec.layers[-1].name)

    def _requires_grad(self) -> dict[str, bool]:
        needs = {INPUT: False}
        for index, layer in enumerate(self.spec.layers):
            upstream = needs[self.spec.source_of(index)] or (layer.skip is not None and needs[layer.skip])
            if layer.param is not None:
                upstream = upstream or self.params.trainable(layer.param)
            if layer.kind == "riap_head":
                upstream = upstream or self.params.trainable(HEAD)
            needs[layer.name] = upstream
        return needs

    def backward(self, trace: ForwardTrace, grad_scores: FloatArray) -> ParamGrads:
        """
        Gradients of the trainable groups given the loss gradient w.r.t. the head scores (the input of softmax).
        Branches that only lead to frozen groups are not visited.
        """
        needs = self._requires_grad()
        head_name = self.spec.head_layer
        grads: dict[str, Any] = {head_name: grad_scores}
        layer_grads: dict[str, GradBundle] = {}
        head_grad = None
        for index in range(len(self.spec.layers) - 1, -1, -1):
            layer = self.spec.layers[index]
            grad = grads.pop(layer.name, None)
            if grad is None:
                continue
            source = self.spec.source_of(index)
            value = trace.values[source]
            propagate = needs[source]
            upstream: Any = None
            if layer.kind in ("cconv", "ctransconv"):
                backward = cconv2d_backward if layer.kind == "cconv" else ctransconv2d_backward
                bundle = backward(grad, value, self.layer_values(layer), need_input=propagate)
                if self.params.trainable(str(layer.param)):
                    layer_grads[str(layer.param)] = _merge_bundle(layer_grads.get(str(layer.param)), bundle)
                upstream = bundle.grad_input
            elif layer.kind == "crelu":
                upstream = crelu_backward(grad, value) if propagate else None
            elif layer.kind == "cmaxpool":
                upstream = cmaxpool2d_backward(grad, trace.pools[layer.name]) if propagate else None
            elif layer.kind == "riap_head":
                grad_z, grad_head = riap_head_backward(grad, value, self.params.head)
                if self.params.trainable(HEAD):
                    head_grad = grad_head
                upstream = grad_z if propagate else None
            elif layer.kind in ("crop_concat", "concat"):
                skip_value = trace.values[str(layer.skip)]
                split = skip_value.channels
                skip_grad, upstream = grad[..., :split, :, :], grad[..., split:, :, :]
                if not propagate:
                    upstream = None
                if needs[str(layer.skip)]:
                    grads[str(layer.skip)] = _add(grads.get(str(layer.skip)), _uncrop(skip_grad, skip_value))
            elif layer.kind == "mirror_pad":
                # network inputs never require gradients
                upstream = None
            if upstream is not None:
                grads[source] = _add(grads.get(source), upstream)
        return ParamGrads(layer_grads, head_grad)


def _uncrop(grad: CTensor, original: CTensor) -> CTensor:
    """Adjoint of ``crop_center``: place the gradient back at the crop position, zeros elsewhere"""
    if grad.height == original.height and grad.width == original.width:
        return grad
    top = (original.height - grad.height) // 2
    left = (original.width - grad.width) // 2
    real = np.zeros(original.shape)
    imag = np.zeros(original.shape)
    real[..., top : top + grad.height, left : left + grad.width] = grad.real
    imag[..., top : top + grad.height, left : left + grad.width] = grad.imag
    return CTensor(real, imag)


def init_layer(rng: np.random.Generator, c_in: int, c_out: int, kernel: int, transposed: bool = False) -> CConvLayer:
    """Both kernel planes uniform in +-sqrt(3 / fan_in), fan_in = k^2 * c_in * 2; zero bias"""
    bound = np.sqrt(3.0 / (kernel * kernel * c_in * 2))
    shape = (c_in, c_out, kernel, kernel) if transposed else (c_out, c_in, kernel, kernel)
    weights = CTensor(rng.uniform(-bound, bound, shape), rng.uniform(-bound, bound, shape))
    return CConvLayer(weights, CTensor.zeros((c_out,)), transposed=transposed)


def initial_head() -> FloatArray:
    """Real-part projection"""
    return np.array([1.0, 0.0, 0.0, 0.0, 0.0])


def _cs_layers(geometry: dict[str, dict[str, Any]] | None = None) -> tuple[LayerSpec, ...]:
    geometry = geometry or {}
    return (
        LayerSpec("conv1", "cconv", param="conv1", **geometry.get("conv1", {})),
        LayerSpec("relu1", "crelu"),
        LayerSpec("pool1", "cmaxpool", **{"stride": 2, **geometry.get("pool1", {})}),
        LayerSpec("conv2", "cconv", param="conv2", **geometry.get("conv2", {})),
        LayerSpec("relu2", "crelu"),
        LayerSpec("pool2", "cmaxpool", **{"stride": 2, **geometry.get("pool2", {})}),
        LayerSpec("conv3", "cconv", param="conv3"),
        LayerSpec("relu3", "crelu"),
        LayerSpec("conv4", "cconv", param="conv4"),
        LayerSpec(HEAD, "riap_head"),
        LayerSpec("probs", "softmax"),
    )


def build_cs_cnn(c_in: int, n_cls: int, seed: int | None = None) -> Network:
    """
    The patch classifier: conv3x3(c_in->12) > crelu > pool s2 > conv3x3(12->24) > crelu > pool s2 >
    conv1x1(24->48) > crelu > conv1x1(48->n_cls) > head > softmax. A 10x10 patch shrinks 10 > 8 > 4 > 2 > 1.
    """
    if c_in < 1 or n_cls < 2:
        raise DimensionError(f"Cs-CNN needs c_in >= 1 and at least 2 classes, got {c_in} and {n_cls}")
    rng = np.random.default_rng(seed)
    params = NetworkParams(
        layers={
            "conv1": init_layer(rng, c_in, 12, 3),
            "conv2": init_layer(rng, 12, 24, 3),
            "conv3": init_layer(rng, 24, 48, 1),
            "conv4": init_layer(rng, 48, n_cls, 1),
        },
        head=initial_head(),
    )
    spec = NetworkSpec("cs", c_in, n_cls, _cs_layers(), {"feat24": "pool2"})
    return Network(spec, params)


def _require(net: Network, kind: str) -> None:
    if net.kind != kind:
        raise IncompatibleDataError(f"Expected a {kind} network, got {net.kind}")


def patch_probabilities(net: Network, patches: CTensor) -> FloatArray:
    """Class probabilities [N, n_cls] for a batch of [N, C, 10, 10] patches"""
    _require(net, "cs")
    if patches.height != PATCH_SIZE or patches.width != PATCH_SIZE:
        raise DimensionError(f"Patches must be {PATCH_SIZE}x{PATCH_SIZE}, got {patches.height}x{patches.width}")
    probs: FloatArray = net.forward(patches, inference=True).output
    return probs[..., 0, 0]


def patch_forward(net: Network, patch: CTensor) -> FloatArray:
    """Class probabilities [n_cls] of a single [C, 10, 10] patch"""
    if patch.real.ndim != 3:
        raise DimensionError(f"Expected one [C, 10, 10] patch, got shape {patch.shape}")
    return patch_probabilities(net, patch)


def receptive_field(net: Network) -> list[int]:
    """Receptive-field extent after each convolution and pooling layer: r' = r + (k - 1) * d * jump"""
    field_size, jump, chain = 1, 1, []
    for layer in net.spec.layers:
        if layer.kind == "cconv":
            kernel = net.params.layers[str(layer.param)].kernel_size
        elif layer.kind == "cmaxpool":
            kernel = layer.window
        else:
            continue
        field_size += (kernel - 1) * layer.dilation * jump
        jump *= layer.stride
        chain.append(field_size)
    return chain


def transfer_to_dilated(cs: Network) -> Network:
    """
    Same parameters, stride-1 geometry: pools keep stride 1 and the following convolution/pool dilate instead.
    The result holds the Cs-CNN's parameter container itself, not a copy.
    """
    _require(cs, "cs")
    spec = NetworkSpec("dilated", cs.spec.input_channels, cs.class_count, _cs_layers(DILATED_GEOMETRY), {"feat24": "pool2"})
    return Network(spec, cs.params)


def dense_forward(net: Network, image: CTensor, softmax: bool = True) -> tuple[CTensor, FloatArray]:
    """
    Dense feature tap and per-pixel class maps of a [C, H, W] image. The map at pixel p equals the patch classifier
    on the 10x10 window whose top-left corner is p - (4, 4), wherever that window lies inside the image.
    """
    _require(net, "dilated")
    if image.height < PATCH_SIZE or image.width < PATCH_SIZE:
        raise DimensionError(f"Image {image.height}x{image.width} is smaller than the {PATCH_SIZE}x{PATCH_SIZE} receptive field")
    trace = net.forward(image, inference=True)
    feat24 = trace.values[net.spec.taps["feat24"]]
    scores = trace.output if softmax else trace.values[net.spec.head_layer]
    return feat24, scores


def build_crpm(cs: Network, seed: int | None = None) -> Network:
    """
    Two branches on a 128x128 tile. (A) the dilated network up to its 24-channel tap; (B) an encoder sharing the
    first three Cs-CNN layers on the tile mirror-extended to 134x134 (134 > 132 > 66 > 64 > 32), then two
    transposed convolutions back to 24x128x128 with a crop-concat of the 64x64 encoder map between them. Fusion
    concatenates both 24-channel maps and classifies with a 1x1 convolution and a fresh head.

    The shared layers are frozen; up1, up2, fuse and the head train.
    """
    _require(cs, "cs")
    n_cls = cs.class_count
    rng = np.random.default_rng(seed)
    dilated = {layer.name: layer for layer in _cs_layers(DILATED_GEOMETRY)}
    layers = (
        LayerSpec("d_conv1", "cconv", source=INPUT, param="conv1", padding=dilated["conv1"].padding),
        LayerSpec("d_relu1", "crelu"),
        LayerSpec("d_pool1", "cmaxpool", stride=1, dilation=1),
        LayerSpec("d_conv2", "cconv", param="conv2", dilation=2, padding=dilated["conv2"].padding),
        LayerSpec("d_relu2", "crelu"),
        LayerSpec("d_pool2", "cmaxpool", stride=1, dilation=2),
        LayerSpec("extend", "mirror_pad", source=INPUT, margin=ENCODER_MARGIN),
        LayerSpec("e_conv1", "cconv", param="conv1"),
        LayerSpec("e_relu1", "crelu"),
        LayerSpec("e_pool1", "cmaxpool", stride=2),
        LayerSpec("e_conv2", "cconv", param="conv2"),
        LayerSpec("e_relu2", "crelu"),
        LayerSpec("e_pool2", "cmaxpool", stride=2),
        LayerSpec("e_conv3", "cconv", param="conv3"),
        LayerSpec("e_relu3", "crelu"),
        LayerSpec("up1", "ctransconv", param="up1"),
        LayerSpec("up_relu1", "crelu"),
        LayerSpec("skip_cat", "crop_concat", skip="e_relu2"),
        LayerSpec("up2", "ctransconv", param="up2"),
        LayerSpec("up_relu2", "crelu"),
        LayerSpec("fuse_cat", "concat", skip="d_pool2"),
        LayerSpec("fuse", "cconv", param="fuse"),
        LayerSpec(HEAD, "riap_head"),
        LayerSpec("probs", "softmax"),
    )
    params = NetworkParams(
        layers={
            "conv1": cs.params.layers["conv1"],
            "conv2": cs.params.layers["conv2"],
            "conv3": cs.params.layers["conv3"],
            "up1": init_layer(rng, 48, 24, 2, transposed=True),
            "up2": init_layer(rng, 48, 24, 2, transposed=True),
            "fuse": init_layer(rng, 48, n_cls, 1),
        },
        head=initial_head(),
        frozen={"conv1", "conv2", "conv3"},
    )
    taps = {"feat24": "d_pool2", "skip24": "e_relu2", "decoder24": "up_relu2"}
    return Network(NetworkSpec("crpm", cs.spec.input_channels, n_cls, layers, taps), params)


def crpm_forward(net: Network, tile: CTensor) -> FloatArray:
    """Per-pixel class probabilities [n_cls, 128, 128] of a [C, 128, 128] tile (or a batch of them)"""
    _require(net, "crpm")
    if tile.height != TILE_WINDOW or tile.width != TILE_WINDOW:
        raise DimensionError(f"CRPM tiles must be {TILE_WINDOW}x{TILE_WINDOW}, got {tile.height}x{tile.width}")
    probs: FloatArray = net.forward(tile, inference=True).output
    return probs


def _predict_patchwise(net: Network, features: CTensor) -> FloatArray:
    """
    One image row of patches per forward pass on the scene mirror-extended by 5 pixels. Scenes of 5 pixels or
    fewer keep reflecting back and forth, as the dense tiles do.
    """
    widths = (SCENE_MARGIN,) * 4
    padded = features.map_planes(lambda p: _spatial_pad(p, widths, "reflect"))
    top = SCENE_MARGIN - PATCH_OFFSET
    rows = []
    for row in range(features.height):
        band = padded[:, top + row : top + row + PATCH_SIZE, top : top + features.width + PATCH_SIZE - 1]
        windows = band.map_planes(
            lambda p: np.ascontiguousarray(sliding_window_view(p, PATCH_SIZE, axis=2).transpose(2, 0, 1, 3))
        )
        rows.append(patch_probabilities(net, windows))
    return np.stack(rows).transpose(2, 0, 1)  # type: ignore[no-any-return]


def sliding_inference(
    tile_fn: Callable[[CTensor], FloatArray],
    features: CTensor,
    window: int = TILE_WINDOW,
    stride: int = TILE_STRIDE,
    halo: tuple[int, int] = (0, 0),
    fit: bool = False,
) -> FloatArray:
    """
    Evaluate ``tile_fn`` on every window of a [C, H, W] scene and average overlapping per-pixel probabilities,
    renormalized per pixel. Tiles run on up to CRPM_THREADS workers; the reduction is in tile order.
    """
    tile_set = tile_scene(features, window, stride, halo, fit)
    with ThreadPoolExecutor(max_workers=get_thread_count()) as executor:
        outputs = list(executor.map(lambda tile: tile_fn(tile.data), tile_set.tiles))
    logger.info("Evaluated %d tiles", len(outputs))
    blended = reassemble(outputs, tile_set)
    return blended / blended.sum(axis=0, keepdims=True)  # type: ignore[no-any-return]


def predict_scene(net: Network, features: CTensor, window: int = TILE_WINDOW, stride: int = TILE_STRIDE) -> FloatArray:
    """
    Per-pixel class probabilities [n_cls, H, W] of a whole [C, H, W] scene.

    cs runs the patch classifier row by row (the slow reference path). dilated runs non-overlapping dense tiles
    that read a receptive-field halo from the 5-pixel mirror extension, so both agree at every pixel; ``stride``
    does not apply to them. crpm runs 128x128 tiles at ``stride``.
    """
    if features.channels != net.spec.input_channels:
        raise IncompatibleDataError(f"Model expects {net.spec.input_channels} channels, scene has {features.channels}")
    if net.kind == "cs":
        return _predict_patchwise(net, features)
    if net.kind == "dilated":
        before = DENSE_HALO[0]

        def dense_tile(tile: CTensor) -> FloatArray:
            _, probs = dense_forward(net, tile)
            return probs[:, before : tile.height - DENSE_HALO[1], before : tile.width - DENSE_HALO[1]]

        return sliding_inference(dense_tile, features, window, window, halo=DENSE_HALO, fit=True)
    return sliding_inference(lambda tile: crpm_forward(net, tile), features, TILE_WINDOW, stride)


def class_map(probs: FloatArray) -> FloatArray:
    """Internal class index (0-based) per pixel"""
    return probs.argmax(axis=0)  # type: ignore[no-any-return]
