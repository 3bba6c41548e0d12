"""
Differentiable complex-domain operations: cross-convolution, complex ReLU, max-pooling, transposed convolution and
the real/imaginary/amplitude/phase classification head, each paired with its analytic backward pass.

Convolutions are computed as an im2col-style gather followed by an inner product, once per real plane. The complex
cross-convolution is the combination of four such real convolutions:

    real = Conv(X_r, W_r) - Conv(X_i, W_i) + b_r
    imag = Conv(X_r, W_i) + Conv(X_i, W_r) + b_i
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.typing import NDArray

from crpmnet.engine.ctensor import CTensor, FloatArray, _spatial_pad, polar
from crpmnet.shared.constants import EPS_PHASE
from crpmnet.shared.exceptions import DimensionError

logger = logging.getLogger(__name__)

Padding = tuple[int, int, int, int]
IndexArray = NDArray[np.int64]


@dataclass(frozen=True)
class CConvLayer:
    """
    Complex kernel W = W_r + jW_i with complex bias.

    Convolution kernels are laid out [out_channels, in_channels, k, k]; transposed-convolution kernels are laid out
    [in_channels, out_channels, 2, 2]. Padding is (top, bottom, left, right).
    """

    weights: CTensor
    bias: CTensor
    stride: int = 1
    dilation: int = 1
    padding: Padding = (0, 0, 0, 0)
    transposed: bool = False

    def __post_init__(self) -> None:
        if self.weights.real.ndim != 4:
            raise DimensionError(f"Kernel must be 4-dimensional, got shape {self.weights.shape}")
        kh, kw = self.weights.shape[2:]
        if kh != kw:
            raise DimensionError(f"Kernel must be square, got {kh}x{kw}")
        if self.transposed:
            if kh != 2:
                raise DimensionError(f"Transposed convolution kernels are 2x2, got {kh}x{kw}")
        elif kh % 2 == 0:
            raise DimensionError(f"Convolution kernels have odd size, got {kh}x{kw}")
        if self.stride < 1 or self.dilation < 1:
            raise DimensionError("Stride and dilation must be >= 1")
        if min(self.padding) < 0:
            raise DimensionError("Padding must be non-negative")
        if self.bias.shape != (self.out_channels,):
            raise DimensionError(f"Bias shape {self.bias.shape} does not match {self.out_channels} output channels")

    @property
    def in_channels(self) -> int:
        return int(self.weights.shape[0] if self.transposed else self.weights.shape[1])

    @property
    def out_channels(self) -> int:
        return int(self.weights.shape[1] if self.transposed else self.weights.shape[0])

    @property
    def kernel_size(self) -> int:
        return int(self.weights.shape[2])

    @property
    def parameter_count(self) -> int:
        """2 * (k^2 * c_in * c_out) + 2 * c_out"""
        return 2 * self.kernel_size**2 * self.in_channels * self.out_channels + 2 * self.out_channels

    def with_values(self, weights: CTensor, bias: CTensor) -> CConvLayer:
        """Same geometry, new values"""
        return CConvLayer(weights, bias, self.stride, self.dilation, self.padding, self.transposed)


@dataclass(frozen=True)
class GradBundle:
    """Gradients of a layer. ``grad_input`` is None when the caller did not ask for it."""

    grad_input: CTensor | None
    grad_weights: CTensor
    grad_bias: CTensor


@dataclass(frozen=True)
class PoolRecord:
    """
    Pooled output plus, per output element and per plane, the in-plane flat index (row * width + col) of the
    selected input element.
    """

    output: CTensor
    argmax_real: IndexArray
    argmax_imag: IndexArray
    input_shape: tuple[int, ...]


def _as_batch(x: CTensor) -> tuple[CTensor, bool]:
    if x.real.ndim == 4:
        return x, False
    if x.real.ndim == 3:
        return CTensor(x.real[None], x.imag[None]), True
    raise DimensionError(f"Expected [C, H, W] or [N, C, H, W], got shape {x.shape}")


def _unbatch(x: CTensor, squeeze: bool) -> CTensor:
    return CTensor(x.real[0], x.imag[0]) if squeeze else x


def conv_output_size(extent: int, kernel: int, stride: int, dilation: int, pad_before: int, pad_after: int) -> int:
    """Standard dilated-convolution size formula"""
    return (extent + pad_before + pad_after - dilation * (kernel - 1) - 1) // stride + 1


def pool_output_size(extent: int, window: int, stride: int, dilation: int) -> int:
    """Stride 1 keeps the extent; larger strides drop the trailing partial window"""
    if stride == 1:
        return extent
    return (extent - dilation * (window - 1) - 1) // stride + 1


def _gather(xp: FloatArray, kernel: int, stride: int, dilation: int) -> FloatArray:
    """Windows [N, C, Ho, Wo, k, k] of an already padded [N, C, H, W] plane"""
    span = dilation * (kernel - 1) + 1
    if xp.shape[2] < span or xp.shape[3] < span:
        raise DimensionError(f"Padded extent {xp.shape[2]}x{xp.shape[3]} is smaller than the kernel extent {span}")
    windows = sliding_window_view(xp, (span, span), axis=(2, 3))
    return windows[:, :, ::stride, ::stride, ::dilation, ::dilation]  # type: ignore[no-any-return]


@dataclass(frozen=True)
class Columns:
    """im2col matrix [N * Ho * Wo, C * k * k] of one plane. Gathered once, shared by every product with it."""

    matrix: FloatArray
    batch: int
    height: int
    width: int
    channels: int
    kernel: int

    @classmethod
    def gather(cls, xp: FloatArray, kernel: int, stride: int, dilation: int) -> Columns:
        windows = _gather(xp, kernel, stride, dilation)
        n, c, ho, wo = windows.shape[:4]
        matrix = windows.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kernel * kernel)
        return cls(matrix, n, ho, wo, c, kernel)

    def contract(self, w: FloatArray) -> FloatArray:
        """Inner product of every window with a [O, C, k, k] kernel, as [N, O, Ho, Wo]"""
        out = self.matrix @ w.reshape(w.shape[0], -1).T
        return np.ascontiguousarray(out.reshape(self.batch, self.height, self.width, w.shape[0]).transpose(0, 3, 1, 2))

    def weight_grad(self, grad: FloatArray) -> FloatArray:
        """Kernel gradient [O, C, k, k] for an upstream [N, O, Ho, Wo] gradient"""
        g = grad.transpose(0, 2, 3, 1).reshape(-1, grad.shape[1])
        return (g.T @ self.matrix).reshape(grad.shape[1], self.channels, self.kernel, self.kernel)


def real_conv2d(x: FloatArray, w: FloatArray, stride: int = 1, dilation: int = 1, padding: Padding = (0, 0, 0, 0)) -> FloatArray:
    """
    Real convolution (inner product of kernel and window) of a [N, C, H, W] plane with a [O, C, k, k] kernel,
    zero padded.
    """
    xp = _spatial_pad(x, padding, "constant")
    return Columns.gather(xp, w.shape[2], stride, dilation).contract(w)


def _input_grad(grad: FloatArray, w: FloatArray, x_shape: tuple[int, ...], stride: int, dilation: int, padding: Padding) -> FloatArray:
    top, bottom, left, right = padding
    n, c, h, wd = x_shape
    ho, wo = grad.shape[2:]
    kernel = w.shape[2]
    cols = np.tensordot(grad, w, axes=([1], [0]))  # [N, Ho, Wo, C, k, k]
    dxp = np.zeros((n, c, h + top + bottom, wd + left + right))
    for a in range(kernel):
        for b in range(kernel):
            r0, c0 = a * dilation, b * dilation
            dxp[:, :, r0 : r0 + (ho - 1) * stride + 1 : stride, c0 : c0 + (wo - 1) * stride + 1 : stride] += cols[
                :, :, :, :, a, b
            ].transpose(0, 3, 1, 2)
    return dxp[:, :, top : top + h, left : left + wd]


def _check_conv(x: CTensor, layer: CConvLayer) -> None:
    if layer.transposed:
        raise DimensionError("cconv2d needs a convolution layer, got a transposed one")
    if x.channels != layer.in_channels:
        raise DimensionError(f"Input has {x.channels} channels, layer expects {layer.in_channels}")
    top, bottom, left, right = layer.padding
    k, s, d = layer.kernel_size, layer.stride, layer.dilation
    if conv_output_size(x.height, k, s, d, top, bottom) < 1 or conv_output_size(x.width, k, s, d, left, right) < 1:
        raise DimensionError(f"Input {x.height}x{x.width} yields an empty output for kernel {k} dilation {d}")


def cconv2d(x: CTensor, layer: CConvLayer) -> CTensor:
    """Complex cross-convolution: four staggered real convolutions combined with the complex product signs"""
    _check_conv(x, layer)
    xb, squeeze = _as_batch(x)
    k, s, d, pad = layer.kernel_size, layer.stride, layer.dilation, layer.padding
    col_r = Columns.gather(_spatial_pad(xb.real, pad, "constant"), k, s, d)
    col_i = Columns.gather(_spatial_pad(xb.imag, pad, "constant"), k, s, d)
    w_r, w_i = layer.weights.real, layer.weights.imag
    rr = col_r.contract(w_r)
    ii = col_i.contract(w_i)
    ri = col_r.contract(w_i)
    ir = col_i.contract(w_r)
    out_real = rr - ii + layer.bias.real[None, :, None, None]
    out_imag = ri + ir + layer.bias.imag[None, :, None, None]
    return _unbatch(CTensor(out_real, out_imag), squeeze)


def cconv2d_backward(grad_out: CTensor, x: CTensor, layer: CConvLayer, need_input: bool = True) -> GradBundle:
    """
    Gradients of cconv2d. With g = grad_out:

        dW_r = Conv'(X_r, g_r) + Conv'(X_i, g_i)      dX_r = Conv^T(g_r, W_r) + Conv^T(g_i, W_i)
        dW_i = Conv'(X_r, g_i) - Conv'(X_i, g_r)      dX_i = Conv^T(g_i, W_r) - Conv^T(g_r, W_i)
    """
    _check_conv(x, layer)
    xb, squeeze = _as_batch(x)
    gb, _ = _as_batch(grad_out)
    k, s, d, pad = layer.kernel_size, layer.stride, layer.dilation, layer.padding
    expected = (
        xb.shape[0],
        layer.out_channels,
        conv_output_size(xb.height, k, s, d, pad[0], pad[1]),
        conv_output_size(xb.width, k, s, d, pad[2], pad[3]),
    )
    if gb.shape != expected:
        raise DimensionError(f"Upstream gradient {grad_out.shape} does not match the output shape {expected}")
    col_r = Columns.gather(_spatial_pad(xb.real, pad, "constant"), k, s, d)
    col_i = Columns.gather(_spatial_pad(xb.imag, pad, "constant"), k, s, d)
    g_r, g_i = gb.real, gb.imag
    grad_weights = CTensor(
        col_r.weight_grad(g_r) + col_i.weight_grad(g_i),
        col_r.weight_grad(g_i) - col_i.weight_grad(g_r),
    )
    grad_bias = CTensor(g_r.sum(axis=(0, 2, 3)), g_i.sum(axis=(0, 2, 3)))
    grad_input = None
    if need_input:
        w_r, w_i = layer.weights.real, layer.weights.imag
        shape = xb.real.shape
        grad_input = _unbatch(
            CTensor(
                _input_grad(g_r, w_r, shape, s, d, pad) + _input_grad(g_i, w_i, shape, s, d, pad),
                _input_grad(g_i, w_r, shape, s, d, pad) - _input_grad(g_r, w_i, shape, s, d, pad),
            ),
            squeeze,
        )
    return GradBundle(grad_input, grad_weights, grad_bias)


def crelu(x: CTensor) -> CTensor:
    """[y_r]_+ + j[y_i]_+"""
    return CTensor(np.maximum(x.real, 0.0), np.maximum(x.imag, 0.0))


def crelu_backward(grad_out: CTensor, x: CTensor) -> CTensor:
    return CTensor(np.where(x.real > 0, grad_out.real, 0.0), np.where(x.imag > 0, grad_out.imag, 0.0))


def _pool_input(plane: FloatArray, window: int, stride: int, dilation: int) -> tuple[FloatArray, int, int]:
    h, w = plane.shape[2:]
    span = dilation * (window - 1) + 1
    if stride == 1:
        # replicate bottom/right so the dense output keeps the input extent
        padded = _spatial_pad(plane, (0, span - 1, 0, span - 1), "edge")
    else:
        if h < span or w < span:
            raise DimensionError(f"A {window}x{window} pool does not fit a {h}x{w} map")
        # trailing rows/cols that do not fill a window are dropped
        padded = plane
    return padded, pool_output_size(h, window, stride, dilation), pool_output_size(w, window, stride, dilation)


def _running_max(
    padded: FloatArray, window: int, stride: int, dilation: int, ho: int, wo: int, arg: IndexArray | None = None
) -> FloatArray:
    """Maximum over the window offsets; ``arg``, when given, receives the row-major offset of the winner"""
    out = np.full(padded.shape[:2] + (ho, wo), -np.inf)
    for a in range(window):
        for b in range(window):
            top, left = a * dilation, b * dilation
            view = padded[:, :, top : top + stride * (ho - 1) + 1 : stride, left : left + stride * (wo - 1) + 1 : stride]
            # strict comparison keeps the first maximum in row-major scan order
            better = view > out
            np.copyto(out, view, where=better)
            if arg is not None:
                np.copyto(arg, a * window + b, where=better)
    return out


def _pool_plane(plane: FloatArray, window: int, stride: int, dilation: int) -> tuple[FloatArray, IndexArray]:
    h, w = plane.shape[2:]
    padded, ho, wo = _pool_input(plane, window, stride, dilation)
    arg = np.zeros(plane.shape[:2] + (ho, wo), dtype=np.int64)
    out = _running_max(padded, window, stride, dilation, ho, wo, arg)
    rows = np.minimum(np.arange(ho)[:, None] * stride + (arg // window) * dilation, h - 1)
    cols = np.minimum(np.arange(wo)[None, :] * stride + (arg % window) * dilation, w - 1)
    return out, (rows * w + cols).astype(np.int64)


def _check_pool(window: int, stride: int, dilation: int) -> None:
    if window < 1 or stride not in (1, 2) or dilation < 1:
        raise DimensionError(f"Unsupported pooling geometry window={window} stride={stride} dilation={dilation}")


def cmaxpool2d(x: CTensor, window: int = 2, stride: int = 2, dilation: int = 1) -> PoolRecord:
    """
    Max-pooling applied to the real and imaginary planes independently, each with its own argmax.

    Stride 1 pads bottom/right by (window - 1) * dilation replicated pixels so the output keeps the input extent.
    """
    _check_pool(window, stride, dilation)
    xb, squeeze = _as_batch(x)
    out_r, arg_r = _pool_plane(xb.real, window, stride, dilation)
    out_i, arg_i = _pool_plane(xb.imag, window, stride, dilation)
    if squeeze:
        return PoolRecord(CTensor(out_r[0], out_i[0]), arg_r[0], arg_i[0], x.shape)
    return PoolRecord(CTensor(out_r, out_i), arg_r, arg_i, x.shape)


def cmaxpool2d_values(x: CTensor, window: int = 2, stride: int = 2, dilation: int = 1) -> CTensor:
    """Output of cmaxpool2d without the argmax bookkeeping, for inference"""
    _check_pool(window, stride, dilation)
    xb, squeeze = _as_batch(x)
    planes = []
    for plane in (xb.real, xb.imag):
        padded, ho, wo = _pool_input(plane, window, stride, dilation)
        planes.append(_running_max(padded, window, stride, dilation, ho, wo))
    return _unbatch(CTensor(*planes), squeeze)


def _route(grad: FloatArray, argmax: IndexArray, shape: tuple[int, ...]) -> FloatArray:
    n, c, h, w = shape
    base = (np.arange(n * c, dtype=np.int64) * (h * w)).reshape(n, c, 1, 1)
    routed = np.bincount((argmax + base).ravel(), weights=grad.ravel(), minlength=n * c * h * w)
    return routed.reshape(shape)


def cmaxpool2d_backward(grad_out: CTensor, record: PoolRecord) -> CTensor:
    """Send every upstream gradient component to its recorded argmax, accumulating on collisions"""
    if grad_out.shape != record.output.shape:
        raise DimensionError(f"Upstream gradient {grad_out.shape} does not match pooled shape {record.output.shape}")
    squeeze = len(record.input_shape) == 3
    shape = (1, *record.input_shape) if squeeze else record.input_shape
    g_r = grad_out.real[None] if squeeze else grad_out.real
    g_i = grad_out.imag[None] if squeeze else grad_out.imag
    a_r = record.argmax_real[None] if squeeze else record.argmax_real
    a_i = record.argmax_imag[None] if squeeze else record.argmax_imag
    result = CTensor(_route(g_r, a_r, shape), _route(g_i, a_i, shape))
    return _unbatch(result, squeeze)


def _upsample(x: FloatArray, w: FloatArray) -> FloatArray:
    """Real transposed convolution, 2x2 kernel [C_in, C_out, 2, 2], stride 2"""
    n, _, h, wd = x.shape
    cols = np.tensordot(x, w, axes=([1], [0]))  # [N, H, W, C_out, 2, 2]
    return np.ascontiguousarray(cols.transpose(0, 3, 1, 4, 2, 5)).reshape(n, w.shape[1], 2 * h, 2 * wd)


def _downsample(g: FloatArray, w: FloatArray) -> FloatArray:
    """Real stride-2 convolution with a 2x2 kernel [C_in, C_out, 2, 2], mapping C_out channels to C_in"""
    n, c, h2, w2 = g.shape
    blocks = g.reshape(n, c, h2 // 2, 2, w2 // 2, 2)
    out = np.tensordot(blocks, w, axes=([1, 3, 5], [1, 2, 3]))  # [N, H, W, C_in]
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _upsample_weight_grad(x: FloatArray, g: FloatArray) -> FloatArray:
    n, c, h2, w2 = g.shape
    blocks = g.reshape(n, c, h2 // 2, 2, w2 // 2, 2)
    return np.tensordot(x, blocks, axes=([0, 2, 3], [0, 2, 4]))


def _check_transposed(x: CTensor, layer: CConvLayer, upsample: int) -> None:
    if not layer.transposed or upsample != 2:
        raise DimensionError("ctransconv2d needs a 2x2 transposed layer and an upsampling factor of 2")
    if x.channels != layer.in_channels:
        raise DimensionError(f"Input has {x.channels} channels, layer expects {layer.in_channels}")


def ctransconv2d(x: CTensor, layer: CConvLayer, upsample: int = 2) -> CTensor:
    """
    Transposed complex cross-convolution doubling the spatial extent. An input value v spreads to a 2x2 block of
    complex products v * w_pq.
    """
    _check_transposed(x, layer, upsample)
    xb, squeeze = _as_batch(x)
    w_r, w_i = layer.weights.real, layer.weights.imag
    out_real = _upsample(xb.real, w_r) - _upsample(xb.imag, w_i) + layer.bias.real[None, :, None, None]
    out_imag = _upsample(xb.real, w_i) + _upsample(xb.imag, w_r) + layer.bias.imag[None, :, None, None]
    return _unbatch(CTensor(out_real, out_imag), squeeze)


def cconv2d_stride2(a: CTensor, layer: CConvLayer) -> CTensor:
    """
    The stride-2 complex cross-convolution that ``ctransconv2d`` transposes: same 2x2 kernel, channels mapped
    back from the layer's outputs to its inputs, no bias.
    """
    if not layer.transposed:
        raise DimensionError("cconv2d_stride2 reads the kernel of a transposed layer")
    ab, squeeze = _as_batch(a)
    if ab.channels != layer.out_channels or ab.height % 2 or ab.width % 2:
        raise DimensionError(f"Cannot downsample {a.shape} with a kernel of shape {layer.weights.shape}")
    w_r, w_i = layer.weights.real, layer.weights.imag
    out_real = _downsample(ab.real, w_r) - _downsample(ab.imag, w_i)
    out_imag = _downsample(ab.real, w_i) + _downsample(ab.imag, w_r)
    return _unbatch(CTensor(out_real, out_imag), squeeze)


def ctransconv2d_backward(grad_out: CTensor, x: CTensor, layer: CConvLayer, need_input: bool = True) -> GradBundle:
    _check_transposed(x, layer, 2)
    xb, squeeze = _as_batch(x)
    gb, _ = _as_batch(grad_out)
    expected = (xb.shape[0], layer.out_channels, 2 * xb.height, 2 * xb.width)
    if gb.shape != expected:
        raise DimensionError(f"Upstream gradient {grad_out.shape} does not match the output shape {expected}")
    g_r, g_i = gb.real, gb.imag
    grad_weights = CTensor(
        _upsample_weight_grad(xb.real, g_r) + _upsample_weight_grad(xb.imag, g_i),
        _upsample_weight_grad(xb.real, g_i) - _upsample_weight_grad(xb.imag, g_r),
    )
    grad_bias = CTensor(g_r.sum(axis=(0, 2, 3)), g_i.sum(axis=(0, 2, 3)))
    grad_input = None
    if need_input:
        w_r, w_i = layer.weights.real, layer.weights.imag
        grad_input = _unbatch(
            CTensor(
                _downsample(g_r, w_r) + _downsample(g_i, w_i),
                _downsample(g_i, w_r) - _downsample(g_r, w_i),
            ),
            squeeze,
        )
    return GradBundle(grad_input, grad_weights, grad_bias)


def riap_head(z: CTensor, head: FloatArray) -> FloatArray:
    """
    Real score per class channel: w_r * re + w_i * im + w_m * |z| + w_p * arg(z) + b.
    ``head`` holds (w_r, w_i, w_m, w_p, b), shared by every class channel.
    """
    view = polar(z)
    w_r, w_i, w_m, w_p, bias = (float(v) for v in head)
    return w_r * z.real + w_i * z.imag + w_m * view.magnitude + w_p * view.phase + bias  # type: ignore[no-any-return]


def riap_head_backward(grad_scores: FloatArray, z: CTensor, head: FloatArray) -> tuple[CTensor, FloatArray]:
    """Gradients w.r.t. z and the five head parameters. Magnitude and phase terms vanish where |z| < 1e-12."""
    view = polar(z)
    w_r, w_i, w_m, w_p, _ = (float(v) for v in head)
    mag = view.magnitude
    defined = mag >= EPS_PHASE
    safe = np.where(defined, mag, 1.0)
    d_mag_re = np.where(defined, z.real / safe, 0.0)
    d_mag_im = np.where(defined, z.imag / safe, 0.0)
    d_phase_re = np.where(defined, -z.imag / safe**2, 0.0)
    d_phase_im = np.where(defined, z.real / safe**2, 0.0)
    grad_z = CTensor(
        grad_scores * (w_r + w_m * d_mag_re + w_p * d_phase_re),
        grad_scores * (w_i + w_m * d_mag_im + w_p * d_phase_im),
    )
    grad_head = np.array(
        [
            np.sum(grad_scores * z.real),
            np.sum(grad_scores * z.imag),
            np.sum(grad_scores * mag),
            np.sum(grad_scores * view.phase),
            np.sum(grad_scores),
        ]
    )
    return grad_z, grad_head


def softmax_probs(scores: FloatArray, axis: int = 0) -> FloatArray:
    """Max-subtracted exponential normalization along the class axis"""
    shifted = scores - scores.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=axis, keepdims=True)  # type: ignore[no-any-return]
