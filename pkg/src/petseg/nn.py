"""Minimal differentiable tensor engine on float64 numpy arrays.

Tensors are plain ndarrays in NCHW layout (batch, channels, height, width).
Convolution uses cross-correlation semantics (no kernel flip), zero padding,
and dilated taps at offsets ``i * dilation``; a dilation of 1 is ordinary
convolution.  Gradients are hand-derived per operation and every one of them
is expected to pass the central-finite-difference checker in this module.

Transposed convolution is implemented as the exact adjoint of the
convolution input-gradient map: each input element copies a scaled kernel
into the output at stride offsets, overlaps summing.  With ``weights`` of
shape (in_c, out_c, kh, kw), stride s, dilation d and padding p, the output
spatial size is ``(in - 1) * s + (k - 1) * d + 1 - 2 * p``.

All functions are pure; the Adam optimizer and per-model activation caches
are the only mutable state in the package's numerical path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Tensor4 = np.ndarray  # (n, c, h, w), float64


@dataclass(eq=False)
class ConvParams:
    """Convolution weights plus geometry.

    ``weights`` is (out_c, in_c, kh, kw) for conv2d and is interpreted as
    (in_c, out_c, kh, kw) by transposed_conv2d, so one parameter set can be
    used on either side of the adjoint pair.
    """

    weights: np.ndarray
    bias: np.ndarray
    stride: int = 1
    dilation: int = 1
    padding: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 4:
            raise ValueError("weights must be 4-D (out_c, in_c, kh, kw)")
        if self.bias.ndim != 1:
            raise ValueError("bias must be 1-D")
        if self.stride < 1 or self.dilation < 1 or self.padding < 0:
            raise ValueError("stride and dilation must be >= 1, padding >= 0")


def _check_tensor4(x: np.ndarray, name: str = "input") -> None:
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        raise ValueError(f"{name} must be a 4-D (n, c, h, w) array")


def conv_output_size(size: int, k: int, stride: int, dilation: int, padding: int) -> int:
    """Spatial output size of conv2d along one axis."""
    return (size + 2 * padding - ((k - 1) * dilation + 1)) // stride + 1


def _gather_cols(
    x: np.ndarray,
    kh: int,
    kw: int,
    stride: int,
    dilation: int,
    pad: tuple[int, int],
) -> tuple[np.ndarray, int, int]:
    """im2col: patches of a padded NCHW tensor as (n, oh, ow, c*kh*kw)."""
    ph, pw = pad
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if ph or pw else x
    n, c, hp, wp = xp.shape
    oh = (hp - ((kh - 1) * dilation + 1)) // stride + 1
    ow = (wp - ((kw - 1) * dilation + 1)) // stride + 1
    rows = np.arange(oh)[:, None] * stride + np.arange(kh)[None, :] * dilation
    cols = np.arange(ow)[:, None] * stride + np.arange(kw)[None, :] * dilation
    pat = xp[:, :, rows[:, None, :, None], cols[None, :, None, :]]
    pat = pat.transpose(0, 2, 3, 1, 4, 5)  # (n, oh, ow, c, kh, kw)
    return pat.reshape(n, oh, ow, c * kh * kw), oh, ow


def _dilate_stride(x: np.ndarray, stride: int) -> np.ndarray:
    """Insert stride-1 zeros between neighbouring spatial elements."""
    if stride == 1:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, (h - 1) * stride + 1, (w - 1) * stride + 1))
    out[:, :, ::stride, ::stride] = x
    return out


# ---------------------------------------------------------------------------
# Convolution


def conv2d(x: Tensor4, p: ConvParams) -> Tensor4:
    """Strided, dilated cross-correlation with zero padding."""
    _check_tensor4(x)
    oc, ic, kh, kw = p.weights.shape
    if x.shape[1] != ic:
        raise ValueError(f"expected {ic} input channels, got {x.shape[1]}")
    if p.bias.shape != (oc,):
        raise ValueError("bias length must equal the output channel count")
    oh = conv_output_size(x.shape[2], kh, p.stride, p.dilation, p.padding)
    ow = conv_output_size(x.shape[3], kw, p.stride, p.dilation, p.padding)
    if oh < 1 or ow < 1:
        raise ValueError(
            f"non-positive output size {oh}x{ow} for input {x.shape[2]}x{x.shape[3]}"
        )
    cols, oh, ow = _gather_cols(x, kh, kw, p.stride, p.dilation, (p.padding, p.padding))
    out = cols @ p.weights.reshape(oc, -1).T + p.bias
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d_backward(
    x: Tensor4, p: ConvParams, grad_out: Tensor4
) -> tuple[Tensor4, np.ndarray, np.ndarray]:
    """Exact gradients of conv2d w.r.t. input, weights, and bias."""
    _check_tensor4(x)
    _check_tensor4(grad_out, "grad_out")
    oc, ic, kh, kw = p.weights.shape
    n, _, h, w = x.shape
    oh = conv_output_size(h, kh, p.stride, p.dilation, p.padding)
    ow = conv_output_size(w, kw, p.stride, p.dilation, p.padding)
    if grad_out.shape != (n, oc, oh, ow):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match output {(n, oc, oh, ow)}"
        )

    grad_b = grad_out.sum(axis=(0, 2, 3))

    cols, _, _ = _gather_cols(x, kh, kw, p.stride, p.dilation, (p.padding, p.padding))
    g2 = grad_out.transpose(0, 2, 3, 1).reshape(-1, oc)
    grad_w = (g2.T @ cols.reshape(-1, ic * kh * kw)).reshape(oc, ic, kh, kw)

    # Input gradient: correlate the zero-stuffed output gradient with the
    # flipped, channel-swapped kernel, then crop the padding border.
    wt = p.weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # (ic, oc, kh, kw)
    g = _dilate_stride(grad_out, p.stride)
    colsg, fh, fw = _gather_cols(
        g, kh, kw, 1, p.dilation, ((kh - 1) * p.dilation, (kw - 1) * p.dilation)
    )
    full = (colsg @ wt.reshape(ic, -1).T).transpose(0, 3, 1, 2)
    grad_xp = np.zeros((n, ic, h + 2 * p.padding, w + 2 * p.padding))
    grad_xp[:, :, :fh, :fw] = full
    pp = p.padding
    grad_x = np.ascontiguousarray(grad_xp[:, :, pp : pp + h, pp : pp + w])
    return grad_x, grad_w, grad_b


# ---------------------------------------------------------------------------
# Transposed convolution


def transposed_conv2d(x: Tensor4, p: ConvParams) -> Tensor4:
    """Fractionally strided convolution: scatter a scaled kernel per input.

    Exactly the adjoint of conv2d's input-gradient map for the same kernel;
    ``p.weights`` axes are read as (in_c, out_c, kh, kw).
    """
    _check_tensor4(x)
    ci, co, kh, kw = p.weights.shape
    if x.shape[1] != ci:
        raise ValueError(f"expected {ci} input channels, got {x.shape[1]}")
    if p.bias.shape != (co,):
        raise ValueError("bias length must equal the output channel count")
    wt = p.weights[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)  # (co, ci, kh, kw)
    xd = _dilate_stride(x, p.stride)
    cols, fh, fw = _gather_cols(
        xd, kh, kw, 1, p.dilation, ((kh - 1) * p.dilation, (kw - 1) * p.dilation)
    )
    full = (cols @ wt.reshape(co, -1).T).transpose(0, 3, 1, 2)
    pp = p.padding
    if fh - 2 * pp < 1 or fw - 2 * pp < 1:
        raise ValueError("padding consumes the whole transposed-conv output")
    out = full[:, :, pp : fh - pp, pp : fw - pp] + p.bias[None, :, None, None]
    return np.ascontiguousarray(out)


def transposed_conv2d_backward(
    x: Tensor4, p: ConvParams, grad_out: Tensor4
) -> tuple[Tensor4, np.ndarray, np.ndarray]:
    """Exact gradients of transposed_conv2d w.r.t. input, weights, and bias."""
    _check_tensor4(x)
    _check_tensor4(grad_out, "grad_out")
    ci, co, kh, kw = p.weights.shape
    n, _, h, w = x.shape
    grad_b = grad_out.sum(axis=(0, 2, 3))
    colsg, gh, gw = _gather_cols(
        grad_out, kh, kw, p.stride, p.dilation, (p.padding, p.padding)
    )
    if (gh, gw) != (h, w):
        raise ValueError(
            f"grad_out shape {grad_out.shape[2:]} is inconsistent with input {h}x{w}"
        )
    grad_x = (colsg @ p.weights.reshape(ci, -1).T).transpose(0, 3, 1, 2)
    x2 = x.transpose(0, 2, 3, 1).reshape(-1, ci)
    grad_w = (x2.T @ colsg.reshape(-1, co * kh * kw)).reshape(ci, co, kh, kw)
    return np.ascontiguousarray(grad_x), grad_w, grad_b


# ---------------------------------------------------------------------------
# Pooling and activation


def maxpool2(x: Tensor4) -> tuple[Tensor4, np.ndarray]:
    """2x2 stride-2 max pooling; returns output plus window argmax indices.

    Ties resolve to the first element in row-major window order, and the
    backward pass routes gradient to that stored index only.
    """
    _check_tensor4(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 requires even spatial dims, got {h}x{w}")
    win = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(idx: np.ndarray, grad_out: Tensor4) -> Tensor4:
    """Scatter output gradient back to the recorded argmax positions."""
    _check_tensor4(grad_out, "grad_out")
    n, c, oh, ow = grad_out.shape
    buf = np.zeros((n, c, oh, ow, 4))
    np.put_along_axis(buf, idx[..., None], grad_out[..., None], axis=-1)
    return (
        buf.reshape(n, c, oh, ow, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, 2 * oh, 2 * ow)
    )


def relu(x: Tensor4) -> Tensor4:
    return np.maximum(x, 0.0)


def relu_backward(x: Tensor4, grad_out: Tensor4) -> Tensor4:
    # subgradient at 0 is taken as 0
    return grad_out * (x > 0)


# ---------------------------------------------------------------------------
# Fixed bilinear upsampling kernels


def bilinear_kernel(factor: int, channels: int) -> ConvParams:
    """Fixed bilinear upsampling weights for transposed_conv2d.

    Kernel size is ``2f - (f mod 2)`` with 1-D weights
    ``w[i] = 1 - |i - c| / f`` about the kernel centre; the 2-D kernel is
    their outer product, placed on the channel diagonal only.  Used with
    stride = factor and the returned padding, the output is exactly
    ``factor`` times the input size and interior pixels of a constant image
    are preserved (the weights form a partition of unity).
    """
    if factor < 1:
        raise ValueError(f"upsampling factor must be >= 1, got {factor}")
    if channels < 1:
        raise ValueError("channel count must be >= 1")
    size = 2 * factor - (factor % 2)
    center = (size - 1) / 2.0
    w1 = 1.0 - np.abs(np.arange(size) - center) / factor
    k2 = np.outer(w1, w1)
    weights = np.zeros((channels, channels, size, size))
    for ch in range(channels):
        weights[ch, ch] = k2
    return ConvParams(
        weights=weights,
        bias=np.zeros(channels),
        stride=factor,
        dilation=1,
        padding=(size - factor) // 2,
    )


# ---------------------------------------------------------------------------
# Loss


@dataclass(frozen=True, eq=False)
class LossOutput:
    loss: float
    grad_logits: Tensor4


def softmax_cross_entropy(logits: Tensor4, labels: np.ndarray) -> LossOutput:
    """Mean per-pixel softmax cross-entropy and its logit gradient.

    ``labels`` is an (n, h, w) integer class map.  The softmax is stabilized
    by max subtraction; the gradient is (softmax - onehot) / pixel_count.
    """
    _check_tensor4(logits, "logits")
    n, c, h, w = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n, h, w):
        raise ValueError(f"labels shape {labels.shape} must be {(n, h, w)}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must lie in [0, {c - 1}]")
    lab = labels.astype(np.int64)[:, None, :, :]

    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    n_px = n * h * w
    loss = float(-np.take_along_axis(logp, lab, axis=1).sum() / n_px)

    grad = np.exp(logp)
    picked = np.take_along_axis(grad, lab, axis=1) - 1.0
    np.put_along_axis(grad, lab, picked, axis=1)
    grad /= n_px
    return LossOutput(loss=loss, grad_logits=grad)


# ---------------------------------------------------------------------------
# Optimizer


class Adam:
    """Adam with bias correction over a dict of named parameter arrays.

    update: m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2;
            p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

    ``step`` mutates the parameter arrays in place and advances t once per
    call.  Parameters absent from the gradient dict are left untouched.
    """

    def __init__(
        self,
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError("decay rates must lie in [0, 1)")
        if eps <= 0:
            raise ValueError("eps must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name, g in grads.items():
            p = params[name]
            if g.shape != p.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"{name} shape {p.shape}"
                )
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p)
                self.m[name] = m
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# Gradient checking


def grad_check(
    f: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` maps an array to (scalar value, gradient of same shape).  The
    relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=np.float64)
    value, analytic = f(x)
    if not np.isfinite(value) or not np.isfinite(analytic).all():
        raise ValueError("function returned non-finite outputs")
    numeric = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xp.flat[i] += eps
        fp, _ = f(xp)
        xm = x.copy()
        xm.flat[i] -= eps
        fm, _ = f(xm)
        numeric.flat[i] = (fp - fm) / (2.0 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())
