"""2-D convolution and batch normalization as differentiable primitives.

conv2d lowers to im2col + a per-group BLAS matmul; the input-gradient path
scatters columns back with one strided slice-add per kernel tap. Padding may
be asymmetric, which even kernel extents need to keep resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateBatchError, InvalidConfigError, InvalidShapeError
from .tensor import Tensor, _check_same_dtype, result_of


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def _pad_spec(padding) -> tuple[tuple[int, int], tuple[int, int]]:
    """Normalize padding to ((top, bottom), (left, right))."""
    if isinstance(padding, (tuple, list)) and len(padding) == 2 \
            and all(isinstance(p, (tuple, list)) for p in padding):
        (pt, pb), (pl, pr) = padding
        return (int(pt), int(pb)), (int(pl), int(pr))
    ph, pw = _pair(padding)
    return (ph, ph), (pw, pw)


def conv_output_extent(extent: int, kernel: int, stride: int, pad_before: int,
                       pad_after: int) -> int:
    return (extent + pad_before + pad_after - kernel) // stride + 1


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride=1,
           padding=0, groups: int = 1) -> Tensor:
    """Cross-correlate (B, Cin, H, W) with (Cout, Cin/groups, kh, kw).

    Output extent per axis: floor((in + pad_before + pad_after - k)/stride) + 1.
    Differentiable w.r.t. x, w, and bias.
    """
    if x.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D input, got shape {x.shape}")
    if w.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D kernel, got shape {w.shape}")
    _check_same_dtype(x, w, *([bias] if bias is not None else []))
    batch, cin, h_in, w_in = x.shape
    cout, cin_g, kh, kw = w.shape
    if groups < 1 or cin % groups or cout % groups:
        raise InvalidConfigError(f"groups={groups} must divide channels {cin}->{cout}")
    if cin_g != cin // groups:
        raise InvalidConfigError(
            f"kernel expects {cin_g} channels per group, input provides {cin // groups}")
    if bias is not None and bias.shape != (cout,):
        raise InvalidShapeError(f"bias shape {bias.shape} != ({cout},)")
    sh, sw = _pair(stride)
    (pt, pb), (pl, pr) = _pad_spec(padding)
    oh = conv_output_extent(h_in, kh, sh, pt, pb)
    ow = conv_output_extent(w_in, kw, sw, pl, pr)
    if oh < 1 or ow < 1:
        raise InvalidShapeError(f"kernel {kh}x{kw} does not fit input {h_in}x{w_in} with padding")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    og = cout // groups
    # (groups, batch*oh*ow, cin_g*kh*kw), group-major channel layout
    cols = win.reshape(batch, groups, cin_g, oh, ow, kh, kw)
    lhs = np.ascontiguousarray(cols.transpose(1, 0, 3, 4, 2, 5, 6)
                               ).reshape(groups, batch * oh * ow, cin_g * kh * kw)
    wm = w.data.reshape(groups, og, cin_g * kh * kw)
    out = np.matmul(lhs, wm.transpose(0, 2, 1))
    out = out.reshape(groups, batch, oh, ow, og).transpose(1, 0, 4, 2, 3)
    out = np.ascontiguousarray(out).reshape(batch, cout, oh, ow)
    if bias is not None:
        out += bias.data[None, :, None, None]

    parents = (x, w) if bias is None else (x, w, bias)

    def vjp(g):
        gm = g.reshape(batch, groups, og, oh, ow).transpose(1, 0, 3, 4, 2)
        gm = np.ascontiguousarray(gm).reshape(groups, batch * oh * ow, og)
        gw = np.matmul(gm.transpose(0, 2, 1), lhs).reshape(w.shape)
        gcols = np.matmul(gm, wm)  # (groups, batch*oh*ow, cin_g*kh*kw)
        gcols = gcols.reshape(groups, batch, oh, ow, cin_g, kh, kw)
        gcols = gcols.transpose(1, 0, 4, 2, 3, 5, 6).reshape(batch, cin, oh, ow, kh, kw)
        gxp = np.zeros_like(xp)
        for u in range(kh):
            for v in range(kw):
                gxp[:, :, u:u + oh * sh:sh, v:v + ow * sw:sw] += gcols[:, :, :, :, u, v]
        gx = gxp[:, :, pt:pt + h_in, pl:pl + w_in]
        if bias is None:
            return np.ascontiguousarray(gx), gw
        return np.ascontiguousarray(gx), gw, g.sum(axis=(0, 2, 3))

    return result_of(out, parents, vjp)


@dataclass
class RunningStats:
    """Exponential-moving-average channel statistics used in eval mode."""

    mean: np.ndarray
    var: np.ndarray

    @staticmethod
    def neutral(channels: int, dtype=np.float32) -> "RunningStats":
        return RunningStats(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))

    def copy(self) -> "RunningStats":
        return RunningStats(self.mean.copy(), self.var.copy())


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, running: RunningStats,
                training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization of a (B, C, H, W) map.

    Training mode normalizes by the batch statistics over (B, H, W), then
    updates `running` in place (mean with the biased estimate, var with the
    unbiased one). Eval mode is a fixed affine map using `running`.
    """
    if x.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D input, got shape {x.shape}")
    _check_same_dtype(x, gamma, beta)
    batch, channels, height, width = x.shape
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise InvalidShapeError(f"affine params must have shape ({channels},)")
    gam = gamma.data[None, :, None, None]
    bet = beta.data[None, :, None, None]

    if training:
        n_red = batch * height * width
        if n_red < 2:
            raise DegenerateBatchError(
                f"training-mode batchnorm needs >=2 elements per channel, got {n_red}")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
        out = gam * xhat + bet
        running.mean[...] = (1.0 - momentum) * running.mean + momentum * mean
        running.var[...] = (1.0 - momentum) * running.var \
            + momentum * var * (n_red / max(n_red - 1, 1))

        def vjp(g):
            ghat = g * gam
            gmean = ghat.mean(axis=(0, 2, 3), keepdims=True)
            gdot = (ghat * xhat).mean(axis=(0, 2, 3), keepdims=True)
            gx = inv_std[None, :, None, None] * (ghat - gmean - xhat * gdot)
            return (gx.astype(x.dtype),
                    (g * xhat).sum(axis=(0, 2, 3)).astype(x.dtype),
                    g.sum(axis=(0, 2, 3)).astype(x.dtype))
    else:
        inv_std = 1.0 / np.sqrt(running.var + eps)
        xhat = (x.data - running.mean[None, :, None, None]) * inv_std[None, :, None, None]
        out = gam * xhat + bet

        def vjp(g):
            return ((g * gam * inv_std[None, :, None, None]).astype(x.dtype),
                    (g * xhat).sum(axis=(0, 2, 3)).astype(x.dtype),
                    g.sum(axis=(0, 2, 3)).astype(x.dtype))

    return result_of(out.astype(x.dtype), (x, gamma, beta), vjp)


@dataclass
class BnParams:
    """Learnable affine plus running statistics for one batch-norm layer."""

    gamma: Tensor
    beta: Tensor
    running: RunningStats = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.running is None:
            self.running = RunningStats.neutral(self.gamma.size, self.gamma.dtype)

    @staticmethod
    def identity(channels: int, dtype=np.float32, trainable: bool = True) -> "BnParams":
        return BnParams(Tensor(np.ones(channels, dtype=dtype), requires_grad=trainable),
                        Tensor(np.zeros(channels, dtype=dtype), requires_grad=trainable))


def apply_bn(x: Tensor, p: BnParams, training: bool, momentum: float = 0.1,
             eps: float = 1e-5) -> Tensor:
    return batchnorm2d(x, p.gamma, p.beta, p.running, training, momentum, eps)
