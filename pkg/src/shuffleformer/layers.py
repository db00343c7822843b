"""The three learnable sub-layers of a block.

Window attention: per window, split heads, softmax(Q Kᵀ / sqrt(head_dim)) V,
merge heads, output projection. All four projections are 1x1 convolutions.
There is no positional term by default, so attention output is equivariant
under permutations of the tokens inside a window; an optional additive bias
table can be attached for experiments.

Neighbor-window connection: a residual depth-wise convolution whose kernel
extent equals the window size. The MLP is two 1x1 convolutions around an
activation, so it is pointwise in space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .conv import conv2d
from .errors import InvalidConfigError, InvalidShapeError
from .rng import Rng
from .tensor import Tensor, add, gelu, matmul, reshape_permute, scale, softmax_lastdim

INIT_STD = 0.02


@dataclass
class WmsaParams:
    """Projection weights for window attention; each is (C, C, 1, 1)."""

    heads: int
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    bq: Tensor | None = None
    bk: Tensor | None = None
    bv: Tensor | None = None
    bo: Tensor | None = None
    pos_bias: Tensor | None = None  # optional (heads, m*m, m*m) additive table

    @property
    def channels(self) -> int:
        return self.wq.shape[0]


def init_wmsa(channels: int, heads: int, rng: Rng, bias: bool = True,
              dtype=np.float32, pos_bias_tokens: int | None = None) -> WmsaParams:
    if channels % heads:
        raise InvalidConfigError(f"{heads} heads do not divide {channels} channels")

    def w():
        return Tensor(rng.trunc_normal((channels, channels, 1, 1), INIT_STD, dtype=dtype),
                      requires_grad=True)

    def b():
        return Tensor(np.zeros(channels, dtype=dtype), requires_grad=True) if bias else None

    pos = None
    if pos_bias_tokens is not None:
        pos = Tensor(np.zeros((heads, pos_bias_tokens, pos_bias_tokens), dtype=dtype),
                     requires_grad=True)
    return WmsaParams(heads, w(), w(), w(), w(), b(), b(), b(), b(), pos)


def wmsa_forward(wins: Tensor, p: WmsaParams) -> Tensor:
    """Multi-head self-attention inside each (m x m)-token window."""
    if wins.ndim != 4 or wins.shape[2] != wins.shape[3]:
        raise InvalidShapeError(f"expected square windows, got shape {wins.shape}")
    bw, c, m, _ = wins.shape
    if c != p.channels:
        raise InvalidConfigError(f"params built for {p.channels} channels, input has {c}")
    if c % p.heads:
        raise InvalidConfigError(f"{p.heads} heads do not divide {c} channels")
    head_dim = c // p.heads
    tokens = m * m

    q = conv2d(wins, p.wq, p.bq)
    k = conv2d(wins, p.wk, p.bk)
    v = conv2d(wins, p.wv, p.bv)
    # (bw, heads, tokens, head_dim); k stays (bw, heads, head_dim, tokens) as Kᵀ
    q = reshape_permute(q, (bw, p.heads, head_dim, tokens), (0, 1, 3, 2))
    k = reshape_permute(k, (bw, p.heads, head_dim, tokens))
    v = reshape_permute(v, (bw, p.heads, head_dim, tokens), (0, 1, 3, 2))

    logits = scale(matmul(q, k), 1.0 / math.sqrt(head_dim))
    if p.pos_bias is not None:
        if p.pos_bias.shape != (p.heads, tokens, tokens):
            raise InvalidConfigError(
                f"positional table {p.pos_bias.shape} does not match {(p.heads, tokens, tokens)}")
        logits = add(logits, reshape_permute(p.pos_bias, (1, p.heads, tokens, tokens)))
    attn = softmax_lastdim(logits)
    out = matmul(attn, v)
    out = reshape_permute(out, (bw, p.heads, tokens, head_dim), (0, 1, 3, 2))
    out = reshape_permute(out, (bw, c, m, m))
    return conv2d(out, p.wo, p.bo)


@dataclass
class NwcParams:
    """Depth-wise kernel with spatial extent equal to the window size."""

    kernel: Tensor  # (C, 1, M, M)
    bias: Tensor | None = None

    @property
    def channels(self) -> int:
        return self.kernel.shape[0]

    @property
    def extent(self) -> int:
        return self.kernel.shape[2]


def init_nwc(channels: int, window: int, rng: Rng | None = None,
             dtype=np.float32) -> NwcParams:
    """Zero-initialized by default so the residual connection starts as identity."""
    if rng is None:
        kernel = np.zeros((channels, 1, window, window), dtype=dtype)
    else:
        kernel = rng.trunc_normal((channels, 1, window, window), INIT_STD, dtype=dtype)
    return NwcParams(Tensor(kernel, requires_grad=True),
                     Tensor(np.zeros(channels, dtype=dtype), requires_grad=True))


def nwc_padding(extent: int, even_pad: str | None = None) -> tuple[int, int]:
    """Per-axis (before, after) padding that keeps the resolution."""
    if extent % 2:
        half = (extent - 1) // 2
        return half, half
    if even_pad != "floor":
        raise InvalidConfigError(
            f"even kernel extent {extent} needs even_pad='floor' ((k-1)//2 before, k//2 after)")
    return (extent - 1) // 2, extent // 2


def nwc_forward(x: Tensor, p: NwcParams, even_pad: str | None = None) -> Tensor:
    """x + depthwise(x); output resolution equals input resolution."""
    if x.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D feature map, got shape {x.shape}")
    if x.shape[1] != p.channels:
        raise InvalidConfigError(f"params built for {p.channels} channels, input has {x.shape[1]}")
    if p.kernel.shape[2] != p.kernel.shape[3]:
        raise InvalidConfigError(f"kernel must be square, got {p.kernel.shape}")
    pad = nwc_padding(p.extent, even_pad)
    local = conv2d(x, p.kernel, p.bias, stride=1, padding=(pad, pad), groups=p.channels)
    return add(x, local)


@dataclass
class MlpParams:
    """Two 1x1 convolutions around the activation; hidden width = ratio * C."""

    w1: Tensor  # (hidden, C, 1, 1)
    b1: Tensor
    w2: Tensor  # (C, hidden, 1, 1)
    b2: Tensor

    @property
    def channels(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]


def init_mlp(channels: int, hidden: int, rng: Rng, dtype=np.float32) -> MlpParams:
    return MlpParams(
        Tensor(rng.trunc_normal((hidden, channels, 1, 1), INIT_STD, dtype=dtype), requires_grad=True),
        Tensor(np.zeros(hidden, dtype=dtype), requires_grad=True),
        Tensor(rng.trunc_normal((channels, hidden, 1, 1), INIT_STD, dtype=dtype), requires_grad=True),
        Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
    )


def mlp_forward(x: Tensor, p: MlpParams, inner_nwc: NwcParams | None = None,
                even_pad: str | None = None) -> Tensor:
    """conv1x1 -> GELU -> conv1x1, optionally with a residual depth-wise
    convolution on the hidden activation (the inside-the-MLP placement)."""
    if x.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D feature map, got shape {x.shape}")
    if x.shape[1] != p.channels:
        raise InvalidConfigError(f"params built for {p.channels} channels, input has {x.shape[1]}")
    if p.w2.shape != (p.channels, p.hidden, 1, 1):
        raise InvalidConfigError(
            f"second projection {p.w2.shape} inconsistent with first {p.w1.shape}")
    h = gelu(conv2d(x, p.w1, p.b1))
    if inner_nwc is not None:
        h = nwc_forward(h, inner_nwc, even_pad)
    return conv2d(h, p.w2, p.b2)
