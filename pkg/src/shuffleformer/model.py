"""Consecutive shuffle blocks, the four-stage hierarchical model, and variants.

A block computes, with batch norm before each learnable stage:

    x = (Shuffle-)WMSA(BN(z)) + z
    y = NWC(x)                       # NWC already includes its residual
    z' = MLP(BN(y)) + y

The neighbor-window connection can sit at position "A" (on the BN output,
before attention), "B" (after the attention residual, as written above),
"C" (between the MLP's two projections, at hidden width), or be absent.
Blocks come in pairs: the first uses the plain window partition, the second
the shuffled one. The model is token embedding, four stages of blocks with
2x2/stride-2 merging in between, then BN -> global average pool -> linear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conv import BnParams, apply_bn, conv2d
from .errors import InvalidConfigError, InvalidShapeError
from .layers import (INIT_STD, MlpParams, NwcParams, WmsaParams, init_mlp,
                     init_nwc, init_wmsa, mlp_forward, nwc_forward, wmsa_forward)
from .rng import Rng
from .tensor import Tensor, add, gelu, matmul, mean_pool_hw
from .windowing import (SpatialPermutation, aligned_window_reverse,
                        make_shuffle_permutation, shuffled_window_partition)

SHUFFLE_MODES = ("none", "long-range", "short-range", "random")
NWC_POSITIONS = ("A", "B", "C", "none")
EVEN_PAD = "floor"


@dataclass(frozen=True)
class BlockConfig:
    channels: int
    heads: int
    window: int
    shuffle_mode: str = "none"
    nwc_position: str = "B"

    def __post_init__(self):
        if self.shuffle_mode not in SHUFFLE_MODES:
            raise InvalidConfigError(
                f"shuffle_mode {self.shuffle_mode!r} not in {SHUFFLE_MODES}")
        if self.nwc_position not in NWC_POSITIONS:
            raise InvalidConfigError(
                f"nwc_position {self.nwc_position!r} not in {NWC_POSITIONS}")
        if self.channels % self.heads:
            raise InvalidConfigError(
                f"{self.heads} heads do not divide {self.channels} channels")


@dataclass
class BlockParams:
    bn1: BnParams
    attn: WmsaParams
    bn2: BnParams
    mlp: MlpParams
    nwc: NwcParams | None = None
    # frozen at construction; required (and only used) for random shuffle mode
    shuffle_perms: tuple[SpatialPermutation, SpatialPermutation] | None = None


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyper-parameters for one model variant."""

    channels: int
    depths: tuple[int, ...]
    num_classes: int = 1000
    resolution: int = 224
    window: int = 7
    head_dim: int = 32
    mlp_ratio: int = 4
    in_channels: int = 3
    shuffle_mode: str = "long-range"
    nwc_position: str = "B"
    attn_bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        if not self.depths or any(d < 2 or d % 2 for d in self.depths):
            raise InvalidConfigError(f"stage depths must be positive and even, got {self.depths}")
        if self.channels % 2:
            raise InvalidConfigError(f"base width must be even, got {self.channels}")
        if self.channels % self.head_dim:
            raise InvalidConfigError(
                f"head_dim {self.head_dim} does not divide base width {self.channels}")
        if self.shuffle_mode not in SHUFFLE_MODES:
            raise InvalidConfigError(
                f"shuffle_mode {self.shuffle_mode!r} not in {SHUFFLE_MODES}")
        if self.nwc_position not in NWC_POSITIONS:
            raise InvalidConfigError(
                f"nwc_position {self.nwc_position!r} not in {NWC_POSITIONS}")
        if self.resolution % 4:
            raise InvalidConfigError(
                f"input resolution {self.resolution} must be divisible by 4 for embedding")
        for stage in range(len(self.depths)):
            res = self.stage_resolution(stage)
            if res % self.window:
                raise InvalidConfigError(
                    f"stage {stage} resolution {res} is not divisible by window {self.window}")

    @property
    def stages(self) -> int:
        return len(self.depths)

    def stage_channels(self, stage: int) -> int:
        return self.channels * (2 ** stage)

    def stage_heads(self, stage: int) -> int:
        return self.stage_channels(stage) // self.head_dim

    def stage_resolution(self, stage: int) -> int:
        res = self.resolution // 4
        if res * 4 != self.resolution:
            raise InvalidConfigError(f"resolution {self.resolution} not divisible by 4")
        for s in range(stage):
            if res % 2:
                raise InvalidConfigError(
                    f"stage {s} resolution {res} is odd; cannot merge to stage {s + 1}")
            res //= 2
        return res

    def block_config(self, stage: int, index: int) -> BlockConfig:
        """Even block indices use the plain partition, odd ones the shuffled."""
        mode = "none" if index % 2 == 0 else self.shuffle_mode
        return BlockConfig(self.stage_channels(stage), self.stage_heads(stage),
                           self.window, mode, self.nwc_position)

    def to_dict(self) -> dict:
        return {
            "channels": self.channels, "depths": list(self.depths),
            "num_classes": self.num_classes, "resolution": self.resolution,
            "window": self.window, "head_dim": self.head_dim,
            "mlp_ratio": self.mlp_ratio, "in_channels": self.in_channels,
            "shuffle_mode": self.shuffle_mode, "nwc_position": self.nwc_position,
            "attn_bias": self.attn_bias,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(**{k: (tuple(v) if k == "depths" else v) for k, v in d.items()})


_VARIANTS = {
    "T": dict(channels=96, depths=(2, 2, 6, 2)),
    "S": dict(channels=96, depths=(2, 2, 18, 2)),
    "B": dict(channels=128, depths=(2, 2, 18, 2)),
}


def build_variant(name: str, **overrides) -> ModelConfig:
    """The published tiny/small/base configurations (window 7, head width 32)."""
    key = name.upper()
    if key not in _VARIANTS:
        raise InvalidConfigError(
            f"unknown variant {name!r}; valid options: {', '.join(sorted(_VARIANTS))}")
    return ModelConfig(**{**_VARIANTS[key], **overrides})


# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class EmbedParams:
    conv1_w: Tensor
    conv1_b: Tensor
    bn1: BnParams
    conv2_w: Tensor
    conv2_b: Tensor
    bn2: BnParams


@dataclass
class MergeParams:
    weight: Tensor  # (2C, C, 2, 2)
    bias: Tensor


@dataclass
class HeadParams:
    bn: BnParams
    weight: Tensor  # (C, num_classes)
    bias: Tensor


@dataclass
class StageParams:
    merge: MergeParams | None
    blocks: list[BlockParams]


@dataclass
class ModelParams:
    embed: EmbedParams
    stages: list[StageParams]
    head: HeadParams


def _nwc_channels(cfg: BlockConfig, mlp_ratio: int) -> int | None:
    if cfg.nwc_position == "none":
        return None
    return cfg.channels * mlp_ratio if cfg.nwc_position == "C" else cfg.channels


def init_block_params(cfg: BlockConfig, rng: Rng, mlp_ratio: int = 4,
                      resolution: int | None = None, dtype=np.float32,
                      attn_bias: bool = True) -> BlockParams:
    nwc_ch = _nwc_channels(cfg, mlp_ratio)
    perms = None
    if cfg.shuffle_mode == "random":
        if resolution is None:
            raise InvalidConfigError("random shuffle mode needs the stage resolution")
        perms = (make_shuffle_permutation(resolution, cfg.window, "random", rng),
                 make_shuffle_permutation(resolution, cfg.window, "random", rng))
    return BlockParams(
        bn1=BnParams.identity(cfg.channels, dtype),
        attn=init_wmsa(cfg.channels, cfg.heads, rng, bias=attn_bias, dtype=dtype),
        bn2=BnParams.identity(cfg.channels, dtype),
        mlp=init_mlp(cfg.channels, cfg.channels * mlp_ratio, rng, dtype),
        nwc=None if nwc_ch is None else init_nwc(nwc_ch, cfg.window, dtype=dtype),
        shuffle_perms=perms,
    )


def init_model_params(cfg: ModelConfig, rng: Rng, dtype=np.float32) -> ModelParams:
    """Draw all weights in a fixed traversal order from one seeded stream."""
    half = cfg.channels // 2

    def conv_t(shape):
        return Tensor(rng.trunc_normal(shape, INIT_STD, dtype=dtype), requires_grad=True)

    def zeros_t(n):
        return Tensor(np.zeros(n, dtype=dtype), requires_grad=True)

    embed = EmbedParams(
        conv_t((half, cfg.in_channels, 3, 3)), zeros_t(half), BnParams.identity(half, dtype),
        conv_t((cfg.channels, half, 3, 3)), zeros_t(cfg.channels),
        BnParams.identity(cfg.channels, dtype),
    )
    stages = []
    for stage in range(cfg.stages):
        ch = cfg.stage_channels(stage)
        merge = None
        if stage > 0:
            merge = MergeParams(conv_t((ch, ch // 2, 2, 2)), zeros_t(ch))
        blocks = [
            init_block_params(cfg.block_config(stage, i), rng, cfg.mlp_ratio,
                              resolution=cfg.stage_resolution(stage), dtype=dtype,
                              attn_bias=cfg.attn_bias)
            for i in range(cfg.depths[stage])
        ]
        stages.append(StageParams(merge, blocks))
    last = cfg.stage_channels(cfg.stages - 1)
    head = HeadParams(BnParams.identity(last, dtype),
                      conv_t((last, cfg.num_classes)), zeros_t(cfg.num_classes))
    return ModelParams(embed, stages, head)


def _named_bn(prefix: str, bn: BnParams):
    yield f"{prefix}.gamma", bn.gamma
    yield f"{prefix}.beta", bn.beta


def named_parameters(params: ModelParams):
    """Stable (name, Tensor) traversal over every learnable parameter."""
    e = params.embed
    yield "embed.conv1.weight", e.conv1_w
    yield "embed.conv1.bias", e.conv1_b
    yield from _named_bn("embed.bn1", e.bn1)
    yield "embed.conv2.weight", e.conv2_w
    yield "embed.conv2.bias", e.conv2_b
    yield from _named_bn("embed.bn2", e.bn2)
    for s, stage in enumerate(params.stages):
        if stage.merge is not None:
            yield f"stage{s}.merge.weight", stage.merge.weight
            yield f"stage{s}.merge.bias", stage.merge.bias
        for i, blk in enumerate(stage.blocks):
            p = f"stage{s}.block{i}"
            yield from _named_bn(f"{p}.bn1", blk.bn1)
            for proj in ("q", "k", "v", "o"):
                yield f"{p}.attn.w{proj}", getattr(blk.attn, f"w{proj}")
                bias = getattr(blk.attn, f"b{proj}")
                if bias is not None:
                    yield f"{p}.attn.b{proj}", bias
            if blk.attn.pos_bias is not None:
                yield f"{p}.attn.pos_bias", blk.attn.pos_bias
            if blk.nwc is not None:
                yield f"{p}.nwc.kernel", blk.nwc.kernel
                if blk.nwc.bias is not None:
                    yield f"{p}.nwc.bias", blk.nwc.bias
            yield from _named_bn(f"{p}.bn2", blk.bn2)
            yield f"{p}.mlp.w1", blk.mlp.w1
            yield f"{p}.mlp.b1", blk.mlp.b1
            yield f"{p}.mlp.w2", blk.mlp.w2
            yield f"{p}.mlp.b2", blk.mlp.b2
    yield from _named_bn("head.bn", params.head.bn)
    yield "head.weight", params.head.weight
    yield "head.bias", params.head.bias


def named_buffers(params: ModelParams):
    """Running statistics, named alongside their batch-norm layers."""
    for name, bn in _iter_bn(params):
        yield f"{name}.running_mean", bn.running.mean
        yield f"{name}.running_var", bn.running.var


def _iter_bn(params: ModelParams):
    yield "embed.bn1", params.embed.bn1
    yield "embed.bn2", params.embed.bn2
    for s, stage in enumerate(params.stages):
        for i, blk in enumerate(stage.blocks):
            yield f"stage{s}.block{i}.bn1", blk.bn1
            yield f"stage{s}.block{i}.bn2", blk.bn2
    yield "head.bn", params.head.bn


def parameter_list(params: ModelParams) -> list[Tensor]:
    return [t for _, t in named_parameters(params)]


# ---------------------------------------------------------------------------
# forward passes


def _block_perms(cfg: BlockConfig, params: BlockParams, height: int, width: int):
    if cfg.shuffle_mode == "none":
        return None
    if cfg.shuffle_mode == "random":
        if params.shuffle_perms is None:
            raise InvalidConfigError("random shuffle mode needs frozen permutations")
        ph, pw = params.shuffle_perms
        if ph.n != height or pw.n != width:
            raise InvalidShapeError(
                f"frozen permutations built for {(ph.n, pw.n)}, input is {(height, width)}")
        return ph, pw
    return (make_shuffle_permutation(height, cfg.window, cfg.shuffle_mode),
            make_shuffle_permutation(width, cfg.window, cfg.shuffle_mode))


def block_forward(z: Tensor, params: BlockParams, cfg: BlockConfig,
                  training: bool = False) -> Tensor:
    """One (Shuffle-)WMSA block with the NWC at its configured position."""
    if z.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D feature map, got shape {z.shape}")
    _, c, height, width = z.shape
    if c != cfg.channels:
        raise InvalidConfigError(f"block built for {cfg.channels} channels, input has {c}")
    if cfg.nwc_position != "none" and params.nwc is None:
        raise InvalidConfigError(f"nwc_position={cfg.nwc_position} but no NWC parameters")
    perms = _block_perms(cfg, params, height, width)

    zn = apply_bn(z, params.bn1, training)
    if cfg.nwc_position == "A":
        zn = nwc_forward(zn, params.nwc, EVEN_PAD)
    wins = shuffled_window_partition(zn, cfg.window, perms=perms) if perms is not None \
        else shuffled_window_partition(zn, cfg.window)
    wins = wmsa_forward(wins, params.attn)
    att = aligned_window_reverse(wins, cfg.window, height, width, perms=perms) \
        if perms is not None else aligned_window_reverse(wins, cfg.window, height, width)
    x = add(att, z)

    y = nwc_forward(x, params.nwc, EVEN_PAD) if cfg.nwc_position == "B" else x
    yn = apply_bn(y, params.bn2, training)
    inner = params.nwc if cfg.nwc_position == "C" else None
    return add(mlp_forward(yn, params.mlp, inner_nwc=inner, even_pad=EVEN_PAD), y)


def block_pair_forward(z: Tensor, params_pair, cfgs, training: bool = False) -> Tensor:
    """Two consecutive blocks: plain partition first, shuffled partition second."""
    first, second = params_pair
    cfg1, cfg2 = cfgs
    if cfg1.shuffle_mode != "none":
        raise InvalidConfigError("first block of a pair must not shuffle")
    z = block_forward(z, first, cfg1, training)
    return block_forward(z, second, cfg2, training)


def token_embed(image: Tensor, params: EmbedParams, training: bool = False) -> Tensor:
    """Two stride-2 3x3 convolutions with BN and GELU: (B,3,H,W) -> (B,C,H/4,W/4)."""
    if image.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D image batch, got shape {image.shape}")
    _, _, h, w = image.shape
    if h % 4 or w % 4:
        raise InvalidShapeError(f"input extents {(h, w)} must be divisible by 4")
    x = conv2d(image, params.conv1_w, params.conv1_b, stride=2, padding=1)
    x = gelu(apply_bn(x, params.bn1, training))
    x = conv2d(x, params.conv2_w, params.conv2_b, stride=2, padding=1)
    return apply_bn(x, params.bn2, training)


def token_merge(x: Tensor, params: MergeParams) -> Tensor:
    """Non-overlapping 2x2 patches projected to doubled channels."""
    if x.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D feature map, got shape {x.shape}")
    _, _, h, w = x.shape
    if h % 2 or w % 2:
        raise InvalidShapeError(f"extents {(h, w)} must be even to merge tokens")
    return conv2d(x, params.weight, params.bias, stride=2, padding=0)


def model_forward(image: Tensor, params: ModelParams, cfg: ModelConfig,
                  training: bool = False) -> Tensor:
    """Full network: embed, stages with merging, BN, global pool, classifier."""
    x = token_embed(image, params.embed, training)
    for stage_index, stage in enumerate(params.stages):
        if stage.merge is not None:
            x = token_merge(x, stage.merge)
        res = x.shape[2]
        if res % cfg.window or x.shape[3] % cfg.window:
            raise InvalidConfigError(
                f"stage {stage_index}: resolution {x.shape[2]}x{x.shape[3]} "
                f"not divisible by window {cfg.window}")
        for i, blk in enumerate(stage.blocks):
            x = block_forward(x, blk, cfg.block_config(stage_index, i), training)
    x = apply_bn(x, params.head.bn, training)
    pooled = mean_pool_hw(x)
    return add(matmul(pooled, params.head.weight), params.head.bias)


def zero_block_weights(params: ModelParams) -> None:
    """Zero every block's learnable weights in place; blocks become identities."""
    for stage in params.stages:
        for blk in stage.blocks:
            for t in (blk.attn.wq, blk.attn.wk, blk.attn.wv, blk.attn.wo,
                      blk.attn.bq, blk.attn.bk, blk.attn.bv, blk.attn.bo,
                      blk.mlp.w1, blk.mlp.b1, blk.mlp.w2, blk.mlp.b2):
                if t is not None:
                    t.data[...] = 0.0
            if blk.nwc is not None:
                blk.nwc.kernel.data[...] = 0.0
                if blk.nwc.bias is not None:
                    blk.nwc.bias.data[...] = 0.0
