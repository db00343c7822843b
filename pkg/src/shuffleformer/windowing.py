"""Window partition/reverse and the spatial shuffle/alignment permutations.

A spatial permutation acts on one axis of the token grid; the 2-D shuffle
factorizes into independent row and column permutations. The fused entry
points fold the permutation into the window gather, so shuffling costs no
extra pass over the data, and are value-for-value identical to composing
`apply_spatial_permutation_2d` with `window_partition`.

Window layout contract: `window_partition` returns (batch * gh * gw, C, m, m)
with window index wh * gw + ww (row-major over windows, appended after the
batch axis, batch-major) and row-major intra-window positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, InvalidShapeError, PartitionError
from .rng import Rng
from .tensor import Tensor, gather_hw, reshape_permute, result_of

MODES = ("identity", "long-range", "short-range", "random")


@dataclass(frozen=True)
class SpatialPermutation:
    """A bijection over one spatial axis: position k reads source `map[k]`."""

    n: int
    map: np.ndarray
    mode: str

    def __post_init__(self):
        m = np.asarray(self.map, dtype=np.int64)
        object.__setattr__(self, "map", m)
        if m.shape != (self.n,) or not np.array_equal(np.sort(m), np.arange(self.n)):
            raise InvalidConfigError(f"map is not a permutation of range({self.n})")

    @staticmethod
    def identity(n: int) -> "SpatialPermutation":
        return SpatialPermutation(n, np.arange(n, dtype=np.int64), "identity")

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.map, np.arange(self.n)))

    def __eq__(self, other) -> bool:
        return (isinstance(other, SpatialPermutation) and self.n == other.n
                and self.mode == other.mode and np.array_equal(self.map, other.map))


def make_shuffle_permutation(n: int, m: int, mode: str,
                             rng: Rng | None = None) -> SpatialPermutation:
    """Build the shuffle permutation for an axis of `n` tokens, window size `m`.

    long-range: reshape to (m, n/m), transpose, flatten, i.e.
    map[g*m + j] = j*(n/m) + g. short-range: reshape to (n/(2m), m, 2),
    transpose the last two axes, flatten. random: a uniform draw from `rng`.
    """
    if mode not in MODES:
        raise InvalidConfigError(f"unknown shuffle mode {mode!r}; expected one of {MODES}")
    if n < 1 or m < 1:
        raise InvalidConfigError(f"extents must be positive, got n={n}, m={m}")
    if mode == "identity":
        return SpatialPermutation.identity(n)
    if mode == "long-range":
        if n % m:
            raise InvalidConfigError(f"window {m} must divide axis extent {n}")
        perm = np.arange(n, dtype=np.int64).reshape(m, n // m).T.ravel()
        return SpatialPermutation(n, perm, mode)
    if mode == "short-range":
        if n % (2 * m):
            raise InvalidConfigError(f"2*window = {2 * m} must divide axis extent {n}")
        perm = np.arange(n, dtype=np.int64).reshape(n // (2 * m), m, 2)
        return SpatialPermutation(n, perm.transpose(0, 2, 1).ravel(), mode)
    if rng is None:
        raise InvalidConfigError("random mode needs an explicit Rng")
    return SpatialPermutation(n, rng.permutation(n), "random")


def invert_permutation(p: SpatialPermutation) -> SpatialPermutation:
    """The alignment permutation: composing with `p` gives the identity."""
    inv = np.empty(p.n, dtype=np.int64)
    inv[p.map] = np.arange(p.n, dtype=np.int64)
    return SpatialPermutation(p.n, inv, p.mode)


def compose(outer: SpatialPermutation, inner: SpatialPermutation) -> SpatialPermutation:
    """Permutation equal to applying `inner` first, then `outer`."""
    if outer.n != inner.n:
        raise InvalidShapeError(f"length mismatch: {outer.n} vs {inner.n}")
    return SpatialPermutation(outer.n, inner.map[outer.map], outer.mode)


@dataclass(frozen=True)
class WindowGrid:
    """Even partition of an (H, W) grid into gh x gw windows of m x m tokens."""

    m: int
    gh: int
    gw: int

    @staticmethod
    def for_extents(height: int, width: int, m: int) -> "WindowGrid":
        if m < 1:
            raise InvalidConfigError(f"window size must be positive, got {m}")
        if height % m or width % m:
            raise PartitionError(
                f"grid {height}x{width} is not divisible by window size {m}")
        return WindowGrid(m, height // m, width // m)

    @property
    def windows(self) -> int:
        return self.gh * self.gw

    def window_of(self, h: int, w: int) -> int:
        return (h // self.m) * self.gw + (w // self.m)

    def intra_of(self, h: int, w: int) -> tuple[int, int]:
        return h % self.m, w % self.m

    def position_of(self, window: int, ih: int, iw: int) -> tuple[int, int]:
        wh, ww = divmod(window, self.gw)
        return wh * self.m + ih, ww * self.m + iw


def window_partition(x: Tensor, m: int) -> Tensor:
    """(B, C, H, W) -> (B*gh*gw, C, m, m), lossless regrouping."""
    if x.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D feature map, got shape {x.shape}")
    b, c, h, w = x.shape
    grid = WindowGrid.for_extents(h, w, m)
    t = reshape_permute(x, (b, c, grid.gh, m, grid.gw, m), (0, 2, 4, 1, 3, 5))
    return reshape_permute(t, (b * grid.windows, c, m, m))


def window_reverse(wins: Tensor, m: int, height: int, width: int) -> Tensor:
    """Exact inverse of `window_partition`."""
    if wins.ndim != 4 or wins.shape[2:] != (m, m):
        raise InvalidShapeError(f"expected (*, C, {m}, {m}) windows, got {wins.shape}")
    grid = WindowGrid.for_extents(height, width, m)
    bw, c = wins.shape[:2]
    if bw % grid.windows:
        raise InvalidShapeError(
            f"{bw} windows is not a multiple of the {grid.windows} per image")
    b = bw // grid.windows
    t = reshape_permute(wins, (b, grid.gh, grid.gw, c, m, m), (0, 3, 1, 4, 2, 5))
    return reshape_permute(t, (b, c, height, width))


def apply_spatial_permutation_2d(x: Tensor, ph: SpatialPermutation,
                                 pw: SpatialPermutation) -> Tensor:
    """out[b,c,i,j] = x[b,c, ph.map[i], pw.map[j]]."""
    if x.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D feature map, got shape {x.shape}")
    _, _, h, w = x.shape
    if ph.n != h or pw.n != w:
        raise InvalidShapeError(
            f"permutation lengths ({ph.n}, {pw.n}) do not match grid ({h}, {w})")
    return gather_hw(x, ph.map, pw.map)


def _resolve_perms(height: int, width: int, m: int, mode, rng,
                   perms) -> tuple[SpatialPermutation, SpatialPermutation]:
    if perms is not None:
        ph, pw = perms
        if ph.n != height or pw.n != width:
            raise InvalidShapeError(
                f"permutation lengths ({ph.n}, {pw.n}) do not match grid ({height}, {width})")
        return ph, pw
    return (make_shuffle_permutation(height, m, mode, rng),
            make_shuffle_permutation(width, m, mode, rng))


def shuffled_window_partition(x: Tensor, m: int, mode: str = "identity",
                              rng: Rng | None = None, perms=None) -> Tensor:
    """Window partition with the spatial shuffle folded into the gather.

    Equals window_partition(apply_spatial_permutation_2d(x, ph, pw), m) value
    for value. Pass `perms` to reuse frozen permutations (required to pair a
    random-mode partition with its aligned reverse).
    """
    if x.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D feature map, got shape {x.shape}")
    b, c, h, w = x.shape
    grid = WindowGrid.for_extents(h, w, m)
    ph, pw = _resolve_perms(h, w, m, mode, rng, perms)
    src_h = ph.map.reshape(grid.gh, m)
    src_w = pw.map.reshape(grid.gw, m)
    gathered = x.data[:, :, src_h[:, None, :, None], src_w[None, :, None, :]]
    out = gathered.transpose(0, 2, 3, 1, 4, 5).reshape(b * grid.windows, c, m, m)

    def vjp(g):
        gtmp = g.reshape(b, grid.gh, grid.gw, c, m, m).transpose(0, 3, 1, 2, 4, 5)
        gx = np.empty_like(x.data)
        gx[:, :, src_h[:, None, :, None], src_w[None, :, None, :]] = gtmp
        return (gx,)

    return result_of(np.ascontiguousarray(out), (x,), vjp)


def aligned_window_reverse(wins: Tensor, m: int, height: int, width: int,
                           mode: str = "identity", rng: Rng | None = None,
                           perms=None) -> Tensor:
    """Exact inverse of `shuffled_window_partition` for the same permutations."""
    if wins.ndim != 4 or wins.shape[2:] != (m, m):
        raise InvalidShapeError(f"expected (*, C, {m}, {m}) windows, got {wins.shape}")
    grid = WindowGrid.for_extents(height, width, m)
    bw, c = wins.shape[:2]
    if bw % grid.windows:
        raise InvalidShapeError(
            f"{bw} windows is not a multiple of the {grid.windows} per image")
    b = bw // grid.windows
    ph, pw = _resolve_perms(height, width, m, mode, rng, perms)
    src_h = ph.map.reshape(grid.gh, m)
    src_w = pw.map.reshape(grid.gw, m)
    blocks = wins.data.reshape(b, grid.gh, grid.gw, c, m, m).transpose(0, 3, 1, 2, 4, 5)
    out = np.empty((b, c, height, width), dtype=wins.dtype)
    out[:, :, src_h[:, None, :, None], src_w[None, :, None, :]] = blocks

    def vjp(g):
        gtmp = g[:, :, src_h[:, None, :, None], src_w[None, :, None, :]]
        gwins = gtmp.transpose(0, 2, 3, 1, 4, 5).reshape(bw, c, m, m)
        return (np.ascontiguousarray(gwins),)

    return result_of(out, (wins,), vjp)
