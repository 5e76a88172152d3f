"""Pixel-shuffle downsampling (PD) and random sub-sample generation (RSG).

An image whose sides are multiples of ``s`` is cut into s x s cells. Each
cell is flattened row-major into a vector of length s*s; RSG shuffles every
vector with its own permutation, then sub-sample ``k`` collects element
``k`` of every vector, laid out in the raster order of the cells. PD is the
special case where every permutation is the identity.

Both directions are pure index moves, so ``merge(split(y)) == y`` holds
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels


class SamplingDimensionError(ValueError):
    pass


class PlanMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class SamplingPlan:
    """Per-cell permutations; ``cell_perms[u, v, k]`` is the within-cell
    position (row-major) that feeds sub-sample ``k`` at cell ``(u, v)``."""

    stride: int
    cell_perms: np.ndarray = field(repr=False)

    def __post_init__(self):
        perms = np.ascontiguousarray(self.cell_perms, dtype=np.int64)
        n = self.stride * self.stride
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if perms.ndim != 3 or perms.shape[2] != n:
            raise ValueError(f"cell_perms must have shape (gh, gw, {n}), got {perms.shape}")
        if not np.array_equal(np.sort(perms, axis=2), np.broadcast_to(np.arange(n), perms.shape)):
            raise ValueError("every cell permutation must be a bijection on range(stride**2)")
        perms.setflags(write=False)
        object.__setattr__(self, "cell_perms", perms)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.cell_perms.shape[0], self.cell_perms.shape[1]

    @property
    def is_identity(self) -> bool:
        return bool(np.all(self.cell_perms == np.arange(self.stride * self.stride)))


def identity_plan(stride: int, grid_shape) -> SamplingPlan:
    gh, gw = grid_shape
    n = stride * stride
    perms = np.broadcast_to(np.arange(n, dtype=np.int64), (gh, gw, n))
    return SamplingPlan(stride, perms)


def make_rsg_plan(stride: int, grid_shape, rng: np.random.Generator) -> SamplingPlan:
    """Draw one uniform permutation per cell (Fisher-Yates via ``Generator.permuted``)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    gh, gw = grid_shape
    n = stride * stride
    base = np.broadcast_to(np.arange(n, dtype=np.int64), (gh * gw, n))
    perms = rng.permuted(base, axis=1).reshape(gh, gw, n)
    return SamplingPlan(stride, perms)


@dataclass
class SubsampleStack:
    """``subs`` has shape (s*s, H/s, W/s, C)."""

    subs: np.ndarray
    plan: SamplingPlan
    original_shape: tuple[int, int]

    def __len__(self):
        return self.subs.shape[0]

    def __getitem__(self, k):
        return self.subs[k]

    def with_subs(self, subs: np.ndarray) -> "SubsampleStack":
        """Same plan, new sub-sample contents (e.g. after denoising)."""
        subs = np.asarray(subs)
        if subs.shape[:3] != self.subs.shape[:3]:
            raise SamplingDimensionError(f"expected sub-samples of shape {self.subs.shape[:3]}+(C,), got {subs.shape}")
        return SubsampleStack(subs, self.plan, self.original_shape)


def _as_grid(img) -> np.ndarray:
    """(H, W, C) view of ``img``; float32 and float64 are kept as they are."""
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3:
        raise SamplingDimensionError(f"expected an (H, W, C) image, got shape {img.shape}")
    if img.dtype not in (np.float32, np.float64):
        img = img.astype(np.float32)
    return img


def _grid(img: np.ndarray, stride: int) -> tuple[int, int]:
    h, w = img.shape[:2]
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if h % stride or w % stride:
        ph, pw = (-h) % stride, (-w) % stride
        raise SamplingDimensionError(
            f"image {h}x{w} is not divisible by stride {stride}; pad by {ph} rows and {pw} columns "
            "(see pad_to_multiple)")
    return h // stride, w // stride


def pd_split(img: np.ndarray, stride: int) -> SubsampleStack:
    """Sub-sample ``a*s + b`` holds the pixels at ``(a + s*i, b + s*j)``."""
    img = _as_grid(img)
    gh, gw = _grid(img, stride)
    c = img.shape[2]
    subs = img.reshape(gh, stride, gw, stride, c).transpose(1, 3, 0, 2, 4).reshape(stride * stride, gh, gw, c)
    return SubsampleStack(np.ascontiguousarray(subs), identity_plan(stride, (gh, gw)), img.shape[:2])


def pd_merge(stack: SubsampleStack) -> np.ndarray:
    plan = stack.plan
    if not plan.is_identity:
        raise PlanMismatchError("pd_merge needs an identity plan; use rsg_merge for RSG stacks")
    s = plan.stride
    n, gh, gw, c = stack.subs.shape
    img = stack.subs.reshape(s, s, gh, gw, c).transpose(2, 0, 3, 1, 4).reshape(gh * s, gw * s, c)
    return np.ascontiguousarray(img)


def rsg_split(img: np.ndarray, plan: SamplingPlan) -> SubsampleStack:
    img = _as_grid(img)
    grid = _grid(img, plan.stride)
    if grid != plan.grid_shape:
        raise SamplingDimensionError(f"plan grid {plan.grid_shape} does not match image grid {grid}")
    subs = kernels.split_cells(img, plan.cell_perms, plan.stride)
    return SubsampleStack(subs, plan, img.shape[:2])


def rsg_merge(stack: SubsampleStack) -> np.ndarray:
    plan = stack.plan
    if plan is None:
        raise PlanMismatchError("stack carries no sampling plan")
    n, gh, gw, _ = stack.subs.shape
    if n != plan.stride ** 2 or (gh, gw) != plan.grid_shape:
        raise PlanMismatchError(
            f"stack of {n} sub-samples {gh}x{gw} does not match plan (stride {plan.stride}, grid {plan.grid_shape})")
    return kernels.merge_cells(stack.subs, plan.cell_perms, plan.stride)


def rsg_sample(img: np.ndarray, stride: int, rng: np.random.Generator) -> SubsampleStack:
    """Draw a fresh plan for ``img`` and split it."""
    img = _as_grid(img)
    gh, gw = _grid(img, stride)
    return rsg_split(img, make_rsg_plan(stride, (gh, gw), rng))


@dataclass(frozen=True)
class CropRecord:
    height: int
    width: int

    def apply(self, img: np.ndarray) -> np.ndarray:
        return img[: self.height, : self.width]


def pad_to_multiple(img: np.ndarray, stride: int) -> tuple[np.ndarray, CropRecord]:
    """Mirror-pad the bottom/right edges up to the next multiple of ``stride``.

    The mirror includes the edge pixel, so on a 5x5 image with stride 2 the
    added row 5 repeats row 4.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    h, w = img.shape[:2]
    ph, pw = (-h) % stride, (-w) % stride
    record = CropRecord(h, w)
    if ph == 0 and pw == 0:
        return img, record
    pad = [(0, ph), (0, pw)] + [(0, 0)] * (img.ndim - 2)
    return np.pad(img, pad, mode="symmetric"), record
