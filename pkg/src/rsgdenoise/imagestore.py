"""Image I/O, datasets, patch cropping and synthetic noise.

Images are numpy arrays of shape (H, W, C) with C in {1, 3}, float32,
nominally in [0, 1]. Noise is added unclipped; clipping happens when an
image is saved or scored.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg")
NOISE_KINDS = ("awgn", "correlated")
SEED_MODES = ("fixed", "per_epoch_random")


class ImageIOError(OSError):
    """Raised when an image cannot be read or written."""


class PatchSamplingError(ValueError):
    pass


def as_image(arr) -> np.ndarray:
    """Coerce a 2-D or 3-D array into the (H, W, C) float32 layout."""
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected an (H, W), (H, W, 1) or (H, W, 3) array, got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"empty image of shape {arr.shape}")
    return np.ascontiguousarray(arr, dtype=np.float32)


def to_channels(img: np.ndarray, channels: int) -> np.ndarray:
    """Convert between grayscale and RGB (luma weights 0.299/0.587/0.114)."""
    if img.shape[2] == channels:
        return img
    if channels == 1:
        luma = img @ np.array([0.299, 0.587, 0.114], dtype=np.float32)
        return np.ascontiguousarray(luma[:, :, None])
    if channels == 3:
        return np.ascontiguousarray(np.repeat(img, 3, axis=2))
    raise ValueError(f"channels must be 1 or 3, got {channels}")


def load_image(path) -> np.ndarray:
    path = Path(path)
    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode in ("L", "RGB"):
                data = np.asarray(im)
            elif mode in ("P", "RGBA", "LA"):
                data = np.asarray(im.convert("RGB" if mode != "LA" else "L"))
            else:
                raise ImageIOError(f"{path}: unsupported image mode {mode!r} (need 8-bit gray or RGB)")
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        if isinstance(exc, ImageIOError):
            raise
        raise ImageIOError(f"cannot read image {path}: {exc}") from exc
    if data.dtype != np.uint8:
        raise ImageIOError(f"{path}: unsupported bit depth {data.dtype}")
    return as_image(data.astype(np.float32) / np.float32(255.0))


def quantize(img: np.ndarray) -> np.ndarray:
    """Clip to [0, 1] and round half-up to 8-bit."""
    v = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def save_image(img: np.ndarray, path) -> None:
    img = as_image(img)
    data = quantize(img)
    if data.shape[2] == 1:
        data = data[:, :, 0]
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(data).save(path)
    except OSError as exc:
        raise ImageIOError(f"cannot write image {path}: {exc}") from exc


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ImageIOError(f"dataset directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_dataset(directory, channels: int | None = None) -> tuple[list[str], list[np.ndarray]]:
    """Load every image of a flat directory, sorted by file name."""
    paths = list_images(directory)
    images = [load_image(p) for p in paths]
    if channels is not None:
        images = [to_channels(im, channels) for im in images]
    return [p.name for p in paths], images


def load_pairs(noisy_dir, clean_dir, channels: int | None = None):
    """Match a noisy directory with a clean one by file stem.

    Returns ``(names, noisy, clean)``; files without a partner are skipped.
    """
    clean_by_stem = {p.stem: p for p in list_images(clean_dir)}
    names, noisy, clean = [], [], []
    for p in list_images(noisy_dir):
        partner = clean_by_stem.get(p.stem)
        if partner is None:
            log.warning("no clean reference for %s", p.name)
            continue
        n, c = load_image(p), load_image(partner)
        if channels is not None:
            n, c = to_channels(n, channels), to_channels(c, channels)
        if n.shape != c.shape:
            raise ImageIOError(f"shape mismatch between {p} {n.shape} and {partner} {c.shape}")
        names.append(p.name)
        noisy.append(n)
        clean.append(c)
    return names, noisy, clean


@dataclass
class NoiseSpec:
    """Synthetic noise model; ``sigma`` is on the 0-255 scale."""

    kind: str = "awgn"
    sigma: float = 25.0
    seed_mode: str = "fixed"
    correlation_scale: int = 2

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if self.seed_mode not in SEED_MODES:
            raise ValueError(f"seed_mode must be one of {SEED_MODES}, got {self.seed_mode!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.kind == "correlated" and self.correlation_scale < 2:
            raise ValueError("correlation_scale must be >= 2 for correlated noise")


def noise_stream(spec: NoiseSpec, rng_seed: int, image_index: int, epoch: int) -> np.random.Generator:
    key = [int(rng_seed), int(image_index)]
    if spec.seed_mode == "per_epoch_random":
        key.append(int(epoch))
    return np.random.default_rng(key)


def _correlated_field(shape, scale: int, rng: np.random.Generator) -> np.ndarray:
    h, w, c = shape
    lh, lw = -(-h // scale), -(-w // scale)
    low = rng.standard_normal((lh, lw, c))
    up = ndimage.zoom(low, (scale, scale, 1), order=3, mode="reflect", grid_mode=True)
    up = up[:h, :w]
    std = up.std()
    return up / std if std > 0 else up


def add_noise(clean: np.ndarray, spec: NoiseSpec, epoch: int = 0, rng_seed: int = 0,
              image_index: int = 0) -> np.ndarray:
    """Return ``clean`` plus zero-mean Gaussian noise (unclipped).

    The stream is keyed on ``(rng_seed, image_index)``, plus ``epoch`` when
    ``spec.seed_mode == "per_epoch_random"``.
    """
    clean = as_image(clean)
    if spec.sigma == 0:
        return clean.copy()
    rng = noise_stream(spec, rng_seed, image_index, epoch)
    std = spec.sigma / 255.0
    if spec.kind == "awgn":
        field = rng.standard_normal(clean.shape)
    else:
        field = _correlated_field(clean.shape, spec.correlation_scale, rng)
    return (clean + std * field).astype(np.float32)


@dataclass
class PatchSampler:
    patch_size: int = 160
    patches_per_epoch: int = 25600
    rng_seed: int = 0

    def __post_init__(self):
        if self.patch_size < 1 or self.patches_per_epoch < 1:
            raise ValueError("patch_size and patches_per_epoch must be positive")


def sample_patch(img: np.ndarray, sampler: PatchSampler | int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly placed square crop (an exact sub-grid, no interpolation)."""
    size = sampler.patch_size if isinstance(sampler, PatchSampler) else int(sampler)
    h, w = img.shape[:2]
    if h < size or w < size:
        raise PatchSamplingError(f"image of size {h}x{w} is smaller than patch size {size}")
    i = int(rng.integers(0, h - size + 1))
    j = int(rng.integers(0, w - size + 1))
    return img[i:i + size, j:j + size]
