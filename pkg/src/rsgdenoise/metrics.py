"""PSNR and SSIM against clean references (data range 1.0)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


class MetricShapeError(ValueError):
    pass


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[:, :, None], b[:, :, None]
    return np.clip(a, 0.0, 1.0), np.clip(b, 0.0, 1.0)


def psnr(a, b) -> float:
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _gaussian_window():
    r = SSIM_WINDOW // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x ** 2) / (2 * SSIM_SIGMA ** 2))
    return g / g.sum()


def _filter_valid(img, g):
    r = len(g) // 2
    out = correlate1d(img, g, axis=0, mode="constant")
    out = correlate1d(out, g, axis=1, mode="constant")
    return out[r:-r, r:-r]


def _ssim_channel(x, y, g):
    c1 = (K1 * 1.0) ** 2
    c2 = (K2 * 1.0) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a, b, luma: bool = False) -> float:
    """Single-scale SSIM, 11x11 Gaussian window (sigma 1.5).

    Colour images are scored per channel and averaged, or on luma when
    ``luma`` is set.
    """
    a, b = _pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise MetricShapeError(f"image {a.shape[:2]} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    if luma and a.shape[2] == 3:
        w = np.array([0.299, 0.587, 0.114])
        a, b = (a @ w)[:, :, None], (b @ w)[:, :, None]
    g = _gaussian_window()
    return float(np.mean([_ssim_channel(a[:, :, c], b[:, :, c], g) for c in range(a.shape[2])]))


@dataclass
class QualityReport:
    names: list[str] = field(default_factory=list)
    psnr_db: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)

    def add(self, name, denoised, clean, luma=False):
        self.names.append(str(name))
        self.psnr_db.append(psnr(denoised, clean))
        self.ssim.append(ssim(denoised, clean, luma=luma))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_db)) if self.psnr_db else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else float("nan")

    def write_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["image", "psnr_db", "ssim"])
            for n, p, s in zip(self.names, self.psnr_db, self.ssim):
                w.writerow([n, f"{p:.4f}", f"{s:.6f}"])
            w.writerow(["mean", f"{self.mean_psnr:.4f}", f"{self.mean_ssim:.6f}"])


def evaluate(denoised, clean, names=None, luma=False) -> QualityReport:
    report = QualityReport()
    names = names if names is not None else [str(i) for i in range(len(clean))]
    for n, d, c in zip(names, denoised, clean):
        report.add(n, d, c, luma=luma)
    return report
