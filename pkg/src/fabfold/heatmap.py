"""Gaussian heatmap encoding for pick/place pixel targets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class HeatmapConfig:
    sigma_px: float = 2.0
    image_px: int = 64

    def __post_init__(self):
        if not self.sigma_px > 0:
            raise ValueError(f"sigma_px must be > 0, got {self.sigma_px}")


def encode_gaussian(center, cfg: HeatmapConfig) -> np.ndarray:
    """Unnormalized 2D Gaussian with peak exactly 1.0 at the center pixel.

    H[v, u] = exp(-((u-cu)^2 + (v-cv)^2) / (2 sigma^2)). The sum is NOT
    normalized; only the peak value matters for heatmap regression.
    """
    cu, cv = float(center[0]), float(center[1])
    n = cfg.image_px
    if not (0 <= cu <= n - 1 and 0 <= cv <= n - 1):
        raise ValueError(f"center {center} outside {n}x{n} image")
    u = np.arange(n, dtype=np.float32)
    du2 = (u - cu) ** 2
    dv2 = (u - cv) ** 2
    return np.exp(-(dv2[:, None] + du2[None, :]) / (2.0 * cfg.sigma_px ** 2)).astype(np.float32)
