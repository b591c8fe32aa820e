"""Quality metrics and the quantile-residual distribution study."""

from dataclasses import dataclass

import numpy as np

from .image import as_image
from .quantile import QuantileConfig, apply_filter


def _check_pair(f, ref):
    f, ref = as_image(f), as_image(ref)
    if f.shape != ref.shape:
        raise ValueError(f"shape mismatch {f.shape} vs {ref.shape}")
    return f, ref


def rmse(f, ref) -> float:
    f, ref = _check_pair(f, ref)
    return float(np.sqrt(np.mean((f - ref) ** 2)))


def psnr(f, ref) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0; inf for identical images."""
    e = rmse(f, ref)
    if e == 0.0:
        return float("inf")
    return float(20.0 * np.log10(1.0 / e))


def bme(f, ref, delta: float) -> float:
    """Bad matching error: fraction of pixels deviating by strictly more than delta."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    f, ref = _check_pair(f, ref)
    return float(np.mean(np.abs(f - ref) > delta))


@dataclass(frozen=True)
class Histogram:
    """Uniform-bin histogram over [-1, 1]; counts sum to the pixel count."""

    edges: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def std(self) -> float:
        """Standard deviation of the binned distribution (bin centers)."""
        total = self.counts.sum()
        mean = float(np.dot(self.centers, self.counts)) / total
        var = float(np.dot((self.centers - mean) ** 2, self.counts)) / total
        return float(np.sqrt(var))


def residual_histogram(img, cfg: QuantileConfig, bins: int, guidance=None) -> Histogram:
    """Histogram of the per-pixel quantile residual f - Q(f) over [-1, 1].

    On clean natural images the residual mass concentrates sharply around
    zero; noise spreads it out, which is the empirical basis for using the
    residual's L1 norm as a prior.
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    img = as_image(img)
    r = img - apply_filter(img, cfg, guidance)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts, _ = np.histogram(np.clip(r, -1.0, 1.0), bins=edges)
    return Histogram(edges=edges, counts=counts)
