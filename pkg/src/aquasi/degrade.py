"""Synthetic degradation generators and the blur operator used in deblurring.

Noise models (all seeded and reproducible):

* gaussian     f + n, n ~ N(0, sigma^2) iid
* salt_pepper  a fraction d of pixels, chosen uniformly, set to 0 or 1
               with equal probability
* poisson      k / s with k ~ Poisson(s * f) per pixel (peak scale s)
* speckle      multiplicative f * (1 + n), n ~ N(0, sigma^2) iid

Outputs are clamped to [0, 1].  The blur operator performs replicate-
boundary correlation with an odd-sized stencil; its transpose is built as
the exact adjoint (scatter form of the same gather), so inner-product
identities hold to rounding error.  The decimation pipeline reproduces the
blur -> nearest-neighbor downsample -> noise chain used to synthesize
low-resolution depth maps, together with the nearest-neighbor upsampling
that serves as solver initialization.
"""

from dataclasses import dataclass

import numpy as np

NOISE_KINDS = ("gaussian", "salt_pepper", "poisson", "speckle")


@dataclass(frozen=True)
class NoiseSpec:
    """One noise model plus its RNG seed; same (spec, image) -> same output."""

    kind: str
    sigma: float = 0.1  # gaussian / speckle std
    density: float = 0.05  # salt & pepper fraction
    peak: float = 255.0  # poisson photon scale
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0.0 <= self.density <= 1.0:
            raise ValueError(f"density must be in [0, 1], got {self.density}")
        if not self.peak > 0:
            raise ValueError(f"peak must be > 0, got {self.peak}")


def add_noise(img, spec: NoiseSpec) -> np.ndarray:
    """Apply the configured noise model; accepts 2-D or (C, H, W) arrays."""
    img = np.asarray(img, dtype=np.float64)
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "gaussian":
        out = img + rng.normal(0.0, spec.sigma, img.shape) if spec.sigma > 0 else img.copy()
    elif spec.kind == "salt_pepper":
        out = img.copy()
        hit = rng.random(img.shape) < spec.density
        salt = rng.random(img.shape) < 0.5
        out[hit] = np.where(salt[hit], 1.0, 0.0)
    elif spec.kind == "poisson":
        out = rng.poisson(spec.peak * np.clip(img, 0.0, None)) / spec.peak
    else:  # speckle
        out = img * (1.0 + rng.normal(0.0, spec.sigma, img.shape)) if spec.sigma > 0 else img.copy()
    return np.clip(out, 0.0, 1.0)


def add_mixed_noise(img, seed: int = 0) -> np.ndarray:
    """Fixed demo mixture: gaussian sigma 0.05 followed by salt & pepper d 0.05."""
    root = np.random.SeedSequence(seed)
    s1, s2 = (int(s.generate_state(1)[0]) for s in root.spawn(2))
    out = add_noise(img, NoiseSpec("gaussian", sigma=0.05, seed=s1))
    return add_noise(out, NoiseSpec("salt_pepper", density=0.05, seed=s2))


class ConvOperator:
    """Replicate-boundary correlation with an odd-sized kernel.

    ``apply`` gathers clipped neighbors weighted by the kernel; as a matrix
    W this is one row per output pixel.  ``apply_transpose`` is the exact
    adjoint W^T built by scatter-adding along the same index pattern, and
    ``apply_normal`` composes them into W^T W for normal-equation solves.
    """

    def __init__(self, kernel):
        kernel = np.asarray(kernel, dtype=np.float64)
        if kernel.ndim != 2:
            raise ValueError(f"kernel must be 2-D, got shape {kernel.shape}")
        if kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
            raise ValueError(f"kernel dims must be odd, got {kernel.shape}")
        if not np.all(np.isfinite(kernel)):
            raise ValueError("kernel contains non-finite entries")
        self.kernel = kernel

    def _offsets(self):
        ry, rx = self.kernel.shape[0] // 2, self.kernel.shape[1] // 2
        for ky in range(self.kernel.shape[0]):
            for kx in range(self.kernel.shape[1]):
                yield ky - ry, kx - rx, self.kernel[ky, kx]

    def apply(self, img) -> np.ndarray:
        img = np.asarray(img, dtype=np.float64)
        h, w = img.shape
        out = np.zeros_like(img)
        yy, xx = np.indices((h, w))
        for dy, dx, k in self._offsets():
            if k == 0.0:
                continue
            ny = np.clip(yy + dy, 0, h - 1)
            nx = np.clip(xx + dx, 0, w - 1)
            out += k * img[ny, nx]
        return out

    def apply_transpose(self, img) -> np.ndarray:
        img = np.asarray(img, dtype=np.float64)
        h, w = img.shape
        out = np.zeros(img.size)
        yy, xx = np.indices((h, w))
        for dy, dx, k in self._offsets():
            if k == 0.0:
                continue
            ny = np.clip(yy + dy, 0, h - 1)
            nx = np.clip(xx + dx, 0, w - 1)
            np.add.at(out, (ny * w + nx).ravel(), k * img.ravel())
        return out.reshape(h, w)

    def apply_normal(self, img) -> np.ndarray:
        return self.apply_transpose(self.apply(img))


def convolve(op: ConvOperator, img) -> np.ndarray:
    return op.apply(img)


def convolve_transpose(op: ConvOperator, img) -> np.ndarray:
    return op.apply_transpose(img)


def gaussian_kernel(sigma: float, radius=None) -> ConvOperator:
    """Normalized truncated Gaussian stencil; default radius is ceil(3 sigma)."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if radius is None:
        radius = int(np.ceil(3.0 * sigma))
    radius = max(int(radius), 1)
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g1 = np.exp(-(ax * ax) / (2.0 * sigma * sigma))
    k = np.outer(g1, g1)
    return ConvOperator(k / k.sum())


@dataclass(frozen=True)
class DecimationSpec:
    """Nearest-neighbor decimation factor plus an optional pre-blur."""

    factor: int
    blur_sigma: float = 0.0

    def __post_init__(self):
        if self.factor < 2:
            raise ValueError(f"factor must be >= 2, got {self.factor}")
        if self.blur_sigma < 0:
            raise ValueError(f"blur_sigma must be >= 0, got {self.blur_sigma}")


def nn_downsample(img, factor: int) -> np.ndarray:
    """Keep every factor-th pixel; output dims are the ceil division."""
    img = np.asarray(img, dtype=np.float64)
    return img[::factor, ::factor].copy()


def nn_upsample(img, shape) -> np.ndarray:
    """Nearest-neighbor upsampling of a decimated grid back to ``shape``."""
    img = np.asarray(img, dtype=np.float64)
    h, w = shape
    fy = int(np.ceil(h / img.shape[0]))
    fx = int(np.ceil(w / img.shape[1]))
    ys = np.arange(h) // fy
    xs = np.arange(w) // fx
    return img[np.ix_(ys, xs)]


def degrade_depth(img, spec: DecimationSpec, noise: NoiseSpec):
    """Blur, decimate, and corrupt a [0, 1] map; also return its NN upsampling.

    Returns (low_res, upsampled) where ``upsampled`` lives on the original
    grid and serves both as the solver initialization and as the observation
    of the masked data term.
    """
    img = np.asarray(img, dtype=np.float64)
    if min(img.shape) < spec.factor:
        raise ValueError(
            f"image of shape {img.shape} smaller than decimation factor {spec.factor}"
        )
    blurred = gaussian_kernel(spec.blur_sigma).apply(img) if spec.blur_sigma > 0 else img
    low = add_noise(nn_downsample(blurred, spec.factor), noise)
    return low, nn_upsample(low, img.shape)
