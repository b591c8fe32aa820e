"""Image containers and shared pixel-access helpers.

Throughout the package an image is a 2-D float64 numpy array of shape
(height, width), row-major, with intensities nominally in [0, 1].  A
multi-channel image is a 3-D array of shape (channels, height, width);
a single-channel stack behaves exactly like the plain 2-D image it wraps.
All public operations return freshly allocated arrays and never mutate
their inputs, so images can be shared freely across workers.
"""

from dataclasses import dataclass

import numpy as np

# Per-channel weights of the standard RGB-to-luma conversion.
GRAYSCALE_WEIGHTS = (0.299, 0.587, 0.114)


def as_image(arr) -> np.ndarray:
    """Validate and return a 2-D float64 image.

    Raises ValueError if the array is not 2-D or contains NaN/Inf.
    """
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if img.size == 0:
        raise ValueError("empty image")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def as_multichannel(arr) -> np.ndarray:
    """Validate an image stack; promotes a single 2-D image to shape (1, H, W)."""
    mc = np.asarray(arr, dtype=np.float64)
    if mc.ndim == 2:
        mc = mc[None, :, :]
    if mc.ndim != 3 or mc.shape[0] < 1:
        raise ValueError(f"expected (channels, height, width), got shape {mc.shape}")
    if mc.shape[1] == 0 or mc.shape[2] == 0:
        raise ValueError("empty image")
    if not np.all(np.isfinite(mc)):
        raise ValueError("image contains non-finite values")
    return mc


@dataclass(frozen=True)
class Window:
    """In-bounds members of the square neighborhood around one pixel.

    ``indices`` holds global row-major pixel indices in row-major scan order
    of the window; ``values`` the matching intensities.  Windows are clipped
    at the image border, so ``size`` is (2r+1)^2 only in the interior.
    """

    center: int
    indices: np.ndarray
    values: np.ndarray

    @property
    def size(self) -> int:
        return int(self.indices.size)


def window(img, center: int, radius: int) -> Window:
    """Collect the clipped square neighborhood of ``center`` (a flat index).

    The window of radius r covers the (2r+1) x (2r+1) square around the
    center, keeping only pixels that exist in the image.  Member order is
    the row-major scan of the window, which coincides with ascending global
    row-major index.
    """
    img = as_image(img)
    h, w = img.shape
    if not 0 <= center < h * w:
        raise ValueError(f"center index {center} outside image of {h * w} pixels")
    if radius < 1:
        raise ValueError("radius must be >= 1")
    cy, cx = divmod(center, w)
    y0, y1 = max(cy - radius, 0), min(cy + radius, h - 1)
    x0, x1 = max(cx - radius, 0), min(cx + radius, w - 1)
    ys = np.arange(y0, y1 + 1)
    xs = np.arange(x0, x1 + 1)
    idx = (ys[:, None] * w + xs[None, :]).ravel()
    return Window(center=center, indices=idx, values=img.ravel()[idx])


def channel_average(mc, weights) -> np.ndarray:
    """Pixelwise weighted average of the channels of an image stack.

    With the standard grayscale weights this is the usual RGB-to-luma
    conversion; arbitrary nonnegative weights are accepted as long as at
    least one is positive.
    """
    mc = as_multichannel(mc)
    m = np.asarray(weights, dtype=np.float64).ravel()
    if m.size != mc.shape[0]:
        raise ValueError(
            f"got {m.size} channel weights for {mc.shape[0]} channels"
        )
    if np.any(m < 0) or not np.any(m > 0):
        raise ValueError("channel weights must be nonnegative with at least one positive")
    return np.tensordot(m, mc, axes=(0, 0))
