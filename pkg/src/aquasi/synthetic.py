"""Seeded synthetic test scenes.

Piecewise-constant layouts are near fixed points of the median filter, which
makes them convenient ground truths: the quantile residual of the clean
scene is tightly concentrated at zero while any added noise spreads it out.
"""

import numpy as np


def piecewise_constant(height: int, width: int, cells: int = 4, seed: int = 0) -> np.ndarray:
    """Grid of constant rectangular cells with seeded random levels in [0, 1]."""
    rng = np.random.default_rng(seed)
    levels = rng.uniform(0.05, 0.95, size=(cells, cells))
    ys = (np.arange(height) * cells) // height
    xs = (np.arange(width) * cells) // width
    return levels[np.ix_(ys, xs)]


def stripes(height: int, width: int, band: int = 8, levels=(0.2, 0.8)) -> np.ndarray:
    """Full-width horizontal bands; an exact median-filter fixed point when
    the band height exceeds the window radius."""
    rows = (np.arange(height) // band) % len(levels)
    return np.asarray(levels, dtype=np.float64)[rows][:, None] * np.ones((1, width))


def ramp(height: int, width: int) -> np.ndarray:
    """Smooth horizontal ramp from 0 to 1."""
    return np.tile(np.linspace(0.0, 1.0, width), (height, 1))


def depth_scene(height: int, width: int):
    """A three-region depth map plus a color image with matching boundaries.

    Returns (depth, rgb) where rgb has shape (3, height, width).  Each depth
    region gets a distinct high-contrast color, so the luma of the color
    image is a clean static guidance signal for joint upsampling.
    """
    depth = np.full((height, width), 0.2)
    depth[:, width // 2 :] = 0.8
    depth[(5 * height) // 8 :, : (5 * width) // 16] = 0.5
    rgb = np.full((3, height, width), 0.1)
    rgb[:, :, width // 2 :] = 0.9
    rgb[:, (5 * height) // 8 :, : (5 * width) // 16] = 0.5
    return depth, rgb
