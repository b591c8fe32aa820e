"""Weighted p-quantile filtering and its one-hot selection-operator form.

The filter replaces each pixel by the weighted p-quantile of its clipped
square neighborhood: window members are sorted by intensity (ties broken by
row-major position) and the output is the first sorted element whose
cumulative weight reaches fraction p of the total window weight.  Member
weights come from a Gaussian similarity kernel on a guidance image,

    w_ij = exp(-(z_i - z_j)^2 / (2 sigma_w^2)),

which makes the filter a joint/guided quantile filter; uniform weights
recover the classic order-statistic filter (p = 0.5 is the median).

Because the output of the filter at a fixed image is just a permutation-
with-repetition of its pixels, the whole operation can be frozen into a
``SelectionOperator``: a sparse matrix with exactly one unit entry per row.
Applying the operator reproduces the filter output on the image it was
built from, and small perturbations that do not change the intensity
ordering leave the operator unchanged.  Solvers treat this frozen operator
as a constant linear map, which makes the otherwise highly non-linear
filter cheap to differentiate through.
"""

from dataclasses import dataclass

import numpy as np

GUIDANCE_MODES = ("uniform", "static", "dynamic-input", "dynamic-iterate")

# Weights are floored so the cumulative sum stays strictly increasing even
# when the Gaussian kernel underflows on extreme guidance contrasts.
WEIGHT_FLOOR = 1e-300


@dataclass(frozen=True)
class QuantileConfig:
    """Hyperparameters of the weighted quantile filter.

    p          quantile fraction in [0, 1]; 0.5 is the median
    radius     half-width of the square window, i.e. (2r+1)^2 members
    sigma_w    bandwidth of the Gaussian guidance kernel
    guidance   "uniform"         all weights 1 (guidance ignored)
               "static"          weights from an external guidance image
               "dynamic-input"   weights from the fixed observed input
               "dynamic-iterate" weights from the current solver iterate
    """

    p: float = 0.5
    radius: int = 2
    sigma_w: float = 0.1
    guidance: str = "dynamic-input"

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if self.radius < 1:
            raise ValueError(f"radius must be >= 1, got {self.radius}")
        if not self.sigma_w > 0:
            raise ValueError(f"sigma_w must be > 0, got {self.sigma_w}")
        if self.guidance not in GUIDANCE_MODES:
            raise ValueError(
                f"guidance must be one of {GUIDANCE_MODES}, got {self.guidance!r}"
            )


@dataclass(frozen=True)
class SelectionOperator:
    """Frozen quantile filter: one selected source pixel per output pixel.

    ``source_index`` maps each flat pixel index i to the flat index of the
    window member selected at i.  Viewed as a matrix Q, row i has a single
    unit entry in column source_index[i], so Q f gathers pixels and Q^T f
    scatter-adds them.
    """

    source_index: np.ndarray  # flat int64, length height*width
    shape: tuple  # (height, width)

    def __post_init__(self):
        idx = np.ascontiguousarray(self.source_index, dtype=np.int64).ravel()
        object.__setattr__(self, "source_index", idx)
        h, w = self.shape
        if idx.size != h * w:
            raise ValueError("source_index length does not match shape")
        if idx.size and (idx.min() < 0 or idx.max() >= h * w):
            raise ValueError("source_index out of range")


def guidance_weight(z_i: float, z_j: float, sigma_w: float) -> float:
    """Gaussian similarity between two guidance pixels, in (0, 1].

    Equals 1 for identical pixels and decays with the squared intensity
    difference; the result is floored at WEIGHT_FLOOR instead of
    underflowing to zero.
    """
    if not sigma_w > 0:
        raise ValueError(f"sigma_w must be > 0, got {sigma_w}")
    d = np.float64(z_i) - np.float64(z_j)
    w = np.exp(-(d * d) / (2.0 * sigma_w * sigma_w))
    return float(max(w, WEIGHT_FLOOR))


def weighted_quantile(values, weights, p: float):
    """Weighted p-quantile of a value list; returns (value, original index).

    Values are sorted ascending carrying their weights along; the selected
    element is the first sorted position whose cumulative weight reaches
    p times the total weight.  Ties in value are broken by original list
    position, ascending.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    w = np.asarray(weights, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("weighted_quantile of empty input")
    if v.size != w.size:
        raise ValueError(f"{v.size} values but {w.size} weights")
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must be in [0, 1], got {p}")
    order = np.argsort(v, kind="stable")
    csum = np.cumsum(w[order])
    k = int(np.argmax(csum >= p * csum[-1]))
    src = int(order[k])
    return float(v[src]), src


def _resolve_guidance(img, cfg, guidance):
    """Pick the guidance plane for weighting, or None for uniform weights."""
    if cfg.guidance == "uniform":
        return None
    if guidance is None:
        if cfg.guidance == "static":
            raise ValueError("static guidance mode requires a guidance image")
        # Dynamic modes fall back to the filtered image itself when the
        # caller does not supply the input/iterate explicitly.
        return img
    z = np.asarray(guidance, dtype=np.float64)
    if z.shape != img.shape:
        raise ValueError(
            f"guidance shape {z.shape} does not match image shape {img.shape}"
        )
    return z


def _select_source_indices(img, cfg, z):
    """Vectorized core: flat source index of the weighted quantile per pixel.

    Builds (pixels x window) tables of member values, weights and global
    indices.  Out-of-bounds members get value +inf and weight 0 so they sort
    last and can never be selected.  A stable sort on values implements the
    row-major tie rule, and the first cumulative-weight crossing of
    p * total picks the member.
    """
    h, w = img.shape
    r = cfg.radius
    npix = h * w
    n = (2 * r + 1) ** 2
    two_sigma2 = 2.0 * cfg.sigma_w * cfg.sigma_w

    vals = np.empty((npix, n))
    wts = np.empty((npix, n))
    gidx = np.empty((npix, n), dtype=np.int64)
    yy, xx = np.indices((h, w))

    col = 0
    for dy in range(-r, r + 1):
        ny = yy + dy
        oky = (ny >= 0) & (ny < h)
        nyc = np.clip(ny, 0, h - 1)
        for dx in range(-r, r + 1):
            nx = xx + dx
            ok = oky & (nx >= 0) & (nx < w)
            nxc = np.clip(nx, 0, w - 1)
            vals[:, col] = np.where(ok, img[nyc, nxc], np.inf).ravel()
            if z is None:
                wts[:, col] = ok.ravel().astype(np.float64)
            else:
                d = z - z[nyc, nxc]
                gw = np.maximum(np.exp(-(d * d) / two_sigma2), WEIGHT_FLOOR)
                wts[:, col] = np.where(ok, gw, 0.0).ravel()
            gidx[:, col] = (nyc * w + nxc).ravel()
            col += 1

    order = np.argsort(vals, axis=1, kind="stable")
    csum = np.cumsum(np.take_along_axis(wts, order, axis=1), axis=1)
    kstar = np.argmax(csum >= cfg.p * csum[:, -1:], axis=1)
    rows = np.arange(npix)
    return gidx[rows, order[rows, kstar]]


def build_selection(img, cfg: QuantileConfig, guidance=None) -> SelectionOperator:
    """Freeze the weighted quantile filter at ``img`` into a selection operator.

    Applying the result to ``img`` reproduces ``apply_filter`` exactly;
    applied to nearby images it is the linearization of the filter.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    z = _resolve_guidance(img, cfg, guidance)
    src = _select_source_indices(img, cfg, z)
    return SelectionOperator(source_index=src, shape=img.shape)


def apply_filter(img, cfg: QuantileConfig, guidance=None) -> np.ndarray:
    """Weighted p-quantile filter of ``img`` under the given configuration.

    In uniform mode the guidance argument is ignored; in static mode it is
    required; in the dynamic modes it defaults to the image itself.
    """
    img = np.asarray(img, dtype=np.float64)
    sel = build_selection(img, cfg, guidance)
    return apply_selection(sel, img)


def apply_selection(sel: SelectionOperator, img) -> np.ndarray:
    """Forward map Q f: gather each pixel's selected source value."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != tuple(sel.shape):
        raise ValueError(f"image shape {img.shape} does not match operator {sel.shape}")
    return img.ravel()[sel.source_index].reshape(sel.shape)


def apply_selection_transpose(sel: SelectionOperator, img) -> np.ndarray:
    """Adjoint map Q^T f: scatter-add each pixel into its selected source."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != tuple(sel.shape):
        raise ValueError(f"image shape {img.shape} does not match operator {sel.shape}")
    out = np.zeros(img.size)
    np.add.at(out, sel.source_index, img.ravel())
    return out.reshape(sel.shape)
