"""Regularization terms and their smoothed gradients and proximal pieces.

The sparse quantile-residual prior is the L1 norm of f - Qf for a frozen
selection operator Q.  Its gradient under the frozen linearization is
(I - Q)^T sign(f - Qf); the sign is epsilon-smoothed as

    sign(u) ~ u / sqrt(u^2 + eps),

which is the exact derivative of the smoothed magnitude sqrt(u^2 + eps).
Anisotropic total variation and the quantile-filter variant of
regularization-by-denoising, f^T (f - Qf), are provided for comparison
runs.  All gradients treat Q as a constant map; the dependence of the
selection on f is deliberately not differentiated.
"""

import numpy as np

from .quantile import SelectionOperator, apply_selection, apply_selection_transpose


def smoothed_sign(u, epsilon: float):
    """Odd, bounded surrogate of sign(u) with slope 1/sqrt(eps) at zero."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    u = np.asarray(u, dtype=np.float64)
    out = u / np.sqrt(u * u + epsilon)
    return float(out) if out.ndim == 0 else out


def shrink(u, gamma: float):
    """Soft-thresholding sign(u) * max(|u| - gamma, 0), the prox of gamma*|.|_1."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    u = np.asarray(u, dtype=np.float64)
    out = np.sign(u) * np.maximum(np.abs(u) - gamma, 0.0)
    return float(out) if out.ndim == 0 else out


def aquasi_value(f, sel: SelectionOperator) -> float:
    """L1 norm of the quantile residual f - Qf; zero iff f is a fixed point of Q."""
    f = np.asarray(f, dtype=np.float64)
    return float(np.sum(np.abs(f - apply_selection(sel, f))))


def aquasi_gradient(f, sel: SelectionOperator, epsilon: float) -> np.ndarray:
    """(I - Q)^T applied to the smoothed sign of the quantile residual."""
    f = np.asarray(f, dtype=np.float64)
    s = smoothed_sign(f - apply_selection(sel, f), epsilon)
    return s - apply_selection_transpose(sel, s)


def grad_x(f) -> np.ndarray:
    """Forward difference in x with replicate boundary (last column zero)."""
    f = np.asarray(f, dtype=np.float64)
    out = np.zeros_like(f)
    out[:, :-1] = f[:, 1:] - f[:, :-1]
    return out


def grad_y(f) -> np.ndarray:
    """Forward difference in y with replicate boundary (last row zero)."""
    f = np.asarray(f, dtype=np.float64)
    out = np.zeros_like(f)
    out[:-1, :] = f[1:, :] - f[:-1, :]
    return out


def grad_x_adjoint(s) -> np.ndarray:
    """Exact adjoint of grad_x (negative divergence in x)."""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    out[:, :-1] -= s[:, :-1]
    out[:, 1:] += s[:, :-1]
    return out


def grad_y_adjoint(s) -> np.ndarray:
    """Exact adjoint of grad_y (negative divergence in y)."""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    out[:-1, :] -= s[:-1, :]
    out[1:, :] += s[:-1, :]
    return out


def tv_value(f) -> float:
    """Anisotropic total variation |grad_x f|_1 + |grad_y f|_1."""
    return float(np.sum(np.abs(grad_x(f))) + np.sum(np.abs(grad_y(f))))


def tv_gradient(f, epsilon: float) -> np.ndarray:
    """Smoothed TV subgradient via the adjoint forward differences."""
    return grad_x_adjoint(smoothed_sign(grad_x(f), epsilon)) + grad_y_adjoint(
        smoothed_sign(grad_y(f), epsilon)
    )


def red_value(f, sel: SelectionOperator) -> float:
    """Denoiser-residual cross term <f, f - Qf> used for comparison runs."""
    f = np.asarray(f, dtype=np.float64)
    return float(np.sum(f * (f - apply_selection(sel, f))))


def red_gradient(f, sel: SelectionOperator) -> np.ndarray:
    """(2I - Q - Q^T) f, the frozen-Q gradient of the cross term.

    The underlying framework only identifies this with a prior gradient for
    denoisers with symmetric Jacobian, which quantile filters are not; the
    frozen-selection convention here is a pragmatic choice for side-by-side
    comparisons.
    """
    f = np.asarray(f, dtype=np.float64)
    return 2.0 * f - apply_selection(sel, f) - apply_selection_transpose(sel, f)
