"""Node-axis Fourier transforms, complex products and activations.

Arrays follow a ``(..., n, d)`` layout: the node axis is second to last and
features are last. Leading axes are treated as a batch. The forward DFT is
unnormalized and the inverse carries the ``1/n`` factor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Activation",
    "IDENTITY",
    "SPLIT_RELU",
    "apply_activation",
    "activation_mask",
    "circular_convolve",
    "complex_matmul",
    "dft_nodes",
    "idft_nodes",
    "leaky_relu_real",
    "naive_dft",
    "to_real",
]

DFT_MODES = ("flat_1d", "planar_2d")


@dataclass(frozen=True)
class Activation:
    """Activation applied in Fourier space.

    ``kind`` is one of ``identity``, ``split_relu`` or ``leaky_relu``; the
    split variants act on real and imaginary parts independently.
    """

    kind: str = "split_relu"
    slope: float = 0.01

    def __post_init__(self):
        if self.kind not in ("identity", "split_relu", "leaky_relu"):
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ValueError(f"leaky slope must lie in (0, 1), got {self.slope}")


IDENTITY = Activation("identity")
SPLIT_RELU = Activation("split_relu")


def _check_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(x))[0]
        raise ValueError(f"{what}: non-finite value at index {tuple(int(i) for i in bad)}")


def _planar_shape(x: np.ndarray, grid: tuple[int, int]) -> tuple[int, ...]:
    n_vars, n_steps = grid
    if n_vars * n_steps != x.shape[-2]:
        raise ValueError(f"grid {grid} does not cover {x.shape[-2]} nodes")
    return x.shape[:-2] + (n_vars, n_steps, x.shape[-1])


def dft_nodes(x, mode: str = "flat_1d", grid: tuple[int, int] | None = None) -> np.ndarray:
    """Unnormalized DFT along the node axis of an ``(..., n, d)`` array.

    With ``mode="planar_2d"`` the node axis is viewed as the ``grid``
    ``(N, T)`` plane and a 2-D DFT is taken per feature channel; the result
    is flattened back to ``(..., n, d)`` in the same row-major node order.
    """
    x = np.asarray(x)
    if x.ndim < 2 or x.shape[-2] < 1:
        raise ValueError(f"expected (..., n, d) with n >= 1, got shape {x.shape}")
    _check_finite(x, "dft_nodes input")
    if mode == "flat_1d":
        return np.fft.fft(x, axis=-2)
    if mode == "planar_2d":
        if grid is None:
            raise ValueError("planar_2d mode needs grid=(N, T)")
        y = np.fft.fft2(x.reshape(_planar_shape(x, grid)), axes=(-3, -2))
        return y.reshape(x.shape)
    raise ValueError(f"unknown dft mode {mode!r}; expected one of {DFT_MODES}")


def idft_nodes(x, mode: str = "flat_1d", grid: tuple[int, int] | None = None) -> np.ndarray:
    """Inverse of :func:`dft_nodes` (scaled by ``1/n``)."""
    x = np.asarray(x)
    if x.ndim < 2 or x.shape[-2] < 1:
        raise ValueError(f"expected (..., n, d) with n >= 1, got shape {x.shape}")
    _check_finite(x, "idft_nodes input")
    if mode == "flat_1d":
        return np.fft.ifft(x, axis=-2)
    if mode == "planar_2d":
        if grid is None:
            raise ValueError("planar_2d mode needs grid=(N, T)")
        y = np.fft.ifft2(x.reshape(_planar_shape(x, grid)), axes=(-3, -2))
        return y.reshape(x.shape)
    raise ValueError(f"unknown dft mode {mode!r}; expected one of {DFT_MODES}")


def to_real(x: np.ndarray, check: bool = False, atol: float = 1e-8) -> np.ndarray:
    """Drop imaginary parts.

    With ``check=True`` (verification mode) the residual imaginary mass must
    be below ``atol``. Nonlinear activations in Fourier space break Hermitian
    symmetry, so training leaves ``check`` off.
    """
    x = np.asarray(x)
    if check and np.iscomplexobj(x):
        worst = float(np.max(np.abs(x.imag), initial=0.0))
        if worst >= atol:
            raise ValueError(f"imaginary residue {worst:.3e} exceeds {atol:.1e}")
    return np.real(x).copy()


def complex_matmul(x, w) -> np.ndarray:
    x = np.asarray(x)
    w = np.asarray(w)
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ValueError(f"cannot multiply {x.shape} by {w.shape}")
    return x @ w


def leaky_relu_real(x, slope: float = 0.01) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, x, slope * x)


def _pairs(x: np.ndarray) -> np.ndarray:
    """Float view ``(..., 2*d)`` interleaving real and imaginary parts."""
    return np.ascontiguousarray(x, dtype=complex).view(np.float64)


def activation_mask(z: np.ndarray, act: Activation) -> np.ndarray | None:
    """Elementwise derivative of a split activation, packed as complex.

    The real part is the derivative w.r.t. the real input, the imaginary part
    the derivative w.r.t. the imaginary input. ``None`` means identity.
    """
    if act.kind == "identity":
        return None
    low = 0.0 if act.kind == "split_relu" else act.slope
    return np.where(_pairs(z) > 0, 1.0, low).view(complex)


def apply_activation(x, act: Activation) -> np.ndarray:
    x = np.asarray(x)
    if act.kind == "identity":
        return x
    v = _pairs(x)
    if act.kind == "split_relu":
        return np.maximum(v, 0.0).view(complex)
    return np.where(v > 0, v, act.slope * v).view(complex)


def naive_dft(x) -> np.ndarray:
    """Direct O(n^2) DFT along axis 0, used as a reference."""
    x = np.asarray(x, dtype=complex)
    n = x.shape[0]
    flat = x.reshape(n, -1)
    out = np.empty_like(flat)
    j = np.arange(n)
    # i*j reduced mod n keeps the twiddle angles exact for large n
    for start in range(0, n, 256):
        i = np.arange(start, min(start + 256, n))
        phase = np.outer(i, j) % n
        out[i] = np.exp(-2j * np.pi * phase / n) @ flat
    return out.reshape(x.shape)


def circular_convolve(x, h) -> np.ndarray:
    """Circular convolution of two length-n vectors by direct summation."""
    x = np.asarray(x)
    h = np.asarray(h)
    n = len(x)
    if len(h) != n:
        raise ValueError("circular convolution needs equal lengths")
    out = np.zeros(n, dtype=np.result_type(x, h))
    for i in range(n):
        for j in range(n):
            out[i] += x[j] * h[(i - j) % n]
    return out
