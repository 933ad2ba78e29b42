"""Brute-force time-domain references for the Fourier graph operator.

Everything here uses dense matrices and explicit loops so that it stays
independent of the fast spectral path it is used to check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import FgoLayer, fgo_forward
from .spectral import IDENTITY, circular_convolve, dft_nodes, idft_nodes

EQUIVALENCE_GRID = dict(n=(4, 8, 16), d=(1, 2, 4), K=(0, 1, 2, 3), seeds=range(10))
EQUIVALENCE_TOL = 1e-8
CONVOLUTION_TOL = 1e-9


@dataclass(frozen=True)
class GreenKernelGso:
    """Circulant shift operator ``matrix[i, j] = kernel[(i - j) mod n]``."""

    kernel: np.ndarray

    @property
    def n(self) -> int:
        return len(self.kernel)

    @property
    def matrix(self) -> np.ndarray:
        n = self.n
        out = np.empty((n, n), dtype=self.kernel.dtype)
        for i in range(n):
            for j in range(n):
                out[i, j] = self.kernel[(i - j) % n]
        return out


@dataclass(frozen=True)
class TimeDomainLayer:
    a: GreenKernelGso
    w: np.ndarray  # (d, d)


def fgo_from_kernel(layer: TimeDomainLayer) -> np.ndarray:
    """Per-frequency operator ``F(kappa)`` of shape ``(n, d, d)``.

    ``kappa[i] = kernel[i] * W``, so frequency ``f`` carries
    ``DFT(kernel)[f] * W``. Applied as ``Y[f] = X_hat[f] @ S[f]``.
    """
    kernel_hat = dft_nodes(np.asarray(layer.a.kernel)[:, None])[:, 0]
    return kernel_hat[:, None, None] * np.asarray(layer.w)[None, :, :]


def apply_fgo(spectrum: np.ndarray, operator: np.ndarray) -> np.ndarray:
    """Multiply each frequency row by its own ``d x d`` matrix."""
    return np.einsum("fi,fij->fj", spectrum, operator)


def time_domain_multi_order(x: np.ndarray, layers: list[TimeDomainLayer]) -> np.ndarray:
    """``sum_k A_k...A_1 X W_1...W_k`` with dense products; k=0 is ``X``."""
    x = np.asarray(x)
    n, d = x.shape
    total = x.astype(np.result_type(x, float)).copy()
    a_prod = np.eye(n)
    w_prod = np.eye(d)
    for k, layer in enumerate(layers):
        a = layer.a.matrix
        if a.shape != (n, n) or layer.w.shape != (d, d):
            raise ValueError(f"layer {k}: A {a.shape}, W {layer.w.shape} incompatible with X {x.shape}")
        a_prod = a @ a_prod
        w_prod = w_prod @ layer.w
        total = total + a_prod @ x @ w_prod
    return total


def spectral_multi_order(x: np.ndarray, layers: list[TimeDomainLayer]) -> np.ndarray:
    """``IDFT(sum_k F(X) S_1 ... S_k)`` using the per-frequency operators."""
    p = dft_nodes(x)
    total = p.copy()
    for layer in layers:
        p = apply_fgo(p, fgo_from_kernel(layer))
        total = total + p
    return idft_nodes(total)


def random_layers(n: int, d: int, k: int, rng: np.random.Generator) -> list[TimeDomainLayer]:
    return [
        TimeDomainLayer(GreenKernelGso(rng.uniform(-1, 1, n)), rng.uniform(-1, 1, (d, d)))
        for _ in range(k)
    ]


def verify_multi_order_equivalence(n: int, d: int, k: int, seed: int, max_n: int = 64) -> dict:
    """Spectral recursion vs dense multi-order convolution on random circulant layers."""
    if n > max_n or d > 8 or k > 4:
        raise ValueError(f"grid point (n={n}, d={d}, K={k}) exceeds the verification caps")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, d))
    layers = random_layers(n, d, k, rng)
    err = float(np.max(np.abs(spectral_multi_order(x, layers) - time_domain_multi_order(x, layers))))
    return dict(n=n, d=d, K=k, seed=seed, max_abs_error=err, passed=err < EQUIVALENCE_TOL)


def verify_space_invariant(n: int, d: int, k: int, seed: int) -> dict:
    """Same check with ``kernel = c * delta`` fed through the model's d x d FGO.

    A scaled delta kernel gives ``A = c I`` and a frequency-independent
    operator ``c W``, which is exactly the n-invariant layer the model stores.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (n, d))
    layers, fgo = [], []
    for _ in range(k):
        c = rng.uniform(-1, 1)
        w = rng.uniform(-1, 1, (d, d))
        kernel = np.zeros(n)
        kernel[0] = c
        layers.append(TimeDomainLayer(GreenKernelGso(kernel), w))
        fgo.append(FgoLayer((c * w).astype(complex), np.zeros(d, dtype=complex)))
    expected = time_domain_multi_order(x, layers)
    if k == 0:
        got = idft_nodes(dft_nodes(x))
    else:
        got = idft_nodes(fgo_forward(x, fgo, IDENTITY))
    err = float(np.max(np.abs(got - expected)))
    return dict(n=n, d=d, K=k, seed=seed, max_abs_error=err, passed=err < EQUIVALENCE_TOL)


def verify_convolution_theorem(n: int, seed: int) -> dict:
    if n > 64:
        raise ValueError("convolution check is capped at n = 64")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    h = rng.uniform(-1, 1, n)
    lhs = dft_nodes(circular_convolve(x, h)[:, None])[:, 0]
    rhs = dft_nodes(x[:, None])[:, 0] * dft_nodes(h[:, None])[:, 0]
    err = float(np.max(np.abs(lhs - rhs)))
    return dict(n=n, seed=seed, max_abs_error=err, passed=err < CONVOLUTION_TOL)


def circulant_diagonalization_error(kernel: np.ndarray) -> float:
    """Largest off-diagonal magnitude of ``F C F^-1`` for the circulant ``C``."""
    n = len(kernel)
    f = np.exp(-2j * np.pi * (np.outer(np.arange(n), np.arange(n)) % n) / n)
    m = f @ GreenKernelGso(np.asarray(kernel)).matrix @ np.conj(f) / n
    return float(np.max(np.abs(m - np.diag(np.diag(m)))))


def equivalence_grid(n=EQUIVALENCE_GRID["n"], d=EQUIVALENCE_GRID["d"], k=EQUIVALENCE_GRID["K"],
                     seeds=EQUIVALENCE_GRID["seeds"]) -> list[dict]:
    return [verify_multi_order_equivalence(nn, dd, kk, s) for nn in n for dd in d for kk in k for s in seeds]
