"""Forecast metrics, split evaluation and the complexity benchmark."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from threadpoolctl import threadpool_limits

from .data import MinMaxStats, minmax_invert
from .model import FgoLayer, FourierGNN, MtsWindow, fgo_forward
from .spectral import SPLIT_RELU

MAPE_EPS = 1e-8


@dataclass
class MetricReport:
    mae: float
    rmse: float
    mape_percent: float
    n_masked_mape_terms: int = 0
    per_horizon: list[tuple[float, float, float]] = field(default_factory=list)

    def row(self) -> dict:
        return dict(mae=self.mae, rmse=self.rmse, mape_percent=self.mape_percent,
                    n_masked_mape_terms=self.n_masked_mape_terms)


def _aggregate(err: np.ndarray, truth: np.ndarray) -> tuple[float, float, float, int]:
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err**2)))
    keep = np.abs(truth) >= MAPE_EPS
    n_masked = int(truth.size - keep.sum())
    if keep.any():
        mape = float(np.mean(np.abs(err[keep] / truth[keep])) * 100.0)
    else:
        mape = float("nan")
    return mae, rmse, mape, n_masked


def compute_metrics(pred, truth) -> MetricReport:
    """MAE, RMSE and MAPE over arrays whose last axis is the horizon.

    MAPE skips terms with ``|truth| < 1e-8`` and records how many it skipped.
    """
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    err = truth - pred
    mae, rmse, mape, n_masked = _aggregate(err, truth)
    per_h = []
    for h in range(pred.shape[-1]):
        m, r, p, _ = _aggregate(err[..., h], truth[..., h])
        per_h.append((m, r, p))
    return MetricReport(mae, rmse, mape, n_masked, per_h)


def repeat_last(inputs: np.ndarray, horizon: int) -> np.ndarray:
    """Naive forecast repeating the last observed value of each variable."""
    inputs = np.asarray(inputs, dtype=float)
    return np.repeat(inputs[..., -1:], horizon, axis=-1)


def forecast(predictor: FourierGNN | Callable, windows: list[MtsWindow], batch_size: int = 256) -> np.ndarray:
    """Stack forecasts ``(W, N, tau)``; ``predictor`` maps ``(B, N, T)`` to ``(B, N, tau)``."""
    fn = predictor.predict if isinstance(predictor, FourierGNN) else predictor
    out = []
    for start in range(0, len(windows), batch_size):
        out.append(fn(np.stack([w.input for w in windows[start:start + batch_size]])))
    return np.concatenate(out)


def evaluate_split(predictor, windows: list[MtsWindow], stats: MinMaxStats | None = None,
                   denormalize: bool = False) -> MetricReport:
    if not windows:
        raise ValueError("no windows to evaluate")
    pred = forecast(predictor, windows)
    truth = np.stack([w.target for w in windows])
    if denormalize:
        if stats is None:
            raise ValueError("denormalize needs min-max statistics")
        # variables sit on axis -2 of (W, N, tau)
        pred = minmax_invert(pred, stats, axis=-2)
        truth = minmax_invert(truth, stats, axis=-2)
    return compute_metrics(pred, truth)


def repeat_last_predictor(horizon: int) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: repeat_last(x, horizon)


# -- complexity benchmark -------------------------------------------------


@dataclass
class BenchReport:
    n: list[int]
    spectral_mean: list[float]
    spectral_std: list[float]
    dense_n: list[int]
    dense_mean: list[float]
    dense_std: list[float]
    spectral_slope: float
    dense_slope: float

    def rows(self) -> list[tuple[str, int, float, float]]:
        out = [("spectral", n, m, s) for n, m, s in zip(self.n, self.spectral_mean, self.spectral_std)]
        out += [("dense", n, m, s) for n, m, s in zip(self.dense_n, self.dense_mean, self.dense_std)]
        return out


def loglog_slope(n, seconds) -> float:
    return float(np.polyfit(np.log(np.asarray(n, float)), np.log(np.asarray(seconds, float)), 1)[0])


def dense_multi_order(x: np.ndarray, adjs: list[np.ndarray], weights: list[np.ndarray]) -> np.ndarray:
    """Time-domain counterpart: ``sum_k A_k...A_1 X W_1...W_k`` with dense A."""
    total = x.copy()
    h = x
    for a, w in zip(adjs, weights):
        h = a @ h @ w
        total = total + h
    return total


def _time_interleaved(fns: list, repeats: int) -> list[tuple[float, float]]:
    """Mean and std wall time per function.

    Rounds visit every function once, so a burst of background load is spread
    over all problem sizes instead of inflating one of them. Each sample is
    preceded by an untimed call so it measures warm-cache steady state.
    """
    samples = [[] for _ in fns]
    for _ in range(repeats):
        for fn, bucket in zip(fns, samples):
            fn()  # warm-up, discarded
            t0 = time.perf_counter()
            fn()
            bucket.append(time.perf_counter() - t0)
    return [(float(np.mean(b)), float(np.std(b))) for b in samples]


def bench_scaling(d: int = 32, k: int = 3, n_list=(512, 1024, 2048, 4096, 8192),
                  dense_n_list=(256, 512, 1024, 2048), repeats: int = 5, seed: int = 0) -> BenchReport:
    """Wall-clock scaling of the spectral FGO stack against dense graph shifts."""
    if repeats < 3:
        raise ValueError("repeats must be at least 3")
    for ns in (n_list, dense_n_list):
        if list(ns) != sorted(set(ns)):
            raise ValueError("n values must be strictly increasing")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(d)
    layers = [FgoLayer(rng.uniform(-scale, scale, (d, d)) + 1j * rng.uniform(-scale, scale, (d, d)),
                       np.zeros(d, complex)) for _ in range(k)]
    weights = [rng.uniform(-scale, scale, (d, d)) for _ in range(k)]

    def spectral(n):
        x = rng.uniform(-1, 1, (n, d))
        return lambda: np.fft.ifft(fgo_forward(x, layers, SPLIT_RELU), axis=0).real

    def dense(n):
        x = rng.uniform(-1, 1, (n, d))
        adjs = [rng.uniform(0, 1, (n, n)) / n for _ in range(k)]
        return lambda: dense_multi_order(x, adjs, weights)

    with threadpool_limits(limits=1):
        spec = _time_interleaved([spectral(n) for n in n_list], repeats)
        dense_t = _time_interleaved([dense(n) for n in dense_n_list], repeats)
    spec_mean, spec_std = [m for m, _ in spec], [s for _, s in spec]
    dense_mean, dense_std = [m for m, _ in dense_t], [s for _, s in dense_t]
    return BenchReport(list(n_list), spec_mean, spec_std, list(dense_n_list), dense_mean, dense_std,
                       loglog_slope(n_list, spec_mean), loglog_slope(dense_n_list, dense_mean))
