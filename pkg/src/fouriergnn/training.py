"""Loss, reverse-mode gradients, RMSProp and the training loop.

Complex parameters are treated as pairs of real parameters. Their gradient
is stored as one complex array ``dL/dRe + 1j * dL/dIm``, so a complex weight
``w`` and its gradient ``g`` obey ``dL = Re(sum(conj(g) * dw))``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .model import FourierGNN, ModelConfig, MtsWindow, forward_trace
from .spectral import activation_mask

log = logging.getLogger(__name__)

ABLATIONS = ("full", "no_embedding", "no_dynamic_fgo", "no_residual", "no_summation")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    epochs: int = 100
    batch_size: int = 32
    rmsprop_decay: float = 0.9
    rmsprop_eps: float = 1e-8
    seed: int = 0
    ablation: str = "full"

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.rmsprop_decay < 1.0:
            raise ValueError(f"rmsprop_decay must lie in (0, 1), got {self.rmsprop_decay}")
        if self.rmsprop_eps < 0:
            raise ValueError(f"rmsprop_eps must be >= 0, got {self.rmsprop_eps}")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return float(np.mean((pred - target) ** 2))


def stack_windows(windows: list[MtsWindow]) -> tuple[np.ndarray, np.ndarray]:
    if not windows:
        raise ValueError("empty batch")
    return np.stack([w.input for w in windows]), np.stack([w.target for w in windows])


def _finite(name: str, value: np.ndarray) -> None:
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite values in {name}")


def _outer_sum(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``sum_{b,n} a[b,n,:]^T g[b,n,:]`` as one matrix product."""
    return a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])


def _split_mask(g: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return g
    return (np.ascontiguousarray(g).view(np.float64) * mask.view(np.float64)).view(complex)


def backward(model: FourierGNN, inputs, targets=None) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients for a batch.

    ``inputs`` is either a list of :class:`MtsWindow` or an ``(B, N, T)``
    array paired with ``(B, N, tau)`` ``targets``. The loss is the mean of
    the per-window MSE.
    """
    if targets is None:
        inputs, targets = stack_windows(inputs)
    cfg = model.config
    tr = forward_trace(model, inputs)
    for name in ("emb", "p0", "spec_out", "y", "h1", "h2", "pred"):
        _finite(name, tr[name])
    for k, z in enumerate(tr["pre"]):
        _finite(f"fgo.{k}.preactivation", z)

    pred = tr["pred"]
    targets = np.asarray(targets, dtype=float)
    if pred.shape != targets.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {targets.shape}")
    diff = pred - targets
    loss = float(np.mean(diff**2))
    p = model.params
    grads = {name: np.zeros_like(value) for name, value in p.items()}
    slope = cfg.leaky_slope

    # FFN head
    g = 2.0 * diff / diff.size
    grads["head.w3"] += _outer_sum(tr["a2"], g)
    grads["head.b3"] += g.sum(axis=(0, 1))
    g = (g @ p["head.w3"].T) * np.where(tr["h2"] >= 0, 1.0, slope)
    grads["head.w2"] += _outer_sum(tr["a1"], g)
    grads["head.b2"] += g.sum(axis=(0, 1))
    g = (g @ p["head.w2"].T) * np.where(tr["h1"] >= 0, 1.0, slope)
    grads["head.w1"] += _outer_sum(tr["flat"], g)
    grads["head.b1"] += g.sum(axis=(0, 1))
    g_flat = g @ p["head.w1"].T

    y4 = tr["y4"]
    if cfg.has_time_reduce:
        g_red = g_flat.reshape(y4.shape[:2] + (cfg.reduced_steps, cfg.embed_dim))
        grads["head.time_reduce"] += _outer_sum(np.swapaxes(y4, -1, -2), np.swapaxes(g_red, -1, -2))
        g_y = np.swapaxes(np.swapaxes(g_red, -1, -2) @ p["head.time_reduce"].T, -1, -2)
    else:
        g_y = g_flat
    g_y = g_y.reshape(tr["y"].shape)

    # y = Re(idft(spec_out)); the adjoint of idft is dft / n
    grid = (cfg.n_vars, cfg.n_steps)
    if cfg.dft_mode == "flat_1d":
        g_spec = np.fft.fft(g_y, axis=-2) / cfg.n_nodes
    else:
        g_spec = np.fft.fft2(g_y.reshape(g_y.shape[:1] + grid + g_y.shape[-1:]), axes=(1, 2))
        g_spec = g_spec.reshape(g_y.shape) / cfg.n_nodes

    g_p0 = _fgo_backward(model, tr, g_spec, grads)

    # p0 = dft(emb) with real emb; the adjoint of dft is n * idft
    if cfg.dft_mode == "flat_1d":
        g_emb = np.real(np.fft.ifft(g_p0, axis=-2)) * cfg.n_nodes
    else:
        g_emb = np.fft.ifft2(g_p0.reshape(g_p0.shape[:1] + grid + g_p0.shape[-1:]), axes=(1, 2))
        g_emb = np.real(g_emb).reshape(g_p0.shape) * cfg.n_nodes
    if cfg.use_embedding:
        grads["embedding"] += _outer_sum(tr["nodes"][..., None], g_emb)[0]

    for name, value in grads.items():
        _finite(f"gradient of {name}", value)
    return loss, grads


def _fgo_backward(model, tr, g_out, grads):
    """Backpropagate through the operator stack; returns the gradient at F(x)."""
    cfg = model.config
    layers = model.layers
    n_layers = len(layers)
    zero = np.zeros_like(g_out)
    # gradient arriving at each term's activation output
    if cfg.summation:
        term_grad = [g_out] * n_layers
    else:
        term_grad = [zero] * (n_layers - 1) + [g_out]
    carry = zero  # gradient coming back from deeper layers
    for k in reversed(range(n_layers)):
        j = 0 if cfg.shared_fgo else k
        mask = activation_mask(tr["pre"][k], cfg.act)
        if cfg.recursive_activation:
            g_z = _split_mask(term_grad[k] + carry, mask)
            g_prod = g_z
        else:
            g_z = _split_mask(term_grad[k], mask)
            g_prod = g_z + carry
        grads[f"fgo.{j}.bias"] += g_z.sum(axis=(0, 1))
        grads[f"fgo.{j}.weight"] += _outer_sum(np.conj(tr["fgo_in"][k]), g_prod)
        carry = g_prod @ layers[k].weight.conj().T
    if cfg.summation and cfg.residual:
        carry = carry + g_out
    return carry


@dataclass
class RmspropState:
    square_avg: dict[str, np.ndarray] = field(default_factory=dict)


def _scaled(grad, avg, eps):
    denom = np.sqrt(avg) + eps
    # zero history and zero eps only happens with a zero gradient
    return np.divide(grad, denom, out=np.zeros_like(grad), where=denom > 0)


def rmsprop_step(params, grads, state: RmspropState, lr: float, decay: float = 0.9, eps: float = 1e-8):
    """In-place RMSProp update; real and imaginary parts are scaled separately."""
    for name, grad in grads.items():
        if np.iscomplexobj(grad):
            sq = grad.real**2 + 1j * grad.imag**2
        else:
            sq = grad**2
        avg = state.square_avg.get(name)
        if avg is None:
            avg = np.zeros_like(grad)
        avg = decay * avg + (1.0 - decay) * sq
        state.square_avg[name] = avg
        if np.iscomplexobj(grad):
            step = _scaled(grad.real, avg.real, eps) + 1j * _scaled(grad.imag, avg.imag, eps)
        else:
            step = _scaled(grad, avg, eps)
        params[name] -= lr * step
    return params, state


def dataset_mse(model: FourierGNN, windows: list[MtsWindow], batch_size: int = 256) -> float:
    total, count = 0.0, 0
    for start in range(0, len(windows), batch_size):
        x, y = stack_windows(windows[start:start + batch_size])
        pred = model.predict(x)
        total += float(np.sum((pred - y) ** 2))
        count += pred.size
    return total / count


@dataclass
class FitResult:
    model: FourierGNN
    best_model: FourierGNN
    trace: list[tuple[int, float, float]]  # (epoch, train_mse, val_mse); epoch 0 = before training
    best_epoch: int
    best_val_mse: float


def fit(model: FourierGNN, train: list[MtsWindow], val: list[MtsWindow], config: TrainConfig,
        progress: bool = False) -> FitResult:
    """Train with shuffled mini-batches; keep the parameters with lowest validation MSE."""
    if not train or not val:
        raise ValueError("fit needs non-empty training and validation windows")
    model = model.copy()
    rng = np.random.default_rng(config.seed)
    x_all, y_all = stack_windows(train)
    state = RmspropState()
    val_mse = dataset_mse(model, val)
    trace = [(0, dataset_mse(model, train), val_mse)]
    best, best_epoch, best_val = model.copy(), 0, val_mse
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train))
        running = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            try:
                loss, grads = backward(model, x_all[idx], y_all[idx])
            except FloatingPointError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}") from exc
            running += loss * len(idx)
            rmsprop_step(model.params, grads, state, config.learning_rate,
                         config.rmsprop_decay, config.rmsprop_eps)
        train_mse = running / len(order)
        val_mse = dataset_mse(model, val)
        if not (np.isfinite(train_mse) and np.isfinite(val_mse)):
            raise TrainingDiverged(f"epoch {epoch}: loss became non-finite")
        trace.append((epoch, train_mse, val_mse))
        if val_mse < best_val:
            best, best_epoch, best_val = model.copy(), epoch, val_mse
        if progress:
            log.info("epoch %d train_mse %.6f val_mse %.6f", epoch, train_mse, val_mse)
    return FitResult(model, best, trace, best_epoch, best_val)


def make_ablation_variant(model: FourierGNN, kind: str, seed: int = 0) -> FourierGNN:
    """Copy of ``model`` with one component removed.

    ``no_embedding`` changes tensor shapes (d becomes 1), so its parameters
    are freshly initialised from ``seed``. ``no_dynamic_fgo`` keeps the first
    layer's operator and shares it across all layers.
    """
    if kind not in ABLATIONS:
        raise ValueError(f"unknown ablation {kind!r}; expected one of {ABLATIONS}")
    cfg = model.config
    if kind == "full":
        return model.copy()
    if kind == "no_embedding":
        return FourierGNN.init(replace(cfg, use_embedding=False, embed_dim=1), seed)
    if kind == "no_residual":
        return FourierGNN(replace(cfg, residual=False), {k: v.copy() for k, v in model.params.items()})
    if kind == "no_summation":
        return FourierGNN(replace(cfg, summation=False), {k: v.copy() for k, v in model.params.items()})
    params = {k: v.copy() for k, v in model.params.items() if not k.startswith("fgo.")}
    if cfg.shared_fgo:
        params.update({k: v.copy() for k, v in model.params.items() if k.startswith("fgo.")})
    else:
        params["fgo.0.weight"] = model.params["fgo.0.weight"].copy()
        params["fgo.0.bias"] = model.params["fgo.0.bias"].copy()
    return FourierGNN(replace(cfg, shared_fgo=True), params)


def with_ablation(cfg: ModelConfig, kind: str) -> ModelConfig:
    """Model config for an ablation variant built from scratch."""
    if kind not in ABLATIONS:
        raise ValueError(f"unknown ablation {kind!r}; expected one of {ABLATIONS}")
    return {
        "full": cfg,
        "no_embedding": replace(cfg, use_embedding=False, embed_dim=1),
        "no_dynamic_fgo": replace(cfg, shared_fgo=True),
        "no_residual": replace(cfg, residual=False),
        "no_summation": replace(cfg, summation=False),
    }[kind]


def finite_difference_check(model: FourierGNN, inputs, targets, n_coords: int = 50,
                            step: float = 1e-5, seed: int = 0, floor: float = 1e-6) -> list[dict]:
    """Compare analytic gradients with central differences on random coordinates.

    Each tensor gets ``n_coords`` coordinates (or all of them when smaller);
    complex tensors are probed on real and imaginary parts. ``floor`` bounds
    the denominator of the relative error so near-zero gradients are judged
    on absolute error.
    """
    _, grads = backward(model, inputs, targets)
    rng = np.random.default_rng(seed)
    rows = []
    for name, value in model.params.items():
        parts = ("real", "imag") if np.iscomplexobj(value) else ("real",)
        for part in parts:
            size = value.size
            picks = rng.choice(size, size=min(n_coords, size), replace=False)
            for flat_index in picks:
                idx = np.unravel_index(flat_index, value.shape)
                delta = step if part == "real" else 1j * step
                original = value[idx]
                value[idx] = original + delta
                up = mse_loss(model.predict(inputs), targets)
                value[idx] = original - delta
                down = mse_loss(model.predict(inputs), targets)
                value[idx] = original
                numeric = (up - down) / (2 * step)
                g = grads[name][idx]
                analytic = float(g.real if part == "real" else g.imag)
                denom = max(abs(numeric), abs(analytic), floor)
                rows.append(dict(name=name, part=part, index=tuple(int(i) for i in idx),
                                 analytic=analytic, numeric=numeric,
                                 rel_error=abs(analytic - numeric) / denom))
    return rows
