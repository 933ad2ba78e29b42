"""FourierGNN forward pass over hypervariate graphs.

A window of ``N`` variables by ``T`` steps becomes ``N*T`` graph nodes in
row-major (variable, step) order. Node scalars are lifted to ``d`` features,
moved to Fourier space, pushed through a stack of ``d x d`` complex Fourier
graph operators, brought back and projected onto the horizon by a small FFN.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .spectral import (
    DFT_MODES,
    Activation,
    apply_activation,
    dft_nodes,
    idft_nodes,
    leaky_relu_real,
    to_real,
)

CHECKPOINT_FORMAT = "fouriergnn-checkpoint/1"
MAX_ADJACENCY_NODES = 4096


@dataclass
class MtsWindow:
    input: np.ndarray  # (N, T)
    target: np.ndarray  # (N, tau)
    origin_index: int = 0

    def __post_init__(self):
        self.input = np.asarray(self.input, dtype=float)
        self.target = np.asarray(self.target, dtype=float)
        if self.input.ndim != 2 or self.target.ndim != 2:
            raise ValueError("window input and target must be 2-D (N, steps)")
        if self.input.shape[0] != self.target.shape[0]:
            raise ValueError(
                f"input has {self.input.shape[0]} variables, target {self.target.shape[0]}"
            )
        if min(self.input.shape + self.target.shape) < 1:
            raise ValueError("empty window")
        if not (np.all(np.isfinite(self.input)) and np.all(np.isfinite(self.target))):
            raise ValueError(f"non-finite values in window at origin {self.origin_index}")


@dataclass(frozen=True)
class HypervariateGraph:
    """Fully connected graph with one node per (variable, step) entry.

    The adjacency is implicit: the Fourier operators never materialise it.
    """

    node_features: np.ndarray  # (N*T, 1)
    n_vars: int
    n_steps: int

    @property
    def n_nodes(self) -> int:
        return self.n_vars * self.n_steps


@dataclass
class FgoLayer:
    weight: np.ndarray  # complex (d, d)
    bias: np.ndarray  # complex (d,)


@dataclass
class FfnHead:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    time_reduce: np.ndarray | None = None  # (T, l); None when no reduction
    leaky_slope: float = 0.01


@dataclass
class ModelConfig:
    n_vars: int
    n_steps: int = 12
    horizon: int = 12
    embed_dim: int = 128
    n_layers: int = 3
    reduce_dim: int | None = None
    ffn_dim1: int = 64
    ffn_dim2: int = 256
    dft_mode: str = "flat_1d"
    activation: str = "split_relu"
    recursive_activation: bool = False
    leaky_slope: float = 0.01
    # ablation switches
    use_embedding: bool = True
    residual: bool = True
    summation: bool = True
    shared_fgo: bool = False

    def __post_init__(self):
        for name in ("n_vars", "n_steps", "horizon", "embed_dim", "n_layers", "ffn_dim1", "ffn_dim2"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.reduce_dim is not None and not 1 <= self.reduce_dim <= self.n_steps:
            raise ValueError(f"reduce_dim must lie in [1, n_steps={self.n_steps}], got {self.reduce_dim}")
        if self.dft_mode not in DFT_MODES:
            raise ValueError(f"dft_mode must be one of {DFT_MODES}, got {self.dft_mode!r}")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")
        if not self.use_embedding and self.embed_dim != 1:
            raise ValueError("a model without embedding must have embed_dim == 1")
        Activation(self.activation, self.leaky_slope)

    @property
    def n_nodes(self) -> int:
        return self.n_vars * self.n_steps

    @property
    def reduced_steps(self) -> int:
        return self.n_steps if self.reduce_dim is None else self.reduce_dim

    @property
    def has_time_reduce(self) -> bool:
        return self.reduced_steps < self.n_steps

    @property
    def act(self) -> Activation:
        return Activation(self.activation, self.leaky_slope)

    @property
    def n_fgo_tensors(self) -> int:
        return 1 if self.shared_fgo else self.n_layers


def parameter_shapes(cfg: ModelConfig) -> dict[str, tuple[tuple[int, ...], bool]]:
    """Name -> (shape, is_complex) for every stored tensor, in canonical order."""
    d = cfg.embed_dim
    shapes: dict[str, tuple[tuple[int, ...], bool]] = {}
    if cfg.use_embedding:
        shapes["embedding"] = ((d,), False)
    for k in range(cfg.n_fgo_tensors):
        shapes[f"fgo.{k}.weight"] = ((d, d), True)
        shapes[f"fgo.{k}.bias"] = ((d,), True)
    if cfg.has_time_reduce:
        shapes["head.time_reduce"] = ((cfg.n_steps, cfg.reduced_steps), False)
    shapes["head.w1"] = ((cfg.reduced_steps * d, cfg.ffn_dim1), False)
    shapes["head.b1"] = ((cfg.ffn_dim1,), False)
    shapes["head.w2"] = ((cfg.ffn_dim1, cfg.ffn_dim2), False)
    shapes["head.b2"] = ((cfg.ffn_dim2,), False)
    shapes["head.w3"] = ((cfg.ffn_dim2, cfg.horizon), False)
    shapes["head.b3"] = ((cfg.horizon,), False)
    return shapes


def count_parameters(cfg: ModelConfig) -> int:
    """Real-valued parameter count; complex entries count twice."""
    total = 0
    for shape, is_complex in parameter_shapes(cfg).values():
        total += int(np.prod(shape)) * (2 if is_complex else 1)
    return total


def init_parameters(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    # FGO parts ~ U(+-1/sqrt(d)); other weights ~ U(+-1/sqrt(fan_in)); biases zero
    params = {}
    for name, (shape, is_complex) in parameter_shapes(cfg).items():
        if name.rsplit(".", 1)[-1] in ("bias", "b1", "b2", "b3"):
            params[name] = np.zeros(shape, dtype=complex if is_complex else float)
        elif is_complex:
            bound = 1.0 / np.sqrt(cfg.embed_dim)
            params[name] = rng.uniform(-bound, bound, shape) + 1j * rng.uniform(-bound, bound, shape)
        else:
            fan_in = shape[0] if len(shape) == 2 else 1
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, shape)
    return params


class FourierGNN:
    """Parameters plus configuration of one forecasting model.

    ``params`` maps tensor names to arrays. With ``shared_fgo`` a single FGO
    tensor pair is stored and every layer refers to it.
    """

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        expected = parameter_shapes(config)
        if set(params) != set(expected):
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise ValueError(f"parameter names mismatch: missing {missing}, unexpected {extra}")
        for name, (shape, _) in expected.items():
            if params[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {params[name].shape}")
        self.params = {name: params[name] for name in expected}

    @classmethod
    def init(cls, config: ModelConfig, seed: int | np.random.Generator = 0) -> "FourierGNN":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        return cls(config, init_parameters(config, rng))

    def copy(self) -> "FourierGNN":
        return FourierGNN(replace(self.config), {k: v.copy() for k, v in self.params.items()})

    @property
    def embedding(self) -> np.ndarray | None:
        return self.params.get("embedding")

    @property
    def layers(self) -> list[FgoLayer]:
        out = []
        for k in range(self.config.n_layers):
            j = 0 if self.config.shared_fgo else k
            out.append(FgoLayer(self.params[f"fgo.{j}.weight"], self.params[f"fgo.{j}.bias"]))
        return out

    @property
    def head(self) -> FfnHead:
        p = self.params
        return FfnHead(
            p["head.w1"], p["head.b1"], p["head.w2"], p["head.b2"], p["head.w3"], p["head.b3"],
            time_reduce=p.get("head.time_reduce"),
            leaky_slope=self.config.leaky_slope,
        )

    def n_parameters(self) -> int:
        return count_parameters(self.config)

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        """Forecast ``(B, N, tau)`` from a batch of ``(B, N, T)`` inputs."""
        return forward_trace(self, inputs)["pred"]

    def equals(self, other: "FourierGNN") -> bool:
        if asdict(self.config) != asdict(other.config) or set(self.params) != set(other.params):
            return False
        return all(np.array_equal(self.params[k], other.params[k]) for k in self.params)


# -- component operations -------------------------------------------------


def build_hypervariate(window: MtsWindow | np.ndarray) -> HypervariateGraph:
    x = window.input if isinstance(window, MtsWindow) else np.asarray(window, dtype=float)
    n_vars, n_steps = x.shape
    return HypervariateGraph(x.reshape(n_vars * n_steps, 1).copy(), n_vars, n_steps)


def embed_nodes(graph: HypervariateGraph | np.ndarray, embedding: np.ndarray) -> np.ndarray:
    feats = graph.node_features if isinstance(graph, HypervariateGraph) else np.asarray(graph)
    embedding = np.asarray(embedding, dtype=float)
    if embedding.ndim != 1 or embedding.size < 1:
        raise ValueError("embedding must be a non-empty vector")
    return feats[..., :1] * embedding


def _fgo_pass(p0, layers, act, recursive):
    """Run the operator stack on a spectrum.

    Returns (inputs, pre): ``inputs[k]`` is the array multiplied by layer k's
    matrix and ``pre[k]`` the pre-activation of term k+1.
    """
    inputs, pre = [], []
    carry = p0
    for layer in layers:
        inputs.append(carry)
        prod = carry @ layer.weight
        z = prod + layer.bias
        pre.append(z)
        carry = apply_activation(z, act) if recursive else prod
    return inputs, pre


def _fgo_output(p0, pre, act, residual, summation):
    if not summation:
        return apply_activation(pre[-1], act)
    out = p0.copy() if residual else np.zeros_like(p0)
    for z in pre:
        out = out + apply_activation(z, act)
    return out


def fgo_forward(
    x: np.ndarray,
    layers: list[FgoLayer],
    activation: Activation,
    recursive: bool = False,
    *,
    residual: bool = True,
    summation: bool = True,
    dft_mode: str = "flat_1d",
    grid: tuple[int, int] | None = None,
) -> np.ndarray:
    """Fourier-space output of the FGO stack for real node features ``x``.

    Default: ``F(x) + sum_k act(F(x) S_1...S_k + b_k)``. With ``recursive``
    the activation sits inside the recursion, ``H_k = act(H_{k-1} S_k + b_k)``
    and the output is ``sum_k H_k``.
    """
    x = np.asarray(x)
    if not layers:
        raise ValueError("need at least one FGO layer")
    d = x.shape[-1]
    for k, layer in enumerate(layers):
        if layer.weight.shape != (d, d) or layer.bias.shape != (d,):
            raise ValueError(
                f"layer {k} has weight {layer.weight.shape} / bias {layer.bias.shape}, features d={d}"
            )
    p0 = dft_nodes(x, dft_mode, grid)
    out = np.empty_like(p0)
    # frequency rows are independent after the DFT; blocks keep temporaries in cache
    step = max(1, FGO_BLOCK_ELEMENTS // d)
    for start in range(0, p0.shape[-2], step):
        rows = slice(start, start + step)
        out[..., rows, :] = _fgo_rows(p0[..., rows, :], layers, activation, recursive, residual, summation)
    return out


FGO_BLOCK_ELEMENTS = 16384


def _fgo_rows(p0, layers, act, recursive, residual, summation):
    """Same arithmetic as ``_fgo_pass`` + ``_fgo_output`` without keeping every term."""
    out = p0.copy() if residual else np.zeros_like(p0)
    carry = p0
    for layer in layers:
        prod = carry @ layer.weight
        term = apply_activation(prod + layer.bias, act)
        carry = term if recursive else prod
        if summation:
            out += term
    return out if summation else term


def _reduce_time(y: np.ndarray, head: FfnHead, n_vars: int) -> tuple[np.ndarray, np.ndarray]:
    lead = y.shape[:-2]
    n_nodes, d = y.shape[-2:]
    if n_nodes % n_vars:
        raise ValueError(f"{n_nodes} nodes cannot be split over {n_vars} variables")
    y4 = y.reshape(lead + (n_vars, n_nodes // n_vars, d))
    if head.time_reduce is not None:
        if head.time_reduce.shape[0] != y4.shape[-2]:
            raise ValueError(f"time_reduce expects {head.time_reduce.shape[0]} steps, got {y4.shape[-2]}")
        yr = np.swapaxes(np.swapaxes(y4, -1, -2) @ head.time_reduce, -1, -2)
    else:
        yr = y4
    return y4, yr.reshape(lead + (n_vars, -1))


def _ffn(flat, head):
    if flat.shape[-1] != head.w1.shape[0]:
        raise ValueError(f"FFN expects {head.w1.shape[0]} inputs per variable, got {flat.shape[-1]}")
    h1 = flat @ head.w1 + head.b1
    a1 = leaky_relu_real(h1, head.leaky_slope)
    h2 = a1 @ head.w2 + head.b2
    a2 = leaky_relu_real(h2, head.leaky_slope)
    return h1, a1, h2, a2, a2 @ head.w3 + head.b3


def ffn_project(y: np.ndarray, head: FfnHead, n_vars: int) -> np.ndarray:
    """Project time-domain node features ``(..., N*T, d)`` to ``(..., N, tau)``."""
    _, flat = _reduce_time(np.asarray(y, dtype=float), head, n_vars)
    return _ffn(flat, head)[-1]


def forward_trace(model: FourierGNN, inputs: np.ndarray) -> dict[str, np.ndarray]:
    """Forward pass keeping every intermediate needed for backpropagation."""
    cfg = model.config
    inputs = np.asarray(inputs, dtype=float)
    single = inputs.ndim == 2
    if single:
        inputs = inputs[None]
    if inputs.shape[1:] != (cfg.n_vars, cfg.n_steps):
        raise ValueError(
            f"window shape {inputs.shape[1:]} does not match model (N={cfg.n_vars}, T={cfg.n_steps})"
        )
    grid = (cfg.n_vars, cfg.n_steps)
    nodes = inputs.reshape(len(inputs), cfg.n_nodes)
    if cfg.use_embedding:
        emb = nodes[..., None] * model.params["embedding"]
    else:
        emb = nodes[..., None]
    p0 = dft_nodes(emb, cfg.dft_mode, grid)
    layers = model.layers
    fgo_in, pre = _fgo_pass(p0, layers, cfg.act, cfg.recursive_activation)
    spec_out = _fgo_output(p0, pre, cfg.act, cfg.residual, cfg.summation)
    y = to_real(idft_nodes(spec_out, cfg.dft_mode, grid))
    head = model.head
    y4, flat = _reduce_time(y, head, cfg.n_vars)
    h1, a1, h2, a2, pred = _ffn(flat, head)
    trace = dict(
        nodes=nodes, emb=emb, p0=p0, fgo_in=fgo_in, pre=pre, spec_out=spec_out,
        y=y, y4=y4, flat=flat, h1=h1, a1=a1, h2=h2, a2=a2, pred=pred,
    )
    if single:
        trace["pred"] = pred[0]
    return trace


def model_forward(model: FourierGNN, window: MtsWindow | np.ndarray) -> np.ndarray:
    x = window.input if isinstance(window, MtsWindow) else window
    return forward_trace(model, x)["pred"]


def node_representation(model: FourierGNN, window: MtsWindow | np.ndarray) -> np.ndarray:
    """Time-domain FGO output ``(N*T, d)`` for one window."""
    x = window.input if isinstance(window, MtsWindow) else window
    return forward_trace(model, np.asarray(x)[None])["y"][0]


# -- adjacency export -----------------------------------------------------


def export_adjacency(y: np.ndarray, max_nodes: int = MAX_ADJACENCY_NODES) -> np.ndarray:
    """Gram matrix of node representations scaled by its largest entry."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise ValueError(f"expected (n, d) node features, got shape {y.shape}")
    if len(y) > max_nodes:
        raise ValueError(f"{len(y)} nodes exceeds the adjacency export cap of {max_nodes}")
    if not np.all(np.isfinite(y)):
        raise ValueError("node representation contains non-finite values")
    a = y @ y.T
    peak = a.max()
    if peak <= 0:
        raise ValueError("degenerate node representation: Gram matrix maximum is not positive")
    return a / peak


def marginalize_time_adjacency(a: np.ndarray, n_vars: int, n_steps: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    n = n_vars * n_steps
    if a.shape != (n, n):
        raise ValueError(f"expected ({n}, {n}) adjacency, got {a.shape}")
    return a.reshape(n_vars, n_steps, n_vars, n_steps).mean(axis=(1, 3))


# -- checkpoints ----------------------------------------------------------


def save_checkpoint(model: FourierGNN, path: str | Path, extra: dict | None = None) -> Path:
    """Write config and tensors to a ``.npz`` archive.

    Complex tensors are split into ``<name>.real`` / ``<name>.imag`` float64
    entries; ``__meta__`` holds a JSON document with the format tag, config,
    tensor list and any ``extra`` metadata.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays, tensors = {}, []
    for name, value in model.params.items():
        if np.iscomplexobj(value):
            arrays[f"{name}.real"] = np.ascontiguousarray(value.real, dtype=np.float64)
            arrays[f"{name}.imag"] = np.ascontiguousarray(value.imag, dtype=np.float64)
        else:
            arrays[name] = np.ascontiguousarray(value, dtype=np.float64)
        tensors.append({"name": name, "shape": list(value.shape), "complex": bool(np.iscomplexobj(value))})
    meta = {"format": CHECKPOINT_FORMAT, "config": asdict(model.config), "tensors": tensors, "extra": extra or {}}
    arrays["__meta__"] = np.array(json.dumps(meta))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path: str | Path) -> tuple[FourierGNN, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        params = {}
        for spec in meta["tensors"]:
            name = spec["name"]
            if spec["complex"]:
                value = data[f"{name}.real"] + 1j * data[f"{name}.imag"]
            else:
                value = data[name].copy()
            if list(value.shape) != spec["shape"]:
                raise ValueError(f"{path}: tensor {name} has shape {value.shape}, header says {spec['shape']}")
            params[name] = value
    return FourierGNN(ModelConfig(**meta["config"]), params), meta.get("extra", {})
