"""Run configuration: YAML file + presets + command-line overrides."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import yaml

from .data import SplitSpec
from .model import ModelConfig
from .spectral import DFT_MODES
from .training import ABLATIONS, TrainConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "preset": None,
    "seed": 0,
    "dataset": {
        "path": None,
        "transpose": False,
        "timestamp_column": None,
        "split": [0.7, 0.2, 0.1],
        "stride": 1,
        "synthetic": None,
    },
    "model": {
        "T": 12,
        "tau": 12,
        "d": 128,
        "K": 3,
        "l": None,
        "d_ffn1": 64,
        "d_ffn2": 256,
        "dft_mode": "flat_1d",
        "activation": "split_relu",
        "recursive_activation": False,
        "leaky_slope": 0.01,
    },
    "training": {
        "learning_rate": 1e-5,
        "epochs": 100,
        "batch_size": 32,
        "rmsprop_decay": 0.9,
        "rmsprop_eps": 1e-8,
        "ablation": "full",
    },
    "evaluation": {"denormalize": False},
    "output": {"directory": "runs/default", "checkpoint": "best.npz"},
}

SYNTHETIC_DEFAULTS = {"n_vars": 8, "length": 2000, "noise": 0.1, "seed": 0}

# embedding size, batch size and FFN dimensions per dataset
PRESETS = {
    "covid": {"model": {"d": 256, "l": 8, "d_ffn1": 256, "d_ffn2": 512},
              "training": {"batch_size": 4}, "dataset": {"split": [0.6, 0.2, 0.2]}},
    "solar": {"model": {"d": 128, "l": 6, "d_ffn1": 64, "d_ffn2": 256}, "training": {"batch_size": 2}},
    "wiki": {"model": {"d": 128, "l": 2, "d_ffn1": 64, "d_ffn2": 256}, "training": {"batch_size": 2}},
    "traffic": {"model": {"d": 128, "l": 2, "d_ffn1": 64, "d_ffn2": 256}, "training": {"batch_size": 2}},
    "ecg": {"model": {"d": 128, "l": None, "d_ffn1": 64, "d_ffn2": 256}, "training": {"batch_size": 32}},
    "electricity": {"model": {"d": 128, "l": 4, "d_ffn1": 64, "d_ffn2": 256}, "training": {"batch_size": 32}},
    "metr-la": {"model": {"d": 128, "l": 4, "d_ffn1": 64, "d_ffn2": 256}, "training": {"batch_size": 32}},
}


@dataclass
class RunConfig:
    raw: dict

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def dataset(self) -> dict:
        return self.raw["dataset"]

    @property
    def split(self) -> SplitSpec:
        return SplitSpec(*self.raw["dataset"]["split"])

    @property
    def output_dir(self) -> Path:
        return Path(self.raw["output"]["directory"])

    @property
    def checkpoint_path(self) -> Path:
        return self.output_dir / "checkpoints" / self.raw["output"]["checkpoint"]

    @property
    def denormalize(self) -> bool:
        return self.raw["evaluation"]["denormalize"]

    def model_config(self, n_vars: int) -> ModelConfig:
        m = self.raw["model"]
        return ModelConfig(
            n_vars=n_vars, n_steps=m["T"], horizon=m["tau"], embed_dim=m["d"], n_layers=m["K"],
            reduce_dim=m["l"], ffn_dim1=m["d_ffn1"], ffn_dim2=m["d_ffn2"], dft_mode=m["dft_mode"],
            activation=m["activation"], recursive_activation=m["recursive_activation"],
            leaky_slope=m["leaky_slope"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **self.raw["training"])

    def dump(self) -> str:
        return yaml.safe_dump(self.raw, sort_keys=False)


def _merge(base: dict, update: dict, path: str = "") -> dict:
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"{where}: unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected a mapping")
            _merge(base[key], value, where + ".")
        else:
            base[key] = value
    return base


def _parse_scalar(text: str):
    return yaml.safe_load(text)


def apply_override(raw: dict, assignment: str) -> None:
    """Apply ``section.key=value``; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    update: dict = {}
    node = update
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = _parse_scalar(value)
    _merge(raw, update)


def _require(cond: bool, key: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {message}")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


FLOAT_KEYS = (("model", "leaky_slope"), ("training", "learning_rate"),
              ("training", "rmsprop_decay"), ("training", "rmsprop_eps"))


def _coerce_floats(raw: dict) -> None:
    # YAML 1.1 reads "1e-5" (no dot) as a string
    for section, key in FLOAT_KEYS:
        value = raw[section][key]
        if isinstance(value, str):
            try:
                raw[section][key] = float(value)
            except ValueError:
                raise ConfigError(f"{section}.{key}: expected a number, got {value!r}") from None


def validate(raw: dict) -> None:
    _coerce_floats(raw)
    _require(_is_int(raw["seed"]), "seed", "must be an integer")
    ds = raw["dataset"]
    split = ds["split"]
    _require(isinstance(split, (list, tuple)) and len(split) == 3 and all(_is_num(r) and r >= 0 for r in split),
             "dataset.split", "must be three nonnegative ratios")
    _require(abs(sum(split) - 1.0) <= 1e-9, "dataset.split", f"ratios must sum to 1, got {sum(split)}")
    _require(isinstance(ds["transpose"], bool), "dataset.transpose", "must be true or false")
    _require(_is_int(ds["stride"]) and ds["stride"] >= 1, "dataset.stride", "must be a positive integer")
    if ds["synthetic"] is not None:
        _require(isinstance(ds["synthetic"], dict), "dataset.synthetic", "must be a mapping")
        for key in ds["synthetic"]:
            _require(key in SYNTHETIC_DEFAULTS, f"dataset.synthetic.{key}", "unknown key")
        ds["synthetic"] = {**SYNTHETIC_DEFAULTS, **ds["synthetic"]}

    m = raw["model"]
    for key in ("T", "tau", "d", "K", "d_ffn1", "d_ffn2"):
        _require(_is_int(m[key]) and m[key] >= 1, f"model.{key}", f"must be a positive integer, got {m[key]!r}")
    if m["l"] is not None:
        _require(_is_int(m["l"]) and 1 <= m["l"] <= m["T"], "model.l", f"must lie in [1, T={m['T']}]")
    _require(m["dft_mode"] in DFT_MODES, "model.dft_mode", f"must be one of {DFT_MODES}")
    _require(m["activation"] in ("identity", "split_relu", "leaky_relu"), "model.activation",
             "must be identity, split_relu or leaky_relu")
    _require(isinstance(m["recursive_activation"], bool), "model.recursive_activation", "must be true or false")
    _require(_is_num(m["leaky_slope"]) and 0 < m["leaky_slope"] < 1, "model.leaky_slope", "must lie in (0, 1)")

    t = raw["training"]
    _require(_is_num(t["learning_rate"]) and t["learning_rate"] >= 0, "training.learning_rate", "must be >= 0")
    _require(_is_int(t["epochs"]) and t["epochs"] >= 0, "training.epochs", "must be a nonnegative integer")
    _require(_is_int(t["batch_size"]) and t["batch_size"] >= 1, "training.batch_size", "must be a positive integer")
    _require(_is_num(t["rmsprop_decay"]) and 0 < t["rmsprop_decay"] < 1, "training.rmsprop_decay", "must lie in (0, 1)")
    _require(_is_num(t["rmsprop_eps"]) and t["rmsprop_eps"] >= 0, "training.rmsprop_eps", "must be >= 0")
    _require(t["ablation"] in ABLATIONS, "training.ablation", f"must be one of {ABLATIONS}")
    _require(isinstance(raw["evaluation"]["denormalize"], bool), "evaluation.denormalize", "must be true or false")
    _require(isinstance(raw["output"]["directory"], str), "output.directory", "must be a path string")
    _require(isinstance(raw["output"]["checkpoint"], str), "output.checkpoint", "must be a file name")


def parse_config(path: str | Path | None = None, overrides: list[str] = (), data: dict | None = None) -> RunConfig:
    """Resolve defaults, then preset, then file contents, then overrides."""
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"{path}: config file not found")
        with open(path) as fh:
            try:
                data = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    data = copy.deepcopy(data or {})
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    for section in ("dataset", "model", "training", "evaluation", "output"):
        if data.get(section) is None and section in data:
            data[section] = {}
    raw = copy.deepcopy(DEFAULTS)
    preset = data.get("preset")
    for item in overrides:
        if item.split("=", 1)[0].strip() == "preset":
            preset = _parse_scalar(item.split("=", 1)[1])
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}; known {sorted(PRESETS)}")
        _merge(raw, copy.deepcopy(PRESETS[preset]))
    _merge(raw, data)
    for item in overrides:
        apply_override(raw, item)
    validate(raw)
    return RunConfig(raw)
