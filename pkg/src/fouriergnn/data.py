"""CSV ingestion, chronological splits, min-max scaling and sliding windows."""
from __future__ import annotations

import csv
import gzip
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .model import MtsWindow


class DataError(ValueError):
    pass


@dataclass
class SeriesTable:
    values: np.ndarray  # (L, N): rows are timestamps
    names: list[str] | None = None
    timestamps: list[str] | None = None
    offset: int = 0  # row index of values[0] in the source file

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def rows(self, start: int, stop: int) -> "SeriesTable":
        return SeriesTable(
            self.values[start:stop],
            self.names,
            None if self.timestamps is None else self.timestamps[start:stop],
            self.offset + start,
        )


@dataclass(frozen=True)
class MinMaxStats:
    lo: np.ndarray
    hi: np.ndarray


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.7
    val: float = 0.2
    test: float = 0.1

    def __post_init__(self):
        ratios = (self.train, self.val, self.test)
        if min(ratios) < 0 or abs(sum(ratios) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must be nonnegative and sum to 1, got {ratios}")


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_series(path: str | Path, transpose: bool = False, timestamp_column: int | str | None = None,
                header: bool | None = None) -> SeriesTable:
    """Read a numeric CSV with rows = timestamps, columns = variables.

    ``header=None`` detects a header from a non-numeric first row. A
    ``timestamp_column`` (index or header name) is kept as strings and
    excluded from the values. Gzip files are read transparently. Row numbers
    in errors are 1-based file lines.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with _open_text(path) as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")

    names = None
    first_line, first = rows[0]
    skip_ts = None
    if isinstance(timestamp_column, int):
        skip_ts = timestamp_column
    cells = [c for j, c in enumerate(first) if j != skip_ts]
    if header is None:
        header = not all(_is_number(c.strip()) for c in cells if c.strip() != "")
    if header:
        names = [c.strip() for c in first]
        rows = rows[1:]
        if isinstance(timestamp_column, str):
            if timestamp_column not in names:
                raise DataError(f"{path}: timestamp column {timestamp_column!r} not in header")
            skip_ts = names.index(timestamp_column)
        if skip_ts is not None:
            names = [c for j, c in enumerate(names) if j != skip_ts]
    elif isinstance(timestamp_column, str):
        raise DataError(f"{path}: named timestamp column needs a header row")
    if not rows:
        raise DataError(f"{path}: no data rows")

    width = len(rows[0][1])
    values, stamps = [], []
    for line, row in rows:
        if len(row) != width:
            raise DataError(f"{path}: row {line} has {len(row)} columns, expected {width}")
        out = []
        for j, cell in enumerate(row):
            if j == skip_ts:
                stamps.append(cell)
                continue
            cell = cell.strip()
            if cell == "":
                raise DataError(f"{path}: missing value at row {line}, column {j + 1}")
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at row {line}, column {j + 1}") from None
            if not np.isfinite(v):
                raise DataError(f"{path}: non-finite value at row {line}, column {j + 1}")
            out.append(v)
        values.append(out)
    arr = np.array(values, dtype=float)
    if arr.shape[1] == 0:
        raise DataError(f"{path}: no numeric columns")
    if names is not None and len(names) != arr.shape[1]:
        raise DataError(f"{path}: header has {len(names)} names for {arr.shape[1]} columns")
    if transpose:
        if stamps:
            raise DataError("transpose and timestamp_column cannot be combined")
        return SeriesTable(arr.T.copy(), None, None)
    return SeriesTable(arr, names, stamps or None)


def split_chrono(table: SeriesTable, spec: SplitSpec, min_length: int = 0):
    """Contiguous train / val / test blocks; lengths floor(r * L) for train and val."""
    n = table.length
    n_train = int(np.floor(spec.train * n))
    n_val = int(np.floor(spec.val * n))
    parts = (table.rows(0, n_train), table.rows(n_train, n_train + n_val), table.rows(n_train + n_val, n))
    if min_length:
        for name, part, ratio in zip(("train", "val", "test"), parts, (spec.train, spec.val, spec.test)):
            if ratio > 0 and part.length < min_length:
                raise DataError(f"{name} split has {part.length} rows, needs at least {min_length} (T + tau)")
    return parts


def minmax_fit(train: SeriesTable) -> MinMaxStats:
    if train.length == 0:
        raise DataError("cannot fit min-max statistics on an empty split")
    return MinMaxStats(train.values.min(axis=0), train.values.max(axis=0))


def minmax_apply(table: SeriesTable, stats: MinMaxStats) -> SeriesTable:
    span = stats.hi - stats.lo
    safe = np.where(span > 0, span, 1.0)
    values = np.where(span > 0, (table.values - stats.lo) / safe, 0.0)
    return SeriesTable(values, table.names, table.timestamps, table.offset)


def minmax_invert(values: np.ndarray, stats: MinMaxStats, axis: int = -1) -> np.ndarray:
    """Undo :func:`minmax_apply`; ``axis`` is the variable axis of ``values``."""
    values = np.asarray(values, dtype=float)
    shape = [1] * values.ndim
    shape[axis] = -1
    lo = stats.lo.reshape(shape)
    span = (stats.hi - stats.lo).reshape(shape)
    return values * span + lo


def sliding_windows(table: SeriesTable, n_steps: int, horizon: int, stride: int = 1) -> list[MtsWindow]:
    if n_steps < 1 or horizon < 1 or stride < 1:
        raise ValueError("n_steps, horizon and stride must be positive")
    L = table.length
    if L < n_steps + horizon:
        raise DataError(f"series of length {L} is shorter than T + tau = {n_steps + horizon}")
    count = (L - n_steps - horizon) // stride + 1
    out = []
    for i in range(count):
        s = i * stride
        out.append(MtsWindow(
            table.values[s:s + n_steps].T.copy(),
            table.values[s + n_steps:s + n_steps + horizon].T.copy(),
            table.offset + s,
        ))
    return out


@dataclass
class PreparedData:
    stats: MinMaxStats
    train: list[MtsWindow]
    val: list[MtsWindow]
    test: list[MtsWindow]
    tables: tuple[SeriesTable, SeriesTable, SeriesTable] = field(repr=False, default=None)


def prepare(table: SeriesTable, spec: SplitSpec, n_steps: int, horizon: int, stride: int = 1) -> PreparedData:
    """Split, normalise on the training block and window each block separately."""
    train, val, test = split_chrono(table, spec, min_length=n_steps + horizon)
    stats = minmax_fit(train)
    scaled = tuple(minmax_apply(t, stats) for t in (train, val, test))
    windows = [sliding_windows(t, n_steps, horizon, stride) if t.length else [] for t in scaled]
    return PreparedData(stats, *windows, tables=scaled)


def make_synthetic(n_vars: int = 8, length: int = 2000, noise: float = 0.1, seed: int = 0) -> SeriesTable:
    """Coupled sinusoids with Gaussian noise.

    Each variable mixes a few base oscillators (periods 12 to 48 steps) with
    random weights, so variables share structure with lags between them.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    periods = np.array([12.0, 17.0, 24.0, 31.0, 48.0])
    base = np.sin(2 * np.pi * t[:, None] / periods + rng.uniform(0, 2 * np.pi, len(periods)))
    mix = rng.normal(size=(len(periods), n_vars))
    lags = rng.integers(0, 6, n_vars)
    values = np.empty((length, n_vars))
    for v in range(n_vars):
        values[:, v] = np.roll(base @ mix[:, v], lags[v])
    values += noise * rng.normal(size=values.shape)
    return SeriesTable(values, [f"s{v}" for v in range(n_vars)])


def write_series(table: SeriesTable, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if table.names:
            w.writerow(table.names)
        w.writerows(table.values.tolist())
    return path


def load_manifest(path: str | Path) -> dict[str, dict]:
    """Dataset manifest: YAML mapping ``name -> {path, n_vars, granularity}``.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    entries = doc.get("datasets", doc)
    out = {}
    for name, entry in entries.items():
        missing = {"path", "n_vars", "granularity"} - set(entry)
        if missing:
            raise DataError(f"{path}: dataset {name!r} lacks {sorted(missing)}")
        p = Path(entry["path"])
        out[name] = dict(entry, path=str(p if p.is_absolute() else path.parent / p))
    return out
