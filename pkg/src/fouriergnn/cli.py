"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 verification
failure, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import oracle
from .config import ConfigError, RunConfig, parse_config
from .data import DataError, load_series, make_synthetic, minmax_apply, minmax_invert, prepare, MinMaxStats, SeriesTable
from .evaluation import bench_scaling, evaluate_split, repeat_last_predictor
from .model import (
    FourierGNN,
    export_adjacency,
    load_checkpoint,
    marginalize_time_adjacency,
    node_representation,
    save_checkpoint,
)
from .training import ABLATIONS, TrainingDiverged, fit, with_ablation

log = logging.getLogger("fouriergnn")

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3
SUBDIRS = ("checkpoints", "traces", "reports", "adjacency")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(path: Path, header: list[str], rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def print_table(header: list[str], rows) -> None:
    cells = [[str(h) for h in header]] + [[f"{v:.6g}" if isinstance(v, float) else str(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for i, r in enumerate(cells):
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)))
        if i == 0:
            print("  ".join("-" * w for w in widths))


# -- shared steps ---------------------------------------------------------


def _output_dirs(cfg: RunConfig) -> Path:
    root = cfg.output_dir
    for sub in SUBDIRS:
        (root / sub).mkdir(parents=True, exist_ok=True)
    return root


def _load_table(cfg: RunConfig) -> SeriesTable:
    ds = cfg.dataset
    if ds["synthetic"] is not None:
        return make_synthetic(**ds["synthetic"])
    if ds["path"] is None:
        raise ConfigError("dataset.path: required (or configure dataset.synthetic)")
    return load_series(ds["path"], transpose=ds["transpose"], timestamp_column=ds["timestamp_column"])


def _prepare(cfg: RunConfig):
    table = _load_table(cfg)
    m = cfg.raw["model"]
    return table, prepare(table, cfg.split, m["T"], m["tau"], cfg.dataset["stride"])


def _stats_meta(stats: MinMaxStats) -> dict:
    return {"minmax_lo": stats.lo.tolist(), "minmax_hi": stats.hi.tolist()}


def _stats_from_meta(meta: dict) -> MinMaxStats | None:
    if "minmax_lo" not in meta:
        return None
    return MinMaxStats(np.array(meta["minmax_lo"]), np.array(meta["minmax_hi"]))


def _metric_rows(label: str, report) -> list:
    return [label, report.mae, report.rmse, report.mape_percent, report.n_masked_mape_terms]


METRIC_HEADER = ["model", "mae", "rmse", "mape_percent", "n_masked_mape_terms"]


def _train_one(cfg: RunConfig, data, n_vars: int, ablation: str):
    model_cfg = with_ablation(cfg.model_config(n_vars), ablation)
    model = FourierGNN.init(model_cfg, cfg.seed)
    tcfg = cfg.train_config()
    log.info("training %s: %d parameters, %d train / %d val windows", ablation,
             model.n_parameters(), len(data.train), len(data.val))
    return fit(model, data.train, data.val, tcfg, progress=True)


# -- subcommands ----------------------------------------------------------


def cmd_train(cfg: RunConfig, args) -> int:
    root = _output_dirs(cfg)
    table, data = _prepare(cfg)
    result = _train_one(cfg, data, table.n_vars, cfg.raw["training"]["ablation"])
    save_checkpoint(result.best_model, cfg.checkpoint_path,
                    extra={**_stats_meta(data.stats), "best_epoch": result.best_epoch, "seed": cfg.seed})
    save_checkpoint(result.model, root / "checkpoints" / "last.npz", extra=_stats_meta(data.stats))
    write_csv(root / "traces" / "loss_trace.csv", ["epoch", "train_mse", "val_mse"], result.trace)
    rows = []
    if data.test:
        rows.append(_metric_rows("fouriergnn", evaluate_split(result.best_model, data.test, data.stats, cfg.denormalize)))
        rows.append(_metric_rows("repeat_last", evaluate_split(
            repeat_last_predictor(cfg.raw["model"]["tau"]), data.test, data.stats, cfg.denormalize)))
        write_csv(root / "reports" / "test_metrics.csv", METRIC_HEADER, rows)
        print_table(METRIC_HEADER, rows)
    print(f"best epoch {result.best_epoch}, val_mse {result.best_val_mse:.6g}; checkpoint {cfg.checkpoint_path}")
    return EXIT_OK


def _checkpoint(cfg: RunConfig, args):
    path = Path(args.checkpoint) if args.checkpoint else cfg.checkpoint_path
    if not path.exists():
        raise ConfigError(f"checkpoint {path} not found")
    return load_checkpoint(path)


def cmd_evaluate(cfg: RunConfig, args) -> int:
    root = _output_dirs(cfg)
    model, _ = _checkpoint(cfg, args)
    _, data = _prepare(cfg)
    windows = {"train": data.train, "val": data.val, "test": data.test}[args.split]
    rows = [
        _metric_rows("fouriergnn", evaluate_split(model, windows, data.stats, cfg.denormalize)),
        _metric_rows("repeat_last", evaluate_split(
            repeat_last_predictor(model.config.horizon), windows, data.stats, cfg.denormalize)),
    ]
    write_csv(root / "reports" / f"{args.split}_metrics.csv", METRIC_HEADER, rows)
    print_table(METRIC_HEADER, rows)
    return EXIT_OK


def cmd_predict(cfg: RunConfig, args) -> int:
    model, meta = _checkpoint(cfg, args)
    if not args.window:
        raise ConfigError("--window: required for predict")
    window = load_series(args.window, transpose=cfg.dataset["transpose"],
                         timestamp_column=cfg.dataset["timestamp_column"])
    c = model.config
    if window.length < c.n_steps or window.n_vars != c.n_vars:
        raise DataError(f"window file has shape {window.values.shape}; model needs at least "
                        f"({c.n_steps}, {c.n_vars}) rows x variables")
    window = window.rows(window.length - c.n_steps, window.length)
    stats = None if args.normalized else _stats_from_meta(meta)
    if stats is not None:
        window = minmax_apply(window, stats)
    pred = model.predict(window.values.T[None])[0]
    if stats is not None:
        pred = minmax_invert(pred, stats, axis=0)
    out = Path(args.out) if args.out else _output_dirs(cfg) / "reports" / "forecast.csv"
    write_csv(out, [f"h{h + 1}" for h in range(c.horizon)], pred.tolist())
    print(f"forecast ({c.n_vars} x {c.horizon}) written to {out}")
    return EXIT_OK


def cmd_verify(cfg: RunConfig | None, args) -> int:
    rows, failed = [], 0
    for r in oracle.equivalence_grid(seeds=range(args.seeds)):
        rows.append(["equivalence", r["n"], r["d"], r["K"], r["seed"], r["max_abs_error"], "pass" if r["passed"] else "FAIL"])
        failed += not r["passed"]
    for s in range(args.seeds):
        for n in (4, 8, 16):
            r = oracle.verify_space_invariant(n, 2, 2, s)
            rows.append(["n_invariant", n, 2, 2, s, r["max_abs_error"], "pass" if r["passed"] else "FAIL"])
            failed += not r["passed"]
    rng = np.random.default_rng(0)
    for s in range(args.conv_pairs):
        n = int(rng.integers(1, 65))
        r = oracle.verify_convolution_theorem(n, s)
        rows.append(["convolution", n, "-", "-", s, r["max_abs_error"], "pass" if r["passed"] else "FAIL"])
        failed += not r["passed"]
    header = ["check", "n", "d", "K", "seed", "max_abs_error", "result"]
    if not args.quiet:
        print_table(header, rows)
    if cfg is not None and args.report:
        write_csv(_output_dirs(cfg) / "reports" / "verify.csv", header, rows)
    print(f"{len(rows) - failed}/{len(rows)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


def cmd_bench(cfg: RunConfig | None, args) -> int:
    report = bench_scaling(d=args.d, k=args.k, n_list=args.n, dense_n_list=args.dense_n, repeats=args.repeats)
    rows = [list(r) for r in report.rows()]
    header = ["path", "n", "mean_seconds", "std_seconds"]
    print_table(header, rows)
    print(f"spectral slope {report.spectral_slope:.3f}, dense slope {report.dense_slope:.3f}")
    if cfg is not None:
        write_csv(_output_dirs(cfg) / "reports" / "bench.csv", header, rows)
    if args.check and not (report.spectral_slope <= 1.3 and report.dense_slope >= 1.7):
        print("scaling check failed (need spectral <= 1.3, dense >= 1.7)")
        return EXIT_VERIFY
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, args) -> int:
    root = _output_dirs(cfg)
    table, data = _prepare(cfg)
    if not data.test:
        raise DataError("ablation needs a non-empty test split")
    rows = []
    for kind in ABLATIONS:
        result = _train_one(cfg, data, table.n_vars, kind)
        save_checkpoint(result.best_model, root / "checkpoints" / f"ablation_{kind}.npz", extra=_stats_meta(data.stats))
        write_csv(root / "traces" / f"ablation_{kind}.csv", ["epoch", "train_mse", "val_mse"], result.trace)
        rows.append(_metric_rows(kind, evaluate_split(result.best_model, data.test, data.stats, cfg.denormalize)))
    write_csv(root / "reports" / "ablation.csv", METRIC_HEADER, rows)
    print_table(METRIC_HEADER, rows)
    return EXIT_OK


def cmd_export_adjacency(cfg: RunConfig, args) -> int:
    root = _output_dirs(cfg)
    model, _ = _checkpoint(cfg, args)
    _, data = _prepare(cfg)
    windows = {"train": data.train, "val": data.val, "test": data.test}[args.split]
    if not 0 <= args.index < len(windows):
        raise ConfigError(f"--index: {args.index} outside 0..{len(windows) - 1}")
    window = windows[args.index]
    adj = export_adjacency(node_representation(model, window))
    c = model.config
    variables = marginalize_time_adjacency(adj, c.n_vars, c.n_steps)
    np.savetxt(root / "adjacency" / "adjacency_nodes.csv", adj, delimiter=",")
    np.savetxt(root / "adjacency" / "adjacency_variables.csv", variables, delimiter=",")
    print(f"exported {adj.shape[0]}x{adj.shape[0]} node and {c.n_vars}x{c.n_vars} variable adjacency "
          f"for {args.split} window {args.index} (origin row {window.origin_index}) to {root / 'adjacency'}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "ablate": cmd_ablate,
    "export-adjacency": cmd_export_adjacency,
}
CONFIG_OPTIONAL = {"verify", "bench"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set model.d=64")
    common.add_argument("--seed", type=int, help="override seed")
    common.add_argument("--output", help="override output.directory")
    common.add_argument("--denormalize", action="store_true", help="report metrics in original units")
    common.add_argument("--transpose", action="store_true", help="CSV rows are variables, not timestamps")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="fouriergnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="fit a model and save the best-validation checkpoint")
    p = sub.add_parser("evaluate", parents=[common], help="metrics of a checkpoint on a split")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p = sub.add_parser("predict", parents=[common], help="forecast the horizon after a window CSV")
    p.add_argument("--checkpoint")
    p.add_argument("--window", help="CSV holding at least T rows of raw observations")
    p.add_argument("--out", help="forecast CSV path (default <output>/reports/forecast.csv)")
    p.add_argument("--normalized", action="store_true", help="window is already min-max scaled; skip scaling")
    p = sub.add_parser("verify", parents=[common], help="spectral vs time-domain equivalence checks")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--conv-pairs", type=int, default=100)
    p.add_argument("--quiet", action="store_true", help="print only the summary line")
    p.add_argument("--report", action="store_true", help="also write <output>/reports/verify.csv")
    p = sub.add_parser("bench", parents=[common], help="log-log scaling of spectral vs dense propagation")
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--n", type=int, nargs="+", default=[512, 1024, 2048, 4096, 8192])
    p.add_argument("--dense-n", type=int, nargs="+", default=[256, 512, 1024, 2048])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--check", action="store_true", help="exit 2 unless slopes meet the scaling bounds")
    sub.add_parser("ablate", parents=[common], help="train the full model and four ablation variants")
    p = sub.add_parser("export-adjacency", parents=[common], help="adjacency from learned node representations")
    p.add_argument("--checkpoint")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--index", type=int, default=0)
    return parser


def _resolve_config(args) -> RunConfig | None:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.output:
        overrides.append(f"output.directory={args.output}")
    if args.denormalize:
        overrides.append("evaluation.denormalize=true")
    if args.transpose:
        overrides.append("dataset.transpose=true")
    if args.config is None and not overrides and args.command in CONFIG_OPTIONAL:
        return None
    return parse_config(args.config, overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        cfg = _resolve_config(args)
        if cfg is None and args.command not in CONFIG_OPTIONAL:
            raise ConfigError("a configuration is required")
        if cfg is not None:
            print("# resolved configuration\n" + cfg.dump(), end="", file=sys.stderr)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, FloatingPointError, ValueError, OSError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
