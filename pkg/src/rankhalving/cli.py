"""Command-line entry point: search runs, baselines, table diagnostics,
synthetic benchmark generation, and schedule/ratio sweeps.

Every subcommand writes its outputs as CSV plus a JSON run manifest (config
echo, seed list, benchmark checksum, tool version, wall-clock) into
--out-dir. Result CSVs are deterministic for a fixed (config, benchmark,
seed); the manifest carries timing and is the only non-reproducible file.

Config files are flat ``key = value`` text ('#' comments allowed); unknown
keys are errors, not warnings. Fractions accept "1/3". The environment
variable RANKHALVING_BENCH_DIR, when set, resolves relative benchmark
paths.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import prior_correlation, spearman, spearman_trajectory, survival_fraction
from .baselines import (
    early_stop_search,
    full_budget_search,
    prior_only,
    random_search,
    truncation_for_budget,
)
from .bench import BenchmarkTable, load_benchmark, save_benchmark
from .pyramid import Schedule
from .ranker import RankerConfig
from .ranker_train import TrainConfig
from .search import ConfigError, SearchConfig, SearchResult, default_schedule, run_search
from .synthetic import default_synthetic_space, generate_synthetic

__all__ = ["main", "parse_config_file", "build_search_config"]

_CONFIG_KEYS = {
    "benchmark",
    "pool_max",
    "pool_init",
    "proposal_size",
    "schedule_epochs",
    "move_ratios",
    "universe_size",
    "prior_metric",
    "max_train_pairs",
    "ranker_layers",
    "ranker_emb_dim",
    "ranker_hidden_dim",
    "train_epochs",
    "train_batch_size",
    "train_lr_init",
    "train_lr_final",
}


def parse_config_file(path) -> dict[str, str]:
    """Flat key = value config; unknown keys are hard errors."""
    values: dict[str, str] = {}
    unknown = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                unknown.append(key)
                continue
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value
    if unknown:
        raise ConfigError(
            f"{path}: unknown config keys: {', '.join(sorted(unknown))} "
            f"(known: {', '.join(sorted(_CONFIG_KEYS))})"
        )
    return values


def _fraction(text: str) -> float:
    return float(Fraction(text))


def build_search_config(raw: dict[str, str], table: BenchmarkTable,
                        rng_seed: int) -> SearchConfig:
    schedule = default_schedule(table)
    if "schedule_epochs" in raw:
        epochs = tuple(int(e) for e in raw["schedule_epochs"].split(","))
        ratios = schedule.move_ratios
        if len(ratios) != len(epochs):
            ratios = (1.0 / 3.0,) + (0.5,) * (len(epochs) - 1)
        schedule = Schedule(epochs=epochs, move_ratios=ratios)
    if "move_ratios" in raw:
        ratios = tuple(_fraction(r) for r in raw["move_ratios"].split(","))
        schedule = Schedule(epochs=schedule.epochs, move_ratios=ratios)
    ranker = RankerConfig(
        num_layers=int(raw.get("ranker_layers", 5)),
        emb_dim=int(raw.get("ranker_emb_dim", 16)),
        hidden_dim=int(raw.get("ranker_hidden_dim", 64)),
    )
    trainer = TrainConfig(
        batch_size=int(raw.get("train_batch_size", 10)),
        epochs=int(raw.get("train_epochs", 100)),
        lr_init=float(raw.get("train_lr_init", 0.01)),
        lr_final=float(raw.get("train_lr_final", 1e-5)),
    )
    default_universe = min(len(table), max(5000, 2 * int(raw.get("pool_max", 300))))
    return SearchConfig(
        schedule=schedule,
        max_pool_size=int(raw.get("pool_max", 300)),
        init_pool_size=int(raw.get("pool_init", 48)),
        proposal_size=int(raw.get("proposal_size", 30)),
        universe_size=int(raw.get("universe_size", default_universe)),
        prior_metric=raw.get("prior_metric",
                             table.prior_metrics[0] if table.prior_metrics else "mag_synth"),
        rng_seed=rng_seed,
        ranker=ranker,
        trainer=trainer,
        max_train_pairs=int(raw.get("max_train_pairs", 2500)),
    )


def _resolve_benchmark(path_arg: str | None, raw_cfg: dict[str, str]) -> Path:
    candidate = path_arg or raw_cfg.get("benchmark")
    if not candidate:
        raise ConfigError("no benchmark given (use --benchmark or the config key)")
    path = Path(candidate)
    base = os.environ.get("RANKHALVING_BENCH_DIR")
    if not path.is_absolute() and base and not path.exists():
        path = Path(base) / path
    if not path.exists():
        raise ConfigError(f"benchmark file not found: {path}")
    return path


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _write_manifest(out_dir: Path, command: str, config_echo: dict, seeds: list[int],
                    bench_path: Path | None, wall_clock: dict[str, float]) -> None:
    manifest = {
        "tool_version": __version__,
        "command": command,
        "config": config_echo,
        "seeds": seeds,
        "benchmark": str(bench_path) if bench_path else None,
        "benchmark_sha256": _sha256(bench_path) if bench_path else None,
        "wall_clock_s": wall_clock,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


_RESULT_HEADER = [
    "seed", "method", "best_key", "best_val_acc", "best_final_val_acc",
    "best_test_acc", "budget_epochs", "rounds",
]


def _result_row(seed: int, res: SearchResult) -> list:
    return [seed, res.method, res.best_key, repr(res.best_val_acc),
            repr(res.best_final_val_acc), repr(res.best_test_acc),
            res.total_budget_epochs, res.rounds]


def _emit_results(out_dir: Path, results: dict[int, SearchResult]) -> None:
    rows = [_result_row(seed, res) for seed, res in sorted(results.items())]
    _write_csv(out_dir / "results.csv", _RESULT_HEADER, rows)
    for seed, res in sorted(results.items()):
        _write_csv(
            out_dir / f"per_round_{seed}.csv",
            ["round", "pool_size", "budget_epochs", "best_so_far"],
            [[r.round, r.pool_size, r.budget_epochs, repr(r.best_so_far)]
             for r in res.per_round_log],
        )
    metrics = {
        "best_val_acc": [r.best_val_acc for r in results.values()],
        "best_final_val_acc": [r.best_final_val_acc for r in results.values()],
        "best_test_acc": [r.best_test_acc for r in results.values()],
        "budget_epochs": [float(r.total_budget_epochs) for r in results.values()],
    }
    # population std, matching mean +/- std reporting over seeds
    _write_csv(
        out_dir / "summary.csv",
        ["metric", "mean", "std"],
        [[name, repr(float(np.mean(vals))), repr(float(np.std(vals)))]
         for name, vals in metrics.items()],
    )


def _seed_list(args) -> list[int]:
    return [args.seed_base + i for i in range(args.seeds)]


def _cmd_run(args) -> int:
    raw = parse_config_file(args.config) if args.config else {}
    bench_path = _resolve_benchmark(args.benchmark, raw)
    table = load_benchmark(bench_path)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results, clock = {}, {}
    for seed in _seed_list(args):
        cfg = build_search_config(raw, table, seed)
        t0 = time.perf_counter()
        results[seed] = run_search(cfg, table)
        clock[str(seed)] = time.perf_counter() - t0
    _emit_results(out_dir, results)
    cfg_echo = dataclasses.asdict(build_search_config(raw, table, 0))
    _write_manifest(out_dir, "run", cfg_echo, _seed_list(args), bench_path, clock)
    return 0


def _cmd_baseline(args) -> int:
    raw = parse_config_file(args.config) if args.config else {}
    bench_path = _resolve_benchmark(args.benchmark, raw)
    table = load_benchmark(bench_path)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results, clock = {}, {}
    for seed in _seed_list(args):
        t0 = time.perf_counter()
        if args.name == "random":
            if not args.budget:
                raise ConfigError("baseline random needs --budget")
            res = random_search(table, args.budget, seed)
        elif args.name == "prior":
            metric = raw.get("prior_metric",
                             table.prior_metrics[0] if table.prior_metrics else "mag_synth")
            res = prior_only(table, sample_n=args.sample_n, metric=metric, rng_seed=seed)
        else:
            cfg = build_search_config(raw, table, seed)
            if args.name == "full":
                res = full_budget_search(cfg, table)
            else:
                trunc = args.truncation
                if not trunc:
                    if not args.budget:
                        raise ConfigError("baseline early-stop needs --truncation or --budget")
                    trunc = truncation_for_budget(args.budget, cfg.max_pool_size)
                res = early_stop_search(cfg, table, trunc)
        results[seed] = res
        clock[str(seed)] = time.perf_counter() - t0
    _emit_results(out_dir, results)
    _write_manifest(out_dir, f"baseline {args.name}", raw, _seed_list(args), bench_path, clock)
    return 0


def _cmd_analyze(args) -> int:
    bench_path = _resolve_benchmark(args.benchmark, {})
    table = load_benchmark(bench_path)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if args.what == "spearman":
        epoch = args.epoch or table.epoch_grid[0]
        keys = table.sorted_keys()
        idx = table.epoch_grid.index(epoch)
        early = [table.records[k].val_acc[idx] for k in keys]
        final = [table.records[k].val_acc[-1] for k in keys]
        rows = [[epoch, repr(spearman(early, final))]]
        _write_csv(out_dir / "analysis.csv", ["epoch", "spearman_vs_final"], rows)
    elif args.what == "survival":
        epoch = args.epoch or table.epoch_grid[0]
        frac = survival_fraction(table, epoch, args.quantile)
        _write_csv(out_dir / "analysis.csv", ["epoch", "quantile", "survival_fraction"],
                   [[epoch, repr(args.quantile), repr(frac)]])
    elif args.what == "trajectory":
        rows = [[e, repr(c)] for e, c in spearman_trajectory(table)]
        _write_csv(out_dir / "analysis.csv", ["epoch", "spearman_vs_final"], rows)
    else:  # prior-corr
        metric = args.metric or (table.prior_metrics[0] if table.prior_metrics else None)
        if not metric:
            raise ConfigError("benchmark has no prior metrics; pass --metric")
        whole, top = prior_correlation(table, metric, args.top_quantile)
        _write_csv(out_dir / "analysis.csv",
                   ["metric", "whole_space_spearman", "top_subset_spearman", "top_quantile"],
                   [[metric, repr(whole), repr(top), repr(args.top_quantile)]])
    _write_manifest(out_dir, f"analyze {args.what}", vars(args) | {"func": None}, [],
                    bench_path, {"analyze": time.perf_counter() - t0})
    return 0


def _cmd_gen_synthetic(args) -> int:
    space = default_synthetic_space(num_nodes=args.nodes, num_ops=args.ops)
    t0 = time.perf_counter()
    table = generate_synthetic(
        space, args.n, rank_stability=args.rank_stability, noise=args.noise,
        max_epoch=args.max_epoch, rng_seed=args.seed,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_benchmark(table, out)
    print(f"wrote {len(table)} records to {out} "
          f"(realized rank stability {table.notes['rank_stability_realized']:.3f})")
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_manifest(out_dir, "gen-synthetic", vars(args) | {"func": None}, [args.seed],
                        out, {"generate": time.perf_counter() - t0})
    return 0


def _cmd_ablate(args) -> int:
    raw = parse_config_file(args.config) if args.config else {}
    bench_path = _resolve_benchmark(args.benchmark, raw)
    table = load_benchmark(bench_path)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = _seed_list(args)
    rows, clock = [], {}
    for value in args.values.split(";" if args.knob == "schedule" else ","):
        value = value.strip()
        sweep_raw = dict(raw)
        if args.knob == "schedule":
            sweep_raw["schedule_epochs"] = value
        else:
            base = build_search_config(raw, table, 0)
            ratios = (base.schedule.move_ratios[0],) + \
                (float(Fraction(value)),) * (base.schedule.num_levels - 1)
            sweep_raw["move_ratios"] = ",".join(repr(r) for r in ratios)
        finals, budgets = [], []
        t0 = time.perf_counter()
        for seed in seeds:
            cfg = build_search_config(sweep_raw, table, seed)
            res = run_search(cfg, table)
            finals.append(res.best_final_val_acc)
            budgets.append(res.total_budget_epochs)
        clock[value] = time.perf_counter() - t0
        rows.append([value, budgets[0], repr(float(np.mean(finals))),
                     repr(float(np.std(finals)))])
    _write_csv(out_dir / "ablate.csv",
               [args.knob, "budget_epochs", "final_val_mean", "final_val_std"], rows)
    _write_manifest(out_dir, f"ablate {args.knob}", raw, seeds, bench_path, clock)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rankhalving",
        description="Budget-efficient architecture search on tabular benchmarks.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--benchmark", help="benchmark file (bench-v1 format)")
        p.add_argument("--seeds", type=int, default=1, help="number of seeds")
        p.add_argument("--seed-base", type=int, default=0, help="first seed value")
        p.add_argument("--out-dir", required=True, help="output directory")

    p_run = sub.add_parser("run", help="run the full search")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_base = sub.add_parser("baseline", help="run a comparison method")
    p_base.add_argument("name", choices=["random", "prior", "early-stop", "full"])
    common(p_base)
    p_base.add_argument("--budget", type=int, help="epoch budget (random / early-stop)")
    p_base.add_argument("--sample-n", type=int, default=1000, help="prior baseline sample size")
    p_base.add_argument("--truncation", type=int, help="early-stop truncation epoch")
    p_base.set_defaults(func=_cmd_baseline)

    p_an = sub.add_parser("analyze", help="benchmark diagnostics")
    p_an.add_argument("what", choices=["spearman", "survival", "trajectory", "prior-corr"])
    p_an.add_argument("--benchmark", required=True)
    p_an.add_argument("--epoch", type=int)
    p_an.add_argument("--quantile", type=float, default=0.5)
    p_an.add_argument("--metric")
    p_an.add_argument("--top-quantile", type=float, default=0.01)
    p_an.add_argument("--out-dir", required=True)
    p_an.set_defaults(func=_cmd_analyze)

    p_gen = sub.add_parser("gen-synthetic", help="generate a synthetic benchmark")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--n", type=int, default=5000)
    p_gen.add_argument("--rank-stability", type=float, default=0.7)
    p_gen.add_argument("--noise", type=float, default=0.01)
    p_gen.add_argument("--max-epoch", type=int, default=12)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--nodes", type=int, default=6)
    p_gen.add_argument("--ops", type=int, default=5)
    p_gen.add_argument("--out-dir", help="optional manifest directory")
    p_gen.set_defaults(func=_cmd_gen_synthetic)

    p_ab = sub.add_parser("ablate", help="sweep a schedule or move-ratio knob")
    p_ab.add_argument("knob", choices=["schedule", "ratio"])
    p_ab.add_argument("--values", required=True,
                      help="ratio list '0.3,0.5' or schedule list '1,2,3,12;10,50,100,200'")
    common(p_ab)
    p_ab.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, ValueError, RuntimeError) as exc:
        print(f"rankhalving: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
