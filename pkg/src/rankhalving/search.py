"""Main search loop: grow the candidate pool to its maximum size with
scheduler passes, retraining the pairwise ranker between rounds and
proposing new candidates from a fixed seeded universe.

The budget a run will consume is a pure function of the pool-size
configuration and schedule (promotion counts never depend on scores), so
`closed_form_budget` simulates the promotion cascade symbolically and every
run asserts its ledger against it. This is the strongest scheduler
regression check: any charging or promotion bug breaks the equality.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .bench import BenchmarkTable, PriorScorer
from .budget import BudgetLedger
from .pyramid import (
    ContextItem,
    Pyramid,
    PyramidError,
    Schedule,
    pyramid_pass,
    pairwise_context,
    promote_count,
)
from .ranker import RankerConfig, generate_pairs, global_rank, init_model, propose
from .ranker_train import TrainConfig, train
from .spaces import Architecture

__all__ = [
    "ConfigError",
    "SearchConfig",
    "RoundLog",
    "SearchResult",
    "default_schedule",
    "closed_form_budget",
    "run_search",
]


class ConfigError(ValueError):
    """Invalid search configuration."""


def default_schedule(table: BenchmarkTable) -> Schedule:
    """Per-benchmark default epoch schedules keyed on the table's epoch grid."""
    presets = {
        12: (1, 2, 3, 12),
        50: (10, 20, 30, 50),
        108: (12, 36, 108),
        200: (10, 50, 100, 200),
    }
    if not table.is_dense:
        epochs = table.epoch_grid[-3:] if len(table.epoch_grid) >= 3 else table.epoch_grid
    elif table.max_epoch in presets:
        epochs = presets[table.max_epoch]
    else:
        raise ConfigError(
            f"no default schedule for max_epoch={table.max_epoch}; set one explicitly"
        )
    ratios = (1.0 / 3.0,) + (0.5,) * (len(epochs) - 1)
    return Schedule(epochs=tuple(epochs), move_ratios=ratios)


@dataclass(frozen=True)
class SearchConfig:
    """Pool sizing, schedule, universe, and predictor settings for one run."""

    schedule: Schedule
    max_pool_size: int = 300
    init_pool_size: int = 48
    proposal_size: int = 30
    universe_size: int = 5000
    prior_metric: str = "mag_synth"
    rng_seed: int = 0
    ranker: RankerConfig = field(default_factory=RankerConfig)
    trainer: TrainConfig = field(default_factory=TrainConfig)
    # Per-round cap on predictor training pairs (seeded subsample; 0 = all).
    # Large pools induce O(n^2) pairs whose information is heavily redundant;
    # capping keeps desk-scale runs fast without touching the budget ledger.
    max_train_pairs: int = 2500

    def __post_init__(self):
        if self.init_pool_size < 1 or self.proposal_size < 1:
            raise ConfigError("pool sizes must be positive")
        if self.max_train_pairs < 0:
            raise ConfigError("max_train_pairs must be >= 0")
        if self.max_pool_size < self.init_pool_size:
            raise ConfigError(
                f"max_pool_size {self.max_pool_size} < init_pool_size {self.init_pool_size}"
            )
        if self.universe_size < self.max_pool_size + self.proposal_size:
            raise ConfigError(
                "universe_size must leave proposal headroom "
                f"(need >= {self.max_pool_size + self.proposal_size})"
            )

    def insert_counts(self) -> list[int]:
        """Level-0 insertion sizes: the initial batch, then capped proposals."""
        counts = [self.init_pool_size]
        total = self.init_pool_size
        while total < self.max_pool_size:
            k = min(self.proposal_size, self.max_pool_size - total)
            counts.append(k)
            total += k
        return counts


class RoundLog(NamedTuple):
    round: int
    pool_size: int
    budget_epochs: int
    best_so_far: float


@dataclass(frozen=True)
class SearchResult:
    """Outcome of one search run. `best_val_acc` is the accuracy the method
    itself observed (at the winner's trained epoch); `best_final_val_acc`
    and `best_test_acc` are the benchmark's fully-trained numbers for the
    same architecture."""

    method: str
    best_arch: Architecture
    best_key: str
    best_val_acc: float
    best_final_val_acc: float
    best_test_acc: float
    total_budget_epochs: int
    rounds: int
    pool_final: list[ContextItem]
    per_round_log: list[RoundLog]


def closed_form_budget(cfg: SearchConfig) -> int:
    """Exact ledger total of a run with this configuration.

    Replays the promotion cascade on counts alone: per pass, each level
    promotes round-half-up(ratio * cascade + carry) entries (at least one
    while any cascade remains, capped at the level population) and charges
    the epoch delta to the next level.
    """
    sched = cfg.schedule
    n = sched.num_levels
    pops = [0] * (n + 1)
    carries = [0.0] * n
    budget = 0
    for k in cfg.insert_counts():
        pops[0] += k
        for level in range(n):
            desired = sched.move_ratios[level] * k + carries[level]
            m = promote_count(k, sched.move_ratios[level], pops[level], carries[level])
            if k > 0:
                carries[level] = desired - m
            budget += m * (sched.level_epoch(level + 1) - sched.level_epoch(level))
            pops[level] -= m
            pops[level + 1] += m
            k = m
    return budget


def _spawn_seeds(root_seed: int, count: int) -> list[int]:
    ss = np.random.SeedSequence(root_seed)
    return [int(child.generate_state(1)[0]) for child in ss.spawn(count)]


def _cap_pairs(pairs, limit: int, rng_seed: int):
    if limit <= 0 or len(pairs) <= limit:
        return pairs
    rng = np.random.default_rng(rng_seed)
    idx = rng.choice(len(pairs), size=limit, replace=False)
    return [pairs[int(i)] for i in np.sort(idx)]


def _pool_best(entries) -> tuple[float, str]:
    best = max(entries, key=lambda e: (e.current_val_acc, e.key))
    return float(best.current_val_acc), best.key


def run_search(cfg: SearchConfig, table: BenchmarkTable,
               scorer: PriorScorer | None = None) -> SearchResult:
    """Run the full search against a benchmark oracle; deterministic per seed.

    Candidates are drawn from the benchmark's own architecture set (for
    real tabular benchmarks that set is the whole space), so every oracle
    lookup is defined. `scorer` backs prior scores when the configured
    metric is absent from the table.
    """
    cfg.schedule.validate_against(table)
    keys = table.sorted_keys()
    if cfg.prior_metric not in table.prior_metrics and scorer is None:
        raise ConfigError(
            f"prior metric {cfg.prior_metric!r} not in benchmark and no scorer plugged"
        )
    if len(keys) < cfg.init_pool_size:
        raise ConfigError(f"benchmark has only {len(keys)} architectures")

    counts = cfg.insert_counts()
    n_rounds = len(counts) - 1
    seeds = _spawn_seeds(cfg.rng_seed, 2 + 3 * n_rounds)
    seed_universe, seed_init = seeds[0], seeds[1]
    round_seeds = seeds[2:]

    rng_u = np.random.default_rng(seed_universe)
    uni_idx = rng_u.choice(len(keys), size=min(cfg.universe_size, len(keys)), replace=False)
    universe = [table.records[keys[int(i)]].arch for i in uni_idx]

    rng_i = np.random.default_rng(seed_init)
    init_idx = rng_i.choice(len(keys), size=cfg.init_pool_size, replace=False)
    init_archs = [table.records[keys[int(i)]].arch for i in init_idx]

    def prior_of(arch):
        return table.prior_score(arch, cfg.prior_metric, scorer)

    ledger = BudgetLedger()
    pyramid = Pyramid(schedule=cfg.schedule)
    pyramid.insert_level0([(a, prior_of(a)) for a in init_archs], arrival_round=0)
    pyramid_pass(pyramid, ledger, table, cfg.init_pool_size)

    best_so_far, _ = _pool_best(pyramid.trained_entries())
    log = [RoundLog(0, len(pyramid), ledger.total_epochs, best_so_far)]

    num_ops = table.space.num_ops
    for t, k_t in enumerate(counts[1:], start=1):
        s_train, s_rank, s_prop = round_seeds[3 * (t - 1):3 * t]
        context = pairwise_context(pyramid)
        pairs = _cap_pairs(generate_pairs(context), cfg.max_train_pairs, s_train)
        lookup = {c.key: c.arch for c in context}
        model = init_model(num_ops, cfg.ranker, rng_seed=s_train)
        train(model, pairs, dataclasses.replace(cfg.trainer, rng_seed=s_train), lookup)

        reference = [e.arch for e in sorted(pyramid.trained_entries(), key=lambda e: e.key)]
        ranking = global_rank(model, universe, reference, rng_seed=s_rank)
        picks = propose(ranking, pyramid.keys(), k_t, rng_seed=s_prop)
        pyramid.insert_level0([(a, prior_of(a)) for a in picks], arrival_round=t)
        pyramid_pass(pyramid, ledger, table, k_t)

        round_best, _ = _pool_best(pyramid.trained_entries())
        best_so_far = max(best_so_far, round_best)
        log.append(RoundLog(t, len(pyramid), ledger.total_epochs, best_so_far))

    expected = closed_form_budget(cfg)
    if ledger.total_epochs != expected or ledger.total_epochs != ledger.recompute_total():
        raise PyramidError(
            f"ledger total {ledger.total_epochs} != closed-form budget {expected}"
        )

    trained = pyramid.trained_entries()
    winner = max(trained, key=lambda e: (e.current_val_acc, e.key))
    return SearchResult(
        method="rank-halving",
        best_arch=winner.arch,
        best_key=winner.key,
        best_val_acc=float(winner.current_val_acc),
        best_final_val_acc=table.final_val_acc(winner.key),
        best_test_acc=table.test_acc(winner.key),
        total_budget_epochs=ledger.total_epochs,
        rounds=n_rounds,
        pool_final=pairwise_context(pyramid),
        per_round_log=log,
    )
