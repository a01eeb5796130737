"""Comparison methods sharing the same oracle and ledger contracts.

* random_search: train fresh random architectures fully until the budget
  runs out.
* prior_only: pick the best train-free prior score among a random sample;
  consumes zero training budget.
* early_stop_search: the same predictor-guided loop as the main method but
  with a flat pool — every architecture trains to one truncation epoch, so
  labels come purely from same-epoch accuracy comparisons.
* full_budget_search: early_stop_search at the benchmark's final epoch,
  i.e. the classic fully-trained predictor pipeline.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .bench import BenchmarkTable, EpochError
from .budget import BudgetLedger
from .pyramid import ContextItem
from .ranker import generate_pairs, global_rank, init_model, propose
from .ranker_train import train
from .spaces import canonical_key
from .search import (
    ConfigError,
    RoundLog,
    SearchConfig,
    SearchResult,
    _cap_pairs,
    _spawn_seeds,
)

__all__ = [
    "random_search",
    "prior_only",
    "early_stop_search",
    "full_budget_search",
    "truncation_for_budget",
]


def random_search(table: BenchmarkTable, budget_epochs: int, rng_seed: int) -> SearchResult:
    """Fully train uniformly sampled architectures until the budget is spent."""
    if budget_epochs < table.max_epoch:
        raise ConfigError(
            f"budget {budget_epochs} cannot train even one architecture "
            f"({table.max_epoch} epochs)"
        )
    n_eval = min(budget_epochs // table.max_epoch, len(table))
    keys = table.sorted_keys()
    rng = np.random.default_rng(rng_seed)
    idx = rng.choice(len(keys), size=n_eval, replace=False)

    ledger = BudgetLedger()
    log = []
    best_key, best_acc = None, -1.0
    pool = []
    for i, ki in enumerate(idx, start=1):
        key = keys[int(ki)]
        ledger.charge(key, 0, table.max_epoch)
        acc = table.final_val_acc(key)
        pool.append(ContextItem(key=key, arch=table.records[key].arch,
                                level=1, trained_epochs=table.max_epoch, score=acc))
        if (acc, key) > (best_acc, best_key or ""):
            best_key, best_acc = key, acc
        log.append(RoundLog(i, i, ledger.total_epochs, best_acc))

    return SearchResult(
        method="random-search",
        best_arch=table.records[best_key].arch,
        best_key=best_key,
        best_val_acc=best_acc,
        best_final_val_acc=table.final_val_acc(best_key),
        best_test_acc=table.test_acc(best_key),
        total_budget_epochs=ledger.total_epochs,
        rounds=n_eval,
        pool_final=pool,
        per_round_log=log,
    )


def prior_only(table: BenchmarkTable, sample_n: int = 1000, metric: str = "mag_synth",
               rng_seed: int = 0, scorer=None) -> SearchResult:
    """Select by train-free prior score alone; zero training budget.

    The reported accuracies are the benchmark's numbers for the selected
    architecture (selection itself trains nothing).
    """
    if metric not in table.prior_metrics and scorer is None:
        raise ConfigError(f"prior metric {metric!r} not in benchmark and no scorer plugged")
    keys = table.sorted_keys()
    rng = np.random.default_rng(rng_seed)
    idx = rng.choice(len(keys), size=min(sample_n, len(keys)), replace=False)
    sampled = [keys[int(i)] for i in idx]
    scores = {k: table.prior_score(k, metric, scorer) for k in sampled}
    best_key = max(sampled, key=lambda k: (scores[k], k))

    pool = [ContextItem(key=k, arch=table.records[k].arch, level=0,
                        trained_epochs=0, score=scores[k]) for k in sorted(sampled)]
    return SearchResult(
        method="prior-only",
        best_arch=table.records[best_key].arch,
        best_key=best_key,
        best_val_acc=table.final_val_acc(best_key),
        best_final_val_acc=table.final_val_acc(best_key),
        best_test_acc=table.test_acc(best_key),
        total_budget_epochs=0,
        rounds=0,
        pool_final=pool,
        per_round_log=[RoundLog(0, len(sampled), 0, table.final_val_acc(best_key))],
    )


def truncation_for_budget(budget_epochs: int, pool_size: int) -> int:
    """Truncation epoch giving a flat pool approximately the target budget."""
    return max(1, budget_epochs // pool_size)


def early_stop_search(cfg: SearchConfig, table: BenchmarkTable,
                      truncation_epoch: int) -> SearchResult:
    """Predictor-guided search with uniform early stopping.

    Every pool architecture trains exactly to `truncation_epoch`; pairwise
    labels reduce to same-epoch accuracy comparisons, and the final
    selection maximizes truncated validation accuracy. Budget is exactly
    pool_size * truncation_epoch.
    """
    if truncation_epoch > table.max_epoch:
        raise EpochError(f"truncation {truncation_epoch} beyond max epoch {table.max_epoch}")
    if truncation_epoch not in table.epoch_grid:
        raise EpochError(f"truncation epoch {truncation_epoch} not in benchmark grid")
    keys = table.sorted_keys()
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

    ledger = BudgetLedger()
    pool: dict[str, ContextItem] = {}

    def admit(archs):
        for a in archs:
            key = canonical_key(a)
            ledger.charge(key, 0, truncation_epoch)
            pool[key] = ContextItem(key=key, arch=a, level=1,
                                    trained_epochs=truncation_epoch,
                                    score=table.val_acc(a, truncation_epoch))

    admit(table.records[keys[int(i)]].arch for i in init_idx)
    best = max(pool.values(), key=lambda c: (c.score, c.key))
    log = [RoundLog(0, len(pool), ledger.total_epochs, best.score)]

    num_ops = table.space.num_ops
    for t, k_t in enumerate(counts[1:], start=1):
        s_train, s_rank, s_prop = round_seeds[3 * (t - 1):3 * t]
        context = sorted(pool.values(), key=lambda c: c.key)
        pairs = _cap_pairs(generate_pairs(context), cfg.max_train_pairs, s_train)
        lookup = {c.key: c.arch for c in context}
        model = init_model(num_ops, cfg.ranker, rng_seed=s_train)
        train(model, pairs, dataclasses.replace(cfg.trainer, rng_seed=s_train), lookup)
        reference = [c.arch for c in context]
        ranking = global_rank(model, universe, reference, rng_seed=s_rank)
        picks = propose(ranking, set(pool), k_t, rng_seed=s_prop)
        admit(picks)
        round_best = max(pool.values(), key=lambda c: (c.score, c.key))
        log.append(RoundLog(t, len(pool), ledger.total_epochs,
                            max(log[-1].best_so_far, round_best.score)))

    assert ledger.total_epochs == cfg.max_pool_size * truncation_epoch
    winner = max(pool.values(), key=lambda c: (c.score, c.key))
    return SearchResult(
        method=f"early-stop@{truncation_epoch}",
        best_arch=winner.arch,
        best_key=winner.key,
        best_val_acc=float(winner.score),
        best_final_val_acc=table.final_val_acc(winner.key),
        best_test_acc=table.test_acc(winner.key),
        total_budget_epochs=ledger.total_epochs,
        rounds=n_rounds,
        pool_final=sorted(pool.values(), key=lambda c: c.key),
        per_round_log=log,
    )


def full_budget_search(cfg: SearchConfig, table: BenchmarkTable) -> SearchResult:
    """The classic fully-trained predictor pipeline (no early termination)."""
    result = early_stop_search(cfg, table, table.max_epoch)
    return dataclasses.replace(result, method="full-budget")
