import dataclasses

import numpy as np
import pytest

from rankhalving import (
    Schedule,
    SearchConfig,
    TrainConfig,
    closed_form_budget,
    early_stop_search,
    full_budget_search,
    generate_synthetic,
    prior_only,
    random_search,
)
from rankhalving.search import ConfigError


@pytest.fixture(scope="module")
def table12(space201like):
    return generate_synthetic(space201like, 600, rank_stability=0.7, noise=0.01,
                              max_epoch=12, rng_seed=21)


@pytest.fixture(scope="module")
def table200(space201like):
    return generate_synthetic(space201like, 300, rank_stability=0.9, noise=0.005,
                              max_epoch=200, rng_seed=23)


def es_cfg(table, **kw):
    base = dict(
        schedule=Schedule(epochs=(table.max_epoch,), move_ratios=(0.5,)),
        max_pool_size=78, init_pool_size=48, proposal_size=30,
        universe_size=150, rng_seed=0, trainer=TrainConfig(epochs=3),
        max_train_pairs=500,
    )
    base.update(kw)
    return SearchConfig(**base)


# ---------------------------------------------------------------------------
# random search
# ---------------------------------------------------------------------------

def test_random_search_single_architecture(table12):
    res = random_search(table12, table12.max_epoch, rng_seed=0)
    assert res.rounds == 1
    assert res.total_budget_epochs == 12


def test_random_search_budget_20000_trains_100(table200):
    res = random_search(table200, 20_000, rng_seed=1)
    assert res.rounds == 100
    assert res.total_budget_epochs == 20_000


def test_random_search_rejects_tiny_budget(table12):
    with pytest.raises(ConfigError):
        random_search(table12, 5, rng_seed=0)


def test_random_search_improves_with_budget(table12):
    # Monte-Carlo: mean best final accuracy is higher at 8x the budget
    small = [random_search(table12, 2 * 12, rng_seed=s).best_final_val_acc
             for s in range(20)]
    large = [random_search(table12, 16 * 12, rng_seed=s).best_final_val_acc
             for s in range(20)]
    assert np.mean(large) > np.mean(small)


def test_random_search_deterministic(table12):
    r1 = random_search(table12, 120, rng_seed=9)
    r2 = random_search(table12, 120, rng_seed=9)
    assert r1.best_key == r2.best_key
    assert r1.per_round_log == r2.per_round_log


# ---------------------------------------------------------------------------
# prior-score-only selection
# ---------------------------------------------------------------------------

def test_prior_only_single_sample(table12):
    res = prior_only(table12, sample_n=1, metric="mag_synth", rng_seed=4)
    assert res.total_budget_epochs == 0
    assert len(res.pool_final) == 1
    assert res.best_key == res.pool_final[0].key


def test_prior_only_deterministic(table12):
    r1 = prior_only(table12, sample_n=200, metric="mag_synth", rng_seed=5)
    r2 = prior_only(table12, sample_n=200, metric="mag_synth", rng_seed=5)
    assert r1.best_key == r2.best_key


def test_prior_only_picks_argmax_prior(table12):
    res = prior_only(table12, sample_n=100, metric="mag_synth", rng_seed=6)
    best_prior = max(c.score for c in res.pool_final)
    assert table12.prior_score(res.best_key, "mag_synth") == best_prior


def test_prior_only_worse_than_random_search_at_budget(table12):
    # mirrors the observation that prior scores alone underperform random
    # search with a real training budget
    rs = [random_search(table12, 20_000, rng_seed=s).best_final_val_acc
          for s in range(10)]
    po = [prior_only(table12, sample_n=500, metric="mag_synth",
                     rng_seed=s).best_final_val_acc for s in range(10)]
    assert np.mean(rs) > np.mean(po)


def test_prior_only_missing_metric(table12):
    with pytest.raises(ConfigError):
        prior_only(table12, metric="absent", rng_seed=0)


# ---------------------------------------------------------------------------
# early stopping and full budget
# ---------------------------------------------------------------------------

def test_early_stop_budget_exact(table12):
    cfg = es_cfg(table12)
    res = early_stop_search(cfg, table12, truncation_epoch=3)
    assert res.total_budget_epochs == cfg.max_pool_size * 3
    assert len(res.pool_final) == cfg.max_pool_size
    assert all(c.trained_epochs == 3 for c in res.pool_final)


def test_early_stop_at_max_epoch_equals_full_budget(table12):
    cfg = es_cfg(table12)
    es = early_stop_search(cfg, table12, truncation_epoch=table12.max_epoch)
    full = full_budget_search(cfg, table12)
    assert es.best_key == full.best_key
    assert es.total_budget_epochs == full.total_budget_epochs
    assert [c.key for c in es.pool_final] == [c.key for c in full.pool_final]


def test_full_budget_pool100_costs_20000(table200):
    cfg = es_cfg(table200, max_pool_size=100, universe_size=160)
    res = full_budget_search(cfg, table200)
    assert res.total_budget_epochs == 100 * 200 == 20_000


def test_full_budget_dominates_pyramid_budget(table200):
    pyramid_cfg = SearchConfig(
        schedule=Schedule(epochs=(10, 50, 100, 200),
                          move_ratios=(1 / 3, 0.5, 0.5, 0.5)),
        max_pool_size=100, init_pool_size=48, proposal_size=30,
        universe_size=160, trainer=TrainConfig(epochs=2),
    )
    assert closed_form_budget(pyramid_cfg) < 100 * 200


def test_early_stop_selection_uses_truncated_accuracy(table12):
    cfg = es_cfg(table12)
    res = early_stop_search(cfg, table12, truncation_epoch=2)
    assert res.best_val_acc == max(c.score for c in res.pool_final)
    assert res.best_val_acc == table12.val_acc(res.best_key, 2)
    assert res.best_final_val_acc == table12.final_val_acc(res.best_key)


def test_early_stop_rejects_bad_truncation(table12):
    cfg = es_cfg(table12)
    with pytest.raises(Exception):
        early_stop_search(cfg, table12, truncation_epoch=13)


def test_full_budget_finds_top_architectures(table12):
    # separable regime: fully-trained labels, guided proposals
    hits = 0
    finals = sorted((r.val_acc[-1] for r in table12.records.values()), reverse=True)
    threshold = finals[max(0, int(0.01 * len(finals)) - 1)]
    for seed in range(10):
        cfg = es_cfg(table12, max_pool_size=108, universe_size=300, rng_seed=seed,
                     trainer=TrainConfig(epochs=30), max_train_pairs=1500)
        res = full_budget_search(cfg, table12)
        if res.best_final_val_acc >= threshold:
            hits += 1
    assert hits >= 9, f"top-1% hits {hits}/10"
