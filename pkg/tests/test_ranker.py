import os

import numpy as np
import pytest

from rankhalving import (
    RankerConfig,
    RankerError,
    TrainConfig,
    TrainingError,
    canonical_key,
    forward,
    generate_pairs,
    global_rank,
    init_model,
    load_model,
    propose,
    save_model,
    subsample_universe,
    train,
)
from rankhalving.pyramid import ContextItem
from rankhalving.ranker import arch_tensors, embed_batch
from rankhalving.ranker_train import loss_and_grad
from rankhalving.spaces import SearchSpaceSpec, from_indices


def flat_context(archs, scores, epoch=10, level=1):
    items = [ContextItem(key=canonical_key(a), arch=a, level=level,
                         trained_epochs=epoch, score=float(s))
             for a, s in zip(archs, scores)]
    return sorted(items, key=lambda c: c.key)


@pytest.fixture(scope="module")
def toy_space():
    return SearchSpaceSpec(num_nodes=3, op_vocabulary=("a", "b", "c"),
                           structure="free_dag")


@pytest.fixture(scope="module")
def toy_archs(toy_space):
    return subsample_universe(toy_space, 12, rng_seed=9)


# ---------------------------------------------------------------------------
# pairwise labels
# ---------------------------------------------------------------------------

def test_epoch_difference_forces_label(toy_archs):
    a_hi = ContextItem(key=canonical_key(toy_archs[0]), arch=toy_archs[0],
                       level=3, trained_epochs=100, score=0.5)
    a_lo = ContextItem(key=canonical_key(toy_archs[1]), arch=toy_archs[1],
                       level=1, trained_epochs=10, score=0.99)
    labels = generate_pairs(sorted([a_hi, a_lo], key=lambda c: c.key))
    assert len(labels) == 1
    lab = labels[0]
    worse = lab.a if lab.y == 1 else lab.b
    assert worse == a_lo.key  # fewer epochs loses despite higher score


def test_same_level_compares_scores(toy_archs):
    ctx = flat_context(toy_archs[:2], [0.91, 0.88])
    labels = generate_pairs(ctx)
    assert len(labels) == 1
    lab = labels[0]
    worse = lab.a if lab.y == 1 else lab.b
    key_88 = next(c.key for c in ctx if c.score == 0.88)
    assert worse == key_88


def test_pair_count_matches_brute_force(toy_archs):
    scores = np.linspace(0.1, 0.9, len(toy_archs))
    ctx = flat_context(toy_archs, scores)
    labels = generate_pairs(ctx)
    n = len(ctx)
    assert len(labels) == n * (n - 1) // 2
    # brute-force double loop count of decidable pairs
    count = sum(1 for i in range(n) for j in range(i + 1, n)
                if ctx[i].score != ctx[j].score)
    assert len(labels) == count


def test_ties_omitted(toy_archs):
    ctx = flat_context(toy_archs[:3], [0.5, 0.5, 0.7])
    labels = generate_pairs(ctx)
    assert len(labels) == 2  # tied pair dropped


def test_labels_antisymmetric_under_context_order(toy_archs):
    ctx = flat_context(toy_archs, np.linspace(0, 1, len(toy_archs)))
    fwd = {(p.a, p.b): p.y for p in generate_pairs(ctx)}
    rev = {(p.a, p.b): p.y for p in generate_pairs(list(reversed(ctx)))}
    assert fwd == rev  # canonical orientation is context-order independent


def test_within_level_transitivity(toy_archs):
    ctx = flat_context(toy_archs[:3], [0.9, 0.6, 0.3])
    labels = {(p.a, p.b): p.y for p in generate_pairs(ctx)}

    def beats(x, y):
        if (x, y) in labels:
            return labels[(x, y)] == 0
        return labels[(y, x)] == 1

    best, mid, worst = (c.key for c in sorted(ctx, key=lambda c: -c.score))
    assert beats(best, mid) and beats(mid, worst) and beats(best, worst)


# ---------------------------------------------------------------------------
# model forward
# ---------------------------------------------------------------------------

def test_self_comparison_is_exactly_half(toy_archs):
    model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 0)
    assert forward(model, toy_archs[0], toy_archs[0]) == 0.5


def test_antisymmetry_of_win_probability(toy_archs):
    model = init_model(3, RankerConfig(num_layers=3, emb_dim=8, hidden_dim=16), 1)
    for a, b in [(0, 1), (2, 3), (4, 5)]:
        p_ab = forward(model, toy_archs[a], toy_archs[b])
        p_ba = forward(model, toy_archs[b], toy_archs[a])
        assert 0.0 < p_ab < 1.0
        assert abs(p_ab + p_ba - 1.0) < 1e-12


def test_fresh_model_finite_probabilities_and_gradients(toy_archs):
    model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 2)
    p = forward(model, toy_archs[0], toy_archs[1])
    assert 0.0 < p < 1.0
    ops, nbr = arch_tensors(toy_archs[:4])
    loss, grad = loss_and_grad(model, ops, nbr, np.array([0, 1], dtype=np.int64),
                               np.array([2, 3], dtype=np.int64),
                               np.array([0, 1], dtype=np.int64))
    assert np.isfinite(loss) and np.all(np.isfinite(grad))


def test_nonfinite_model_raises(toy_archs):
    model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 3)
    model.theta[0] = np.nan
    with pytest.raises(RankerError):
        forward(model, toy_archs[0], toy_archs[1])


def test_embedding_deterministic_within_process(toy_archs):
    model = init_model(3, RankerConfig(), 4)
    ops, nbr = arch_tensors(toy_archs[:6])
    e1 = embed_batch(model, ops, nbr)
    e2 = embed_batch(model, ops, nbr)
    assert np.array_equal(e1, e2)


def test_model_checkpoint_roundtrip(toy_archs, tmp_path):
    model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 5)
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    assert np.array_equal(loaded.theta, model.theta)
    assert loaded.cfg == model.cfg
    assert forward(loaded, toy_archs[0], toy_archs[1]) == \
        forward(model, toy_archs[0], toy_archs[1])


# ---------------------------------------------------------------------------
# gradient correctness (finite-difference oracle) and path cross-check
# ---------------------------------------------------------------------------

def finite_difference_gradient(model, ops, nbr, pa, pb, y, step=1e-4):
    fd = np.zeros_like(model.theta)
    for i in range(model.num_params):
        orig = model.theta[i]
        model.theta[i] = orig + step
        lp, _ = loss_and_grad(model, ops, nbr, pa, pb, y)
        model.theta[i] = orig - step
        lm, _ = loss_and_grad(model, ops, nbr, pa, pb, y)
        model.theta[i] = orig
        fd[i] = (lp - lm) / (2 * step)
    return fd


def test_gradient_check_every_parameter(toy_space):
    archs = subsample_universe(toy_space, 8, rng_seed=1)
    ops, nbr = arch_tensors(archs)
    model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 7)
    pa = np.array([0, 1, 2, 4], dtype=np.int64)
    pb = np.array([3, 2, 5, 1], dtype=np.int64)
    y = np.array([1, 0, 1, 0], dtype=np.int64)
    _, grad = loss_and_grad(model, ops, nbr, pa, pb, y)
    fd = finite_difference_gradient(model, ops, nbr, pa, pb, y)
    denom = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1.0)
    rel = np.abs(grad - fd) / denom
    assert rel.max() < 1e-4, f"max rel error {rel.max():.2e} at {int(np.argmax(rel))}"


def test_compiled_path_matches_reference_gradient(toy_space):
    if os.environ.get("RANKHALVING_NO_NUMBA"):
        pytest.skip("compiled path disabled")
    from rankhalving import ranker_fast
    if not ranker_fast.AVAILABLE:
        pytest.skip("numba unavailable")
    archs = subsample_universe(toy_space, 10, rng_seed=2)
    ops, nbr = arch_tensors(archs)
    model = init_model(3, RankerConfig(), 11)
    pa = np.array([0, 1, 2, 4, 6, 8], dtype=np.int64)
    pb = np.array([3, 2, 5, 1, 9, 7], dtype=np.int64)
    y = np.array([1, 0, 1, 0, 0, 1], dtype=np.int64)
    loss_r, grad_r = loss_and_grad(model, ops, nbr, pa, pb, y)
    loss_f, grad_f = ranker_fast.batch_grad(model, ops, nbr, pa, pb, y)
    assert abs(loss_r - loss_f) < 1e-12
    denom = np.maximum(np.abs(grad_r), 1e-10)
    assert (np.abs(grad_r - grad_f) / denom).max() < 1e-9


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def test_single_pair_overfits(toy_archs):
    ctx = flat_context(toy_archs[:2], [0.2, 0.9])
    pairs = generate_pairs(ctx)
    lookup = {c.key: c.arch for c in ctx}
    model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 13)
    result = train(model, pairs, TrainConfig(epochs=100, rng_seed=0), lookup)
    assert result.loss_trace[-1] < result.loss_trace[0]


def test_training_loss_halves_on_separable_pool(toy_space):
    archs = subsample_universe(toy_space, 40, rng_seed=3)
    w = np.array([-1.0, 0.0, 1.0])
    scores = [float(np.bincount(np.asarray(a.op_indices), minlength=3) @ w
                    + 0.01 * i) for i, a in enumerate(archs)]
    ctx = flat_context(archs, scores)
    pairs = generate_pairs(ctx)
    lookup = {c.key: c.arch for c in ctx}
    model = init_model(3, RankerConfig(), 17)
    result = train(model, pairs, TrainConfig(epochs=100, rng_seed=1), lookup)
    assert result.loss_trace[-1] <= 0.5 * result.loss_trace[0]


def test_training_deterministic_per_seed(toy_archs):
    ctx = flat_context(toy_archs, np.linspace(0.1, 0.9, len(toy_archs)))
    pairs = generate_pairs(ctx)
    lookup = {c.key: c.arch for c in ctx}
    thetas = []
    for _ in range(2):
        model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 19)
        train(model, pairs, TrainConfig(epochs=5, rng_seed=2), lookup)
        thetas.append(model.theta.copy())
    assert np.array_equal(thetas[0], thetas[1])


def test_empty_pairs_rejected(toy_archs):
    model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 23)
    with pytest.raises(RankerError):
        train(model, [], TrainConfig(), {})


def test_divergence_raises_with_trace(toy_archs):
    ctx = flat_context(toy_archs[:4], [0.1, 0.4, 0.6, 0.8])
    pairs = generate_pairs(ctx)
    lookup = {c.key: c.arch for c in ctx}
    model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 29)
    model.theta[-10] = np.nan
    with pytest.raises(TrainingError) as err:
        train(model, pairs, TrainConfig(epochs=3, rng_seed=0), lookup)
    assert len(err.value.trace) >= 1


def test_loss_trace_csv(toy_archs, tmp_path):
    ctx = flat_context(toy_archs[:3], [0.1, 0.5, 0.9])
    pairs = generate_pairs(ctx)
    lookup = {c.key: c.arch for c in ctx}
    model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 31)
    result = train(model, pairs, TrainConfig(epochs=4, rng_seed=0), lookup)
    path = tmp_path / "trace.csv"
    result.write_trace(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,mean_loss"
    assert len(lines) == 5
    assert float(lines[1].split(",")[1]) == result.loss_trace[0]


# ---------------------------------------------------------------------------
# global ranking and proposals
# ---------------------------------------------------------------------------

def test_global_rank_single_reference(toy_archs):
    model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 37)
    ref = [toy_archs[0]]
    cands = toy_archs[1:3]
    ranked = global_rank(model, cands, ref)
    p = [forward(model, c, ref[0]) for c in cands]
    expected_first = cands[0] if p[0] > p[1] else cands[1]
    assert canonical_key(ranked[0]) == canonical_key(expected_first)


def test_global_rank_matches_round_robin_tournament(toy_archs):
    # brute-force oracle: total win probability in a full round robin
    model = init_model(3, RankerConfig(num_layers=3, emb_dim=8, hidden_dim=16), 41)
    entries = toy_archs[:6]
    ranked = global_rank(model, entries, entries)
    wins = {}
    for a in entries:
        ka = canonical_key(a)
        wins[ka] = sum(forward(model, a, b) for b in entries
                       if canonical_key(b) != ka)
    oracle = sorted(entries, key=lambda a: (-wins[canonical_key(a)], canonical_key(a)))
    assert [canonical_key(a) for a in ranked] == [canonical_key(a) for a in oracle]


def test_global_rank_is_permutation(toy_archs):
    model = init_model(3, RankerConfig(num_layers=2, emb_dim=8, hidden_dim=8), 43)
    ranked = global_rank(model, toy_archs, toy_archs[:4])
    assert sorted(canonical_key(a) for a in ranked) == \
        sorted(canonical_key(a) for a in toy_archs)


def test_propose_top_half_plus_window_sample(toy_space):
    ranking = subsample_universe(toy_space, 80, rng_seed=5)
    picks = propose(ranking, set(), 30, rng_seed=0)
    keys = [canonical_key(a) for a in picks]
    assert len(keys) == 30 and len(set(keys)) == 30
    ranking_keys = [canonical_key(a) for a in ranking]
    assert keys[:15] == ranking_keys[:15]              # top half verbatim
    window = set(ranking_keys[15:60])                  # ranks 16..60
    assert all(k in window for k in keys[15:])


def test_propose_k1_returns_top(toy_space):
    ranking = subsample_universe(toy_space, 10, rng_seed=6)
    picks = propose(ranking, set(), 1, rng_seed=3)
    assert canonical_key(picks[0]) == canonical_key(ranking[0])


def test_propose_excludes_pool_fuzz(toy_space):
    ranking = subsample_universe(toy_space, 100, rng_seed=8)
    keys = [canonical_key(a) for a in ranking]
    rng = np.random.default_rng(0)
    for trial in range(1000):
        pool = set(rng.choice(keys, size=rng.integers(0, 40), replace=False))
        k = int(rng.integers(1, 12))
        picks = propose(ranking, pool, k, rng_seed=trial)
        pick_keys = [canonical_key(a) for a in picks]
        assert len(pick_keys) == k
        assert len(set(pick_keys)) == k
        assert not (set(pick_keys) & pool)


def test_propose_insufficient_candidates(toy_space):
    ranking = subsample_universe(toy_space, 5, rng_seed=9)
    pool = {canonical_key(a) for a in ranking[:3]}
    with pytest.raises(RankerError, match="universe"):
        propose(ranking, pool, 4, rng_seed=0)
