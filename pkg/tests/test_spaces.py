import numpy as np
import pytest

from rankhalving import (
    SearchSpaceSpec,
    SpaceError,
    canonical_key,
    enumerate_space,
    sample,
    space_size,
    subsample_universe,
)
from rankhalving.spaces import from_indices


def test_degenerate_single_architecture_space():
    space = SearchSpaceSpec(num_nodes=1, op_vocabulary=("only",))
    archs = sample(space, 3, rng_seed=0)
    assert len(archs) == 3
    keys = {canonical_key(a) for a in archs}
    assert len(keys) == 1


def test_sampling_deterministic_for_fixed_seed():
    space = SearchSpaceSpec(num_nodes=4, op_vocabulary=("o1", "o2", "o3", "o4", "o5"))
    a = sample(space, 20, rng_seed=7)
    b = sample(space, 20, rng_seed=7)
    assert [canonical_key(x) for x in a] == [canonical_key(y) for y in b]
    c = sample(space, 20, rng_seed=8)
    assert [canonical_key(x) for x in a] != [canonical_key(z) for z in c]


def test_sampling_uniform_over_op_combinations():
    # 2 free nodes x 5 ops = 25 encodings; frequencies within 25% of 1/25
    space = SearchSpaceSpec(num_nodes=2, op_vocabulary=tuple("abcde"))
    archs = sample(space, 10_000, rng_seed=3)
    counts = {}
    for a in archs:
        counts[a.op_indices] = counts.get(a.op_indices, 0) + 1
    assert len(counts) == 25
    expected = 10_000 / 25
    for combo, n in counts.items():
        assert abs(n - expected) / expected < 0.25, (combo, n)


def test_sampled_architectures_satisfy_invariants():
    spaces = [
        SearchSpaceSpec(num_nodes=5, op_vocabulary=tuple("abc"), structure="free_dag",
                        max_edges=4),
        SearchSpaceSpec(num_nodes=6, op_vocabulary=tuple("abcde"), structure="fixed_dag"),
        SearchSpaceSpec(num_nodes=7, op_vocabulary=tuple("abcd"), structure="free_dag",
                        max_edges=9, fixed_node_ops={0: 0, 6: 3}),
    ]
    per_space = 4000
    for si, space in enumerate(spaces):
        for arch in sample(space, per_space, rng_seed=100 + si):
            assert np.array_equal(arch.ops.sum(axis=1), np.ones(space.num_nodes))
            assert np.all(np.tril(arch.adjacency) == 0)
            if space.max_edges is not None:
                assert arch.num_edges <= space.max_edges
            for node, op in space.fixed_node_ops.items():
                assert arch.op_indices[node] == op


def test_canonical_key_equality_and_injectivity(tiny_space):
    a1 = from_indices(tiny_space, (0, 1, 2), [(0, 1), (1, 2)])
    a2 = from_indices(tiny_space, (0, 1, 2), [(0, 1), (1, 2)])
    a3 = from_indices(tiny_space, (0, 1, 1), [(0, 1), (1, 2)])
    a4 = from_indices(tiny_space, (0, 1, 2), [(0, 1)])
    assert canonical_key(a1) == canonical_key(a2)
    assert canonical_key(a1) != canonical_key(a3)
    assert canonical_key(a1) != canonical_key(a4)


def test_canonical_key_pure_function_of_encoding(tiny_space):
    arch = from_indices(tiny_space, (2, 0, 1), [(0, 2)])
    assert canonical_key(arch) == canonical_key(arch)
    rebuilt = from_indices(tiny_space, arch.op_indices, arch.edge_list)
    assert canonical_key(rebuilt) == canonical_key(arch)


def test_space_size_matches_enumeration():
    space = SearchSpaceSpec(num_nodes=3, op_vocabulary=("x", "y"), structure="free_dag",
                            max_edges=2)
    archs = enumerate_space(space)
    assert len(archs) == space_size(space)
    assert len({canonical_key(a) for a in archs}) == len(archs)


def test_subsample_exhausts_small_space():
    # 25 total encodings, ask for 100
    space = SearchSpaceSpec(num_nodes=2, op_vocabulary=tuple("abcde"))
    universe = subsample_universe(space, 100, rng_seed=0)
    assert len(universe) == 25
    assert len({canonical_key(a) for a in universe}) == 25


def test_subsample_single():
    space = SearchSpaceSpec(num_nodes=2, op_vocabulary=tuple("abcde"))
    assert len(subsample_universe(space, 1, rng_seed=5)) == 1


def test_subsample_large_universe_distinct():
    # large free-DAG space; ask for many more candidates than pool sizes need
    space = SearchSpaceSpec(num_nodes=7, op_vocabulary=tuple("abcde"),
                            structure="free_dag", max_edges=9)
    m = 30_000
    universe = subsample_universe(space, m, rng_seed=1)
    assert len(universe) == m
    assert len({canonical_key(a) for a in universe}) == m
    again = subsample_universe(space, m, rng_seed=1)
    assert [canonical_key(a) for a in again] == [canonical_key(a) for a in universe]


def test_subsample_600k_universe_scale():
    import os
    if not os.environ.get("RANKHALVING_SCALE_TESTS"):
        pytest.skip("set RANKHALVING_SCALE_TESTS=1 for the 600k-universe scale check")
    space = SearchSpaceSpec(num_nodes=8, op_vocabulary=tuple("abcdefgh"),
                            structure="free_dag", max_edges=12)
    universe = subsample_universe(space, 600_000, rng_seed=4)
    assert len(universe) == 600_000
    assert len({canonical_key(a) for a in universe}) == 600_000


def test_sample_rejects_bad_count(tiny_space):
    with pytest.raises(SpaceError):
        sample(tiny_space, 0, rng_seed=0)


def test_space_validation():
    with pytest.raises(SpaceError):
        SearchSpaceSpec(num_nodes=2, op_vocabulary=("a", "a"))
    with pytest.raises(SpaceError):
        SearchSpaceSpec(num_nodes=0, op_vocabulary=("a",))
    with pytest.raises(SpaceError):
        SearchSpaceSpec(num_nodes=2, op_vocabulary=("a",), structure="weird")
    with pytest.raises(SpaceError):
        SearchSpaceSpec(num_nodes=3, op_vocabulary=("a", "b"),
                        fixed_adjacency=((2, 1),))


def test_one_hot_enforced(tiny_space):
    bad_ops = np.zeros((3, 3), dtype=np.int8)
    bad_ops[0, 0] = 1
    bad_ops[1, 0] = 1
    bad_ops[1, 1] = 1
    bad_ops[2, 2] = 1
    from rankhalving import Architecture
    with pytest.raises(SpaceError):
        Architecture(bad_ops, np.zeros((3, 3), dtype=np.int8))
