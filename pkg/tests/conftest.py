import numpy as np
import pytest

from rankhalving import (
    BenchmarkTable,
    BenchRecord,
    SearchSpaceSpec,
    canonical_key,
    default_synthetic_space,
    generate_synthetic,
)


@pytest.fixture(scope="session")
def space201like():
    """Fixed-DAG 6-node 5-op space (15625 encodings)."""
    return default_synthetic_space()


@pytest.fixture(scope="session")
def tiny_space():
    return SearchSpaceSpec(num_nodes=3, op_vocabulary=("a", "b", "c"), structure="free_dag")


@pytest.fixture(scope="session")
def synth_table(space201like):
    """Mid-size calibrated table used across modules (1500 archs, 12 epochs)."""
    return generate_synthetic(space201like, 1500, rank_stability=0.7, noise=0.01,
                              max_epoch=12, rng_seed=7)


@pytest.fixture(scope="session")
def noisefree_table(space201like):
    return generate_synthetic(space201like, 300, rank_stability=1.0, noise=0.0,
                              max_epoch=12, rng_seed=11)


def make_table(space, curves_by_arch, max_epoch, priors=None, epoch_grid=None):
    """Hand-built benchmark from {Architecture: curve} for fixture crafting."""
    records = {}
    for arch, curve in curves_by_arch.items():
        key = canonical_key(arch)
        records[key] = BenchRecord(
            arch=arch,
            val_acc=np.asarray(curve, dtype=np.float64),
            test_acc=float(curve[-1]),
            prior_scores=dict(priors.get(key, {})) if priors else {},
        )
    metrics = sorted({m for rec in records.values() for m in rec.prior_scores})
    return BenchmarkTable(space=space, max_epoch=max_epoch, records=records,
                          epoch_grid=epoch_grid, prior_metrics=tuple(metrics))
