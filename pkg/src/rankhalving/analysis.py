"""Diagnostics over benchmark tables: rank correlations and early-vs-final
ranking stability.

These statistics quantify how trustworthy truncated training is as a proxy
for the final ranking, which is what justifies terminating weak candidates
early.
"""

from __future__ import annotations

import numpy as np

from .bench import BenchmarkTable, EpochError

__all__ = [
    "ConstantInputError",
    "average_ranks",
    "spearman",
    "survival_fraction",
    "spearman_trajectory",
    "prior_correlation",
]


class ConstantInputError(ValueError):
    """Rank correlation is undefined for a constant vector."""


def average_ranks(x) -> np.ndarray:
    """Ranks 1..n with ties assigned the average of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.float64)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError(f"need two equal-length vectors of size >= 2, got {x.shape} / {y.shape}")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise ConstantInputError("correlation undefined for a constant input vector")
    rx = average_ranks(x)
    ry = average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def _curve_matrix(table: BenchmarkTable) -> tuple[list[str], np.ndarray]:
    keys = table.sorted_keys()
    curves = np.stack([table.records[k].val_acc for k in keys])
    return keys, curves


def _bottom_set(keys, accs, quantile: float) -> set[str]:
    # Bottom floor(q*n) entries by accuracy, ties broken by key for determinism.
    n_bottom = int(np.floor(quantile * len(keys)))
    order = sorted(range(len(keys)), key=lambda i: (accs[i], keys[i]))
    return {keys[i] for i in order[:n_bottom]}


def survival_fraction(table: BenchmarkTable, epoch: int, quantile: float = 0.5) -> float:
    """Fraction of the bottom-quantile at `epoch` still bottom-quantile when
    fully trained."""
    if not 0.0 < quantile <= 1.0:
        raise ValueError(f"quantile must be in (0, 1], got {quantile}")
    if epoch not in table.epoch_grid:
        raise EpochError(f"epoch {epoch} not listed in benchmark grid")
    keys, curves = _curve_matrix(table)
    e_idx = table.epoch_grid.index(epoch)
    early = _bottom_set(keys, curves[:, e_idx], quantile)
    final = _bottom_set(keys, curves[:, -1], quantile)
    if not early:
        raise ValueError("quantile too small: empty bottom set")
    return len(early & final) / len(early)


def spearman_trajectory(table: BenchmarkTable) -> list[tuple[int, float]]:
    """Per-epoch Spearman correlation between epoch-e and final accuracies.

    Sparse benchmarks yield one entry per listed epoch.
    """
    keys, curves = _curve_matrix(table)
    final = curves[:, -1]
    out = []
    for i, e in enumerate(table.epoch_grid):
        out.append((e, spearman(curves[:, i], final)))
    return out


def prior_correlation(table: BenchmarkTable, metric: str,
                      top_quantile: float = 0.01) -> tuple[float, float]:
    """(whole-space, top-subset) Spearman between a prior metric and final
    validation accuracy.

    The top subset is the top `top_quantile` fraction of architectures by
    true final accuracy; train-free scores typically rank the whole space
    well but lose resolution there.
    """
    keys, curves = _curve_matrix(table)
    final = curves[:, -1]
    priors = np.array([table.records[k].prior_scores[metric] for k in keys])
    whole = spearman(priors, final)
    n_top = max(2, int(np.ceil(top_quantile * len(keys))))
    top_idx = np.argsort(-final, kind="stable")[:n_top]
    top = spearman(priors[top_idx], final[top_idx])
    return whole, top
