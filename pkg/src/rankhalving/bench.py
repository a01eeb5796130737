"""Read-only tabular benchmark backend: the training oracle.

A benchmark table maps every architecture in a finite space to its
per-epoch validation accuracy curve, final test accuracy, and optional
train-free prior scores. Looking an architecture up at epoch e stands in
for actually training it for e epochs.

File format (``bench-v1``): UTF-8 line-delimited JSON. The first line is a
header object; every following line is one architecture record::

    {"format": "bench-v1", "space": {...}, "max_epoch": 12,
     "epoch_grid": [1, ..., 12], "prior_metrics": ["mag_synth"], "notes": {}}
    {"ops": [0,3,1,2,4,0], "edges": [[0,1],[1,2]], "val_acc": [...],
     "test_acc": 0.91, "priors": {"mag_synth": 0.83}}

``epoch_grid`` lists the epochs at which accuracies are available, in
increasing order ending at ``max_epoch``; omit it for dense 1..max_epoch
curves. ``val_acc`` is aligned to the grid. Accuracies are serialized as
shortest round-trip decimals (Python ``repr``), so save/load is bit-exact.
"""

from __future__ import annotations

import json
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .spaces import Architecture, SearchSpaceSpec, canonical_key, from_indices

__all__ = [
    "BenchFormatError",
    "UnknownArchitectureError",
    "EpochError",
    "BenchRecord",
    "BenchmarkTable",
    "load_benchmark",
    "save_benchmark",
    "PriorScorer",
]

FORMAT_TAG = "bench-v1"

# Pluggable train-free scorer seam: Architecture -> real score.
PriorScorer = Callable[[Architecture], float]


class BenchFormatError(ValueError):
    """Malformed or inconsistent benchmark file."""


class UnknownArchitectureError(LookupError):
    """Architecture not present in the benchmark table."""


class EpochError(ValueError):
    """Requested epoch not covered by the benchmark's curves."""


@dataclass(frozen=True)
class BenchRecord:
    """One architecture's results: accuracy curve, test accuracy, prior scores.

    ``val_acc`` is aligned to the owning table's epoch grid.
    """

    arch: Architecture
    val_acc: np.ndarray
    test_acc: float
    prior_scores: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        curve = np.ascontiguousarray(np.asarray(self.val_acc, dtype=np.float64))
        curve.setflags(write=False)
        object.__setattr__(self, "val_acc", curve)


class BenchmarkTable:
    """Immutable oracle: (architecture, epoch) -> validation accuracy.

    Records are keyed by canonical architecture key; lookup is O(1).
    """

    def __init__(
        self,
        space: SearchSpaceSpec,
        max_epoch: int,
        records: dict[str, BenchRecord],
        epoch_grid: tuple[int, ...] | None = None,
        prior_metrics: tuple[str, ...] = (),
        notes: dict | None = None,
    ):
        if max_epoch < 1:
            raise BenchFormatError(f"max_epoch must be >= 1, got {max_epoch}")
        if epoch_grid is None:
            epoch_grid = tuple(range(1, max_epoch + 1))
        epoch_grid = tuple(int(e) for e in epoch_grid)
        if list(epoch_grid) != sorted(set(epoch_grid)):
            raise BenchFormatError(f"epoch_grid must be strictly increasing: {epoch_grid}")
        if not epoch_grid or epoch_grid[0] < 1 or epoch_grid[-1] != max_epoch:
            raise BenchFormatError(
                f"epoch_grid must span 1..max_epoch and end at max_epoch={max_epoch}: {epoch_grid}"
            )
        for key, rec in records.items():
            if len(rec.val_acc) != len(epoch_grid):
                raise BenchFormatError(
                    f"record {key}: curve length {len(rec.val_acc)} != grid length {len(epoch_grid)}"
                )
            if np.any(rec.val_acc < 0.0) or np.any(rec.val_acc > 1.0):
                raise BenchFormatError(f"record {key}: accuracy outside [0, 1]")
            if not 0.0 <= rec.test_acc <= 1.0:
                raise BenchFormatError(f"record {key}: test_acc {rec.test_acc} outside [0, 1]")
        self.space = space
        self.max_epoch = int(max_epoch)
        self.epoch_grid = epoch_grid
        self.records = dict(records)
        self.prior_metrics = tuple(prior_metrics)
        self.notes = dict(notes or {})
        self._epoch_index = {e: i for i, e in enumerate(epoch_grid)}

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, key: str) -> bool:
        return key in self.records

    @property
    def is_dense(self) -> bool:
        return self.epoch_grid == tuple(range(1, self.max_epoch + 1))

    def sorted_keys(self) -> list[str]:
        """Record keys in a platform-stable (sorted) order."""
        return sorted(self.records)

    def record(self, arch: Architecture | str) -> BenchRecord:
        key = arch if isinstance(arch, str) else canonical_key(arch)
        try:
            return self.records[key]
        except KeyError:
            raise UnknownArchitectureError(f"architecture {key} not in benchmark") from None

    def val_acc(self, arch: Architecture | str, epoch: int) -> float:
        """Validation accuracy after training for `epoch` epochs (1-based)."""
        rec = self.record(arch)
        idx = self._epoch_index.get(int(epoch))
        if idx is None:
            raise EpochError(
                f"epoch {epoch} not in benchmark grid (listed: {self.epoch_grid[:8]}"
                f"{'...' if len(self.epoch_grid) > 8 else ''})"
            )
        return float(rec.val_acc[idx])

    def final_val_acc(self, arch: Architecture | str) -> float:
        return self.val_acc(arch, self.max_epoch)

    def test_acc(self, arch: Architecture | str) -> float:
        return float(self.record(arch).test_acc)

    def prior_score(self, arch: Architecture | str, metric: str,
                    scorer: PriorScorer | None = None) -> float:
        """Train-free prior score; falls back to `scorer` when the metric is absent."""
        rec = self.record(arch)
        if metric in rec.prior_scores:
            return float(rec.prior_scores[metric])
        if scorer is not None:
            return float(scorer(rec.arch))
        raise KeyError(
            f"prior metric {metric!r} missing for {canonical_key(rec.arch)} and no scorer plugged"
        )


def _space_to_json(space: SearchSpaceSpec) -> dict:
    return {
        "num_nodes": space.num_nodes,
        "ops": list(space.op_vocabulary),
        "structure": space.structure,
        "max_edges": space.max_edges,
        "fixed_adjacency": [list(e) for e in space.fixed_adjacency] if space.fixed_adjacency else None,
        "fixed_node_ops": {str(k): v for k, v in space.fixed_node_ops.items()} or None,
    }


def _space_from_json(obj: dict) -> SearchSpaceSpec:
    return SearchSpaceSpec(
        num_nodes=int(obj["num_nodes"]),
        op_vocabulary=tuple(obj["ops"]),
        structure=obj["structure"],
        max_edges=obj.get("max_edges"),
        fixed_adjacency=tuple((int(s), int(d)) for s, d in obj["fixed_adjacency"])
        if obj.get("fixed_adjacency") else None,
        fixed_node_ops={int(k): int(v) for k, v in (obj.get("fixed_node_ops") or {}).items()},
    )


def save_benchmark(table: BenchmarkTable, path) -> None:
    """Write the table in the bench-v1 line-delimited format."""
    header = {
        "format": FORMAT_TAG,
        "space": _space_to_json(table.space),
        "max_epoch": table.max_epoch,
        "epoch_grid": list(table.epoch_grid),
        "prior_metrics": list(table.prior_metrics),
        "notes": table.notes,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for key in table.sorted_keys():
            rec = table.records[key]
            row = {
                "ops": list(rec.arch.op_indices),
                "edges": [list(e) for e in rec.arch.edge_list],
                "val_acc": [float(a) for a in rec.val_acc],
                "test_acc": float(rec.test_acc),
                "priors": {k: float(v) for k, v in rec.prior_scores.items()},
            }
            fh.write(json.dumps(row) + "\n")


def load_benchmark(path) -> BenchmarkTable:
    """Load and fully validate a bench-v1 file.

    Raises BenchFormatError naming the offending line/record on any
    malformed record, curve-length mismatch, out-of-range accuracy, or
    duplicate key.
    """
    with open(path, "r", encoding="utf-8") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise BenchFormatError(f"{path}: empty file")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise BenchFormatError(f"{path}: malformed header: {exc}") from exc
        if header.get("format") != FORMAT_TAG:
            raise BenchFormatError(f"{path}: unknown format tag {header.get('format')!r}")
        try:
            space = _space_from_json(header["space"])
            max_epoch = int(header["max_epoch"])
            grid = tuple(int(e) for e in header.get("epoch_grid") or range(1, max_epoch + 1))
            prior_metrics = tuple(header.get("prior_metrics", ()))
        except (KeyError, TypeError, ValueError) as exc:
            raise BenchFormatError(f"{path}: bad header field: {exc}") from exc

        records: dict[str, BenchRecord] = {}
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                arch = from_indices(space, row["ops"], [tuple(e) for e in row["edges"]])
                curve = np.asarray(row["val_acc"], dtype=np.float64)
                rec = BenchRecord(
                    arch=arch,
                    val_acc=curve,
                    test_acc=float(row["test_acc"]),
                    prior_scores={k: float(v) for k, v in row.get("priors", {}).items()},
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise BenchFormatError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if len(curve) != len(grid):
                raise BenchFormatError(
                    f"{path}:{lineno}: curve length {len(curve)} != epoch grid length {len(grid)}"
                )
            if np.any(curve < 0.0) or np.any(curve > 1.0):
                raise BenchFormatError(f"{path}:{lineno}: accuracy outside [0, 1]")
            key = canonical_key(arch)
            if key in records:
                raise BenchFormatError(f"{path}:{lineno}: duplicate architecture {key}")
            records[key] = rec

    return BenchmarkTable(
        space=space,
        max_epoch=max_epoch,
        records=records,
        epoch_grid=grid,
        prior_metrics=prior_metrics,
        notes=header.get("notes") or {},
    )
