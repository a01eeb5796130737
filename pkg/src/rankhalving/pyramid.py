"""Non-uniform successive-halving scheduler over a growing candidate pool.

The pool is a pyramid of N+1 levels. Level 0 holds untrained candidates
ranked by a train-free prior score; every level l >= 1 holds candidates
trained for exactly ``schedule.epochs[l-1]`` epochs, ranked by their current
validation accuracy. A pass inserts k fresh candidates at level 0 and then,
level by level, promotes the best fraction of *all* residents (newcomers
compete with previously terminated candidates, which is what lets a
terminated candidate resume training later, paying only the epoch delta).
Nothing is ever discarded: losers stay at their level and keep contributing
pairwise training signal.

Promotion counts use round-half-up of ratio*k with a signed fractional
carry per level that persists across passes. The carry makes per-pass
integer promotions telescope to the exact aggregate fractions, so budget
totals are reproducible in closed form; with integral ratio*k (e.g. pool
sizes that are powers of two under ratio 1/2) it never activates and the
pass reduces to classic successive halving.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .bench import BenchmarkTable
from .budget import BudgetLedger
from .spaces import Architecture, canonical_key, from_indices

__all__ = [
    "PyramidError",
    "Schedule",
    "PoolEntry",
    "Pyramid",
    "promote_count",
    "pyramid_pass",
    "pairwise_context",
    "ContextItem",
    "save_pyramid",
    "load_pyramid",
]


class PyramidError(RuntimeError):
    """Scheduler contract violation."""


@dataclass(frozen=True)
class Schedule:
    """Per-level training epochs and per-level move ratios.

    ``epochs[l-1]`` is the epoch count of level l (strictly increasing; the
    last entry is the benchmark's fully-trained epoch). ``move_ratios[l]``
    is the fraction promoted from level l to l+1; index 0 applies to the
    prior-scored level.
    """

    epochs: tuple[int, ...]
    move_ratios: tuple[float, ...]

    def __post_init__(self):
        epochs = tuple(int(e) for e in self.epochs)
        ratios = tuple(float(r) for r in self.move_ratios)
        if not epochs:
            raise PyramidError("schedule needs at least one level")
        if any(e <= 0 for e in epochs) or list(epochs) != sorted(set(epochs)):
            raise PyramidError(f"epochs must be strictly increasing positives: {epochs}")
        if len(ratios) != len(epochs):
            raise PyramidError(
                f"need one move ratio per level transition: {len(ratios)} ratios "
                f"for {len(epochs)} trained levels"
            )
        if any(not 0.0 < r < 1.0 for r in ratios):
            raise PyramidError(f"move ratios must lie in (0, 1): {ratios}")
        object.__setattr__(self, "epochs", epochs)
        object.__setattr__(self, "move_ratios", ratios)

    @property
    def num_levels(self) -> int:
        """N: number of trained levels (the pyramid also has level 0)."""
        return len(self.epochs)

    def level_epoch(self, level: int) -> int:
        """Trained epochs of a resident at `level` (0 for level 0)."""
        return 0 if level == 0 else self.epochs[level - 1]

    def validate_against(self, table: BenchmarkTable) -> None:
        if self.epochs[-1] != table.max_epoch:
            raise PyramidError(
                f"schedule must end at the benchmark's max epoch "
                f"({self.epochs[-1]} != {table.max_epoch})"
            )
        missing = [e for e in self.epochs if e not in table.epoch_grid]
        if missing:
            raise PyramidError(f"schedule epochs {missing} not listed in the benchmark grid")


@dataclass
class PoolEntry:
    """One candidate's scheduling state."""

    arch: Architecture
    key: str
    prior_score: float
    arrival_round: int
    level: int = 0
    trained_epochs: int = 0
    current_val_acc: float | None = None


class ContextItem(NamedTuple):
    """Immutable snapshot row: the score the scheduler used at the entry's level."""

    key: str
    arch: Architecture
    level: int
    trained_epochs: int
    score: float


@dataclass
class Pyramid:
    """Leveled candidate pool plus its schedule and promotion carries."""

    schedule: Schedule
    levels: list[dict[str, PoolEntry]] = field(default_factory=list)
    carries: list[float] = field(default_factory=list)
    rounds_run: int = 0

    def __post_init__(self):
        n = self.schedule.num_levels
        if not self.levels:
            self.levels = [dict() for _ in range(n + 1)]
        if not self.carries:
            self.carries = [0.0] * n
        if len(self.levels) != n + 1 or len(self.carries) != n:
            raise PyramidError("levels/carries inconsistent with schedule")

    def __len__(self) -> int:
        return sum(len(lvl) for lvl in self.levels)

    def __contains__(self, key: str) -> bool:
        return any(key in lvl for lvl in self.levels)

    def entries(self):
        for lvl in self.levels:
            yield from lvl.values()

    def trained_entries(self) -> list[PoolEntry]:
        out = []
        for lvl in self.levels[1:]:
            out.extend(lvl.values())
        return out

    def keys(self) -> set[str]:
        out = set()
        for lvl in self.levels:
            out.update(lvl.keys())
        return out

    def insert_level0(self, archs_with_scores, arrival_round: int) -> list[PoolEntry]:
        """Add (architecture, prior_score) pairs as untrained level-0 entries."""
        added = []
        for arch, score in archs_with_scores:
            key = canonical_key(arch)
            if key in self:
                raise PyramidError(f"architecture {key} already in pool")
            entry = PoolEntry(arch=arch, key=key, prior_score=float(score),
                              arrival_round=arrival_round)
            self.levels[0][key] = entry
            added.append(entry)
        return added


def promote_count(k: int, ratio: float, population: int | None = None,
                  carry: float = 0.0) -> int:
    """Number of entries promoted out of a level for a cascade count k.

    round-half-up of (ratio*k + carry), floored at 1 while candidates exist
    (k >= 1 and population >= 1), capped at the population. k = 0 promotes
    nothing regardless of carry.
    """
    if k < 0:
        raise PyramidError(f"cascade count must be nonnegative, got {k}")
    if k == 0:
        return 0
    desired = ratio * k + carry
    m = int(math.floor(desired + 0.5))
    if population is None:
        return max(m, 1)
    if population >= 1:
        m = max(m, 1)
    return max(0, min(m, population))


def _level_sort_key(level: int):
    if level == 0:
        return lambda e: (-e.prior_score, e.key)
    return lambda e: (-e.current_val_acc, e.key)


def pyramid_pass(pyramid: Pyramid, ledger: BudgetLedger, oracle: BenchmarkTable,
              k: int) -> None:
    """One scheduling pass after k fresh insertions at level 0.

    For each level bottom-up, all residents are sorted by the level's score
    (prior at 0, validation accuracy above) with ties broken by key, the top
    promote-count entries are trained to the next level's epoch (the ledger
    is charged for the delta only), and the cascade count shrinks by the
    level's move ratio. Mutates the pyramid and ledger in place.
    """
    sched = pyramid.schedule
    if k < 0 or k > len(pyramid.levels[0]):
        raise PyramidError(
            f"pass count k={k} exceeds level-0 population {len(pyramid.levels[0])}"
        )
    for level in range(sched.num_levels):
        residents = sorted(pyramid.levels[level].values(), key=_level_sort_key(level))
        desired = sched.move_ratios[level] * k + pyramid.carries[level]
        m = promote_count(k, sched.move_ratios[level], len(residents),
                          pyramid.carries[level])
        if k > 0:
            pyramid.carries[level] = desired - m
        from_epoch = sched.level_epoch(level)
        to_epoch = sched.level_epoch(level + 1)
        for entry in residents[:m]:
            ledger.charge(entry.key, from_epoch, to_epoch)
            del pyramid.levels[level][entry.key]
            entry.level = level + 1
            entry.trained_epochs = to_epoch
            entry.current_val_acc = oracle.val_acc(entry.arch, to_epoch)
            pyramid.levels[level + 1][entry.key] = entry
        k = m
    pyramid.rounds_run += 1


def pairwise_context(pyramid: Pyramid) -> list[ContextItem]:
    """Deterministic snapshot of every entry with its level's ranking score.

    Ordered by level ascending, then key; safe to hand to other threads.
    """
    items = []
    for level, entries in enumerate(pyramid.levels):
        score_of = (lambda e: e.prior_score) if level == 0 else (lambda e: e.current_val_acc)
        for key in sorted(entries):
            e = entries[key]
            items.append(ContextItem(key=key, arch=e.arch, level=level,
                                     trained_epochs=e.trained_epochs,
                                     score=float(score_of(e))))
    return items


def save_pyramid(pyramid: Pyramid, path) -> None:
    """Checkpoint the pyramid as line-delimited JSON (header + one entry/line)."""
    header = {
        "format": "pyramid-v1",
        "epochs": list(pyramid.schedule.epochs),
        "move_ratios": list(pyramid.schedule.move_ratios),
        "carries": list(pyramid.carries),
        "rounds_run": pyramid.rounds_run,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for level, entries in enumerate(pyramid.levels):
            for key in sorted(entries):
                e = entries[key]
                fh.write(json.dumps({
                    "ops": list(e.arch.op_indices),
                    "edges": [list(ed) for ed in e.arch.edge_list],
                    "level": level,
                    "trained_epochs": e.trained_epochs,
                    "current_val_acc": e.current_val_acc,
                    "prior_score": e.prior_score,
                    "arrival_round": e.arrival_round,
                }) + "\n")


def load_pyramid(path, space) -> Pyramid:
    """Restore a pyramid checkpoint written by save_pyramid."""
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != "pyramid-v1":
            raise PyramidError(f"{path}: not a pyramid checkpoint")
        sched = Schedule(tuple(header["epochs"]), tuple(header["move_ratios"]))
        pyr = Pyramid(schedule=sched)
        pyr.carries = [float(c) for c in header["carries"]]
        pyr.rounds_run = int(header["rounds_run"])
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            arch = from_indices(space, row["ops"], [tuple(e) for e in row["edges"]])
            key = canonical_key(arch)
            entry = PoolEntry(
                arch=arch, key=key,
                prior_score=float(row["prior_score"]),
                arrival_round=int(row["arrival_round"]),
                level=int(row["level"]),
                trained_epochs=int(row["trained_epochs"]),
                current_val_acc=(None if row["current_val_acc"] is None
                                 else float(row["current_val_acc"])),
            )
            pyr.levels[entry.level][key] = entry
    return pyr
