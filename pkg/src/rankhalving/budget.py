"""Search-budget accounting.

The cost of a search is the total number of training epochs charged across
all architectures ever trained. The ledger is append-only and is the single
source of every reported budget figure; it also enforces the resume
contract: an architecture is charged exactly once per epoch, with charge
intervals contiguous from zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

__all__ = ["LedgerError", "Charge", "BudgetLedger"]


class LedgerError(RuntimeError):
    """Charge contract violation (overlapping or non-contiguous interval)."""


@dataclass(frozen=True)
class Charge:
    key: str
    from_epoch: int
    to_epoch: int


@dataclass
class BudgetLedger:
    """Append-only record of per-architecture epoch charges."""

    charges: list[Charge] = field(default_factory=list)
    _frontier: dict[str, int] = field(default_factory=dict)
    total_epochs: int = 0

    def frontier(self, key: str) -> int:
        """Epochs already charged to `key` (0 if never trained)."""
        return self._frontier.get(key, 0)

    def charge(self, key: str, from_epoch: int, to_epoch: int) -> None:
        if to_epoch <= from_epoch:
            raise LedgerError(f"empty or inverted charge [{from_epoch}, {to_epoch}) for {key}")
        if from_epoch < 0:
            raise LedgerError(f"negative from_epoch {from_epoch} for {key}")
        prev = self.frontier(key)
        if from_epoch != prev:
            raise LedgerError(
                f"non-contiguous charge for {key}: interval starts at {from_epoch}, "
                f"frontier is {prev}"
            )
        self.charges.append(Charge(key, int(from_epoch), int(to_epoch)))
        self._frontier[key] = int(to_epoch)
        self.total_epochs += int(to_epoch) - int(from_epoch)

    def recompute_total(self) -> int:
        """Total re-derived from the raw charge list (consistency check)."""
        return sum(c.to_epoch - c.from_epoch for c in self.charges)

    def charged_keys(self) -> list[str]:
        return sorted(self._frontier)

    def save(self, path) -> None:
        """Checkpoint as line-delimited JSON, one charge per line."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"format": "ledger-v1", "total_epochs": self.total_epochs}) + "\n")
            for c in self.charges:
                fh.write(json.dumps([c.key, c.from_epoch, c.to_epoch]) + "\n")

    @classmethod
    def load(cls, path) -> "BudgetLedger":
        ledger = cls()
        with open(path, "r", encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("format") != "ledger-v1":
                raise LedgerError(f"{path}: not a ledger checkpoint")
            for line in fh:
                if line.strip():
                    key, lo, hi = json.loads(line)
                    ledger.charge(key, int(lo), int(hi))
        if ledger.total_epochs != header["total_epochs"]:
            raise LedgerError(f"{path}: checkpoint total mismatch")
        return ledger
