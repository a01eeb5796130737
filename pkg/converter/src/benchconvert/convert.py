"""Dump readers and the conversion pipeline.

Two source forms are accepted per dataset family:

* NAS-Bench-201: the published torch archive (``.pth``, loaded with torch's
  pickle reader; structure ``{'meta_archs': [...], 'arch2infos': {...}}``
  with per-(dataset, seed) results), or a prepared line-delimited JSON dump::

      {"dataset": "nb201-cifar100", "max_epoch": 200}
      {"arch_str": "|...|", "val_acc": [...], "test_acc": 0.7,
       "priors": {"mag": 1.2}}

* NAS-Bench-101: a prepared line-delimited JSON dump (the original TFRecord
  archive needs the upstream protobuf schema and is out of scope)::

      {"dataset": "nb101", "epoch_grid": [4, 12, 36, 108]}
      {"module_adjacency": [[...]], "module_operations": [...],
       "val_acc": {"4": 0.6, "12": 0.7, "36": 0.85, "108": 0.9},
       "test_acc": 0.89, "priors": {}}

Accuracies in prepared dumps are fractions in [0, 1]; the torch archives
carry percentages and are divided by 100. NAS-Bench-201 validation curves
are averaged over the available seeds (recorded in the output header).
Prior scores are copied when the source provides them and omitted
otherwise; ``--priors`` supplies a sidecar JSON of per-architecture scores.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rankhalving import (
    BenchmarkTable,
    BenchRecord,
    canonical_key,
    load_benchmark,
    save_benchmark,
)

from .transform import (
    nb101_arch_from_matrices,
    nb101_space,
    nb201_arch_from_string,
    nb201_space,
)

__all__ = ["ConversionError", "ConversionReport", "DATASETS", "convert"]

DATASETS = (
    "nb201-cifar10-12ep",
    "nb201-cifar10-200ep",
    "nb201-cifar100",
    "nb201-imagenet16",
    "nb101",
)

_NB201_DATASET_KEYS = {
    "nb201-cifar10-12ep": ("cifar10-valid", "12"),
    "nb201-cifar10-200ep": ("cifar10-valid", "200"),
    "nb201-cifar100": ("cifar100", "200"),
    "nb201-imagenet16": ("ImageNet16-120", "200"),
}

NB101_EPOCH_GRID = (4, 12, 36, 108)


class ConversionError(RuntimeError):
    pass


@dataclass
class ConversionReport:
    records_written: int = 0
    records_skipped: dict[str, int] = field(default_factory=dict)
    checksum: str = ""

    def skip(self, reason: str) -> None:
        self.records_skipped[reason] = self.records_skipped.get(reason, 0) + 1

    @property
    def total_skipped(self) -> int:
        return sum(self.records_skipped.values())

    def to_json(self) -> str:
        return json.dumps({
            "records_written": self.records_written,
            "records_skipped": self.records_skipped,
            "checksum": self.checksum,
        }, indent=2)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _load_priors_sidecar(path) -> dict[str, dict[str, float]]:
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return {key: {m: float(v) for m, v in scores.items()} for key, scores in raw.items()}


# ---------------------------------------------------------------------------
# NAS-Bench-201 archive reader
# ---------------------------------------------------------------------------

def _pick_hp_info(infos: dict, hp: str):
    # v1.0 archives key the 12/200-epoch results as 'less'/'full'
    aliases = {"12": ("12", "less"), "200": ("200", "full")}
    for key in aliases[hp]:
        if key in infos:
            return infos[key]
    raise ConversionError(f"archive carries no {hp}-epoch results (keys: {list(infos)})")


def _result_curves(info: dict, dataset: str):
    """Seed-averaged validation curve (fractions) and final test accuracy."""
    all_results = info["all_results"]
    seed_results = [res for (ds, _seed), res in sorted(all_results.items(),
                                                       key=lambda kv: repr(kv[0]))
                    if ds == dataset]
    if not seed_results:
        raise ConversionError(f"no results for dataset {dataset!r}")
    curves = []
    tests = []
    for res in seed_results:
        epochs = int(res["epochs"])
        evals = res["eval_acc1es"]
        val_key = "x-valid" if any(k.startswith("x-valid@") for k in evals) else "ori-test"
        curve = [float(evals[f"{val_key}@{e}"]) / 100.0 for e in range(epochs)]
        curves.append(curve)
        last = epochs - 1
        for test_key in ("x-test", "ori-test", val_key):
            if f"{test_key}@{last}" in evals:
                tests.append(float(evals[f"{test_key}@{last}"]) / 100.0)
                break
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise ConversionError(f"inconsistent curve lengths across seeds: {lengths}")
    return np.mean(np.asarray(curves), axis=0), float(np.mean(tests)), len(seed_results)


def _read_nb201_archive(source, dataset_tag, priors, report):
    try:
        import torch
    except ImportError as exc:
        raise ConversionError(
            "reading .pth archives requires torch (install benchconvert[nb201])"
        ) from exc
    blob = torch.load(source, map_location="cpu", weights_only=False)
    if "arch2infos" not in blob or "meta_archs" not in blob:
        raise ConversionError(f"{source}: not a NAS-Bench-201 archive")
    dataset, hp = _NB201_DATASET_KEYS[dataset_tag]
    seed_counts = set()
    records = {}
    for idx in sorted(blob["arch2infos"]):
        infos = blob["arch2infos"][idx]
        try:
            info = _pick_hp_info(infos, hp)
            arch = nb201_arch_from_string(info["arch_str"])
            curve, test_acc, n_seeds = _result_curves(info, dataset)
        except (ConversionError, KeyError, ValueError) as exc:
            report.skip(f"bad-record: {type(exc).__name__}")
            continue
        key = canonical_key(arch)
        if key in records:
            report.skip("duplicate-key")
            continue
        seed_counts.add(n_seeds)
        records[key] = BenchRecord(
            arch=arch,
            val_acc=np.clip(curve, 0.0, 1.0),
            test_acc=float(np.clip(test_acc, 0.0, 1.0)),
            prior_scores=priors.get(key, {}),
        )
    max_epoch = 12 if hp == "12" else 200
    notes = {"source": "nb201-archive", "dataset": dataset, "hp": hp,
             "seed_average": sorted(seed_counts)}
    return records, max_epoch, None, notes


# ---------------------------------------------------------------------------
# prepared line-delimited dumps
# ---------------------------------------------------------------------------

def _read_prepared_dump(source, dataset_tag, priors, report):
    with open(source, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("dataset") != dataset_tag:
            raise ConversionError(
                f"{source}: dump is for {header.get('dataset')!r}, not {dataset_tag!r}"
            )
        records = {}
        if dataset_tag == "nb101":
            grid = tuple(int(e) for e in header.get("epoch_grid", NB101_EPOCH_GRID))
            max_epoch = grid[-1]
        else:
            max_epoch = int(header["max_epoch"])
            grid = None
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                if dataset_tag == "nb101":
                    arch = nb101_arch_from_matrices(row["module_adjacency"],
                                                    row["module_operations"])
                    curve = np.array([float(row["val_acc"][str(e)]) for e in grid])
                else:
                    arch = nb201_arch_from_string(row["arch_str"])
                    curve = np.asarray(row["val_acc"], dtype=np.float64)
                    if len(curve) != max_epoch:
                        raise ValueError(f"curve length {len(curve)} != {max_epoch}")
                test_acc = float(row["test_acc"])
            except (KeyError, TypeError, ValueError) as exc:
                report.skip(f"bad-record: line {lineno}")
                continue
            key = canonical_key(arch)
            if key in records:
                report.skip("duplicate-key")
                continue
            scores = {m: float(v) for m, v in row.get("priors", {}).items()}
            scores.update(priors.get(key, {}))
            records[key] = BenchRecord(arch=arch, val_acc=curve, test_acc=test_acc,
                                       prior_scores=scores)
    notes = {"source": "prepared-dump", "dataset": dataset_tag}
    return records, max_epoch, grid, notes


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def convert(source, dataset: str, out, priors_path=None) -> ConversionReport:
    """Convert a benchmark dump; the output always validates under
    load_benchmark before the report is returned."""
    if dataset not in DATASETS:
        raise ConversionError(f"unknown dataset tag {dataset!r} (known: {DATASETS})")
    source = Path(source)
    if not source.exists():
        raise ConversionError(f"source dump not readable: {source}")
    priors = _load_priors_sidecar(priors_path)
    report = ConversionReport()

    if dataset == "nb101":
        records, max_epoch, grid, notes = _read_prepared_dump(source, dataset,
                                                              priors, report)
        space = nb101_space()
    else:
        if source.suffix in (".pth", ".pt", ".pickle", ".pkl"):
            records, max_epoch, grid, notes = _read_nb201_archive(source, dataset,
                                                                  priors, report)
        else:
            records, max_epoch, grid, notes = _read_prepared_dump(source, dataset,
                                                                  priors, report)
        space = nb201_space()

    if not records:
        raise ConversionError(f"{source}: no convertible records")
    metrics = sorted({m for rec in records.values() for m in rec.prior_scores})
    table = BenchmarkTable(
        space=space,
        max_epoch=max_epoch,
        records=records,
        epoch_grid=grid,
        prior_metrics=tuple(metrics),
        notes=notes,
    )
    save_benchmark(table, out)
    load_benchmark(out)  # output must validate
    report.records_written = len(records)
    report.checksum = _sha256(out)
    return report
