import json

import numpy as np
import pytest

from benchconvert import (
    ConversionError,
    convert,
    nb101_arch_from_matrices,
    nb201_arch_from_string,
    nb201_space,
)
from benchconvert.cli import main
from benchconvert.convert import NB101_EPOCH_GRID
from rankhalving import canonical_key, load_benchmark

ALL_NB201_OPS = ("none", "skip_connect", "nor_conv_1x1", "nor_conv_3x3", "avg_pool_3x3")


def arch_str_from_ops(ops6):
    o = list(ops6)
    return (f"|{o[0]}~0|+|{o[1]}~0|{o[2]}~1|+|{o[3]}~0|{o[4]}~1|{o[5]}~2|")


def all_arch_strings(n):
    """First n of the 5^6 arch strings in lexicographic op-index order."""
    out = []
    for i in range(n):
        digits = []
        x = i
        for _ in range(6):
            digits.append(x % 5)
            x //= 5
        out.append(arch_str_from_ops([ALL_NB201_OPS[d] for d in digits]))
    return out


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def test_nb201_transform_is_fixed_dag():
    space = nb201_space()
    s = arch_str_from_ops(["none", "skip_connect", "nor_conv_1x1",
                           "nor_conv_3x3", "avg_pool_3x3", "none"])
    arch = nb201_arch_from_string(s)
    assert arch.num_nodes == 8
    assert np.array_equal(arch.adjacency, space.fixed_dag_adjacency())
    assert arch.op_indices[0] == space.fixed_node_ops[0]
    assert arch.op_indices[7] == space.fixed_node_ops[7]
    # edge slots carry the parsed ops in documented order
    names = [space.op_vocabulary[i] for i in arch.op_indices[1:7]]
    assert names == ["none", "skip_connect", "nor_conv_1x1",
                     "nor_conv_3x3", "avg_pool_3x3", "none"]


def test_nb201_transform_distinct_keys():
    keys = {canonical_key(nb201_arch_from_string(s)) for s in all_arch_strings(200)}
    assert len(keys) == 200


def test_nb201_rejects_malformed_strings():
    with pytest.raises(ValueError):
        nb201_arch_from_string("|none~0|+|none~0|")
    with pytest.raises(ValueError):
        nb201_arch_from_string(arch_str_from_ops(["mystery"] + ["none"] * 5))


def test_nb101_padding_preserves_structure():
    adj = [[0, 1, 1], [0, 0, 1], [0, 0, 0]]
    ops = ["input", "conv3x3-bn-relu", "output"]
    arch = nb101_arch_from_matrices(adj, ops)
    assert arch.num_nodes == 7
    assert arch.edge_list == ((0, 1), (0, 2), (1, 2))
    assert arch.op_indices[3:] == (5, 5, 5, 5)  # none_pad tail


def test_nb101_rejects_overbudget_edges():
    adj = np.triu(np.ones((5, 5), dtype=int), k=1)  # 10 edges > 9
    with pytest.raises(ValueError):
        nb101_arch_from_matrices(adj, ["input", "conv1x1-bn-relu",
                                       "conv3x3-bn-relu", "maxpool3x3", "output"])


# ---------------------------------------------------------------------------
# prepared-dump conversion
# ---------------------------------------------------------------------------

def write_nb201_dump(path, n, max_epoch, broken_rows=0):
    rng = np.random.default_rng(0)
    with open(path, "w") as fh:
        fh.write(json.dumps({"dataset": "nb201-cifar100", "max_epoch": max_epoch}) + "\n")
        for s in all_arch_strings(n):
            curve = np.sort(rng.uniform(0.2, 0.9, size=max_epoch)).tolist()
            fh.write(json.dumps({
                "arch_str": s,
                "val_acc": curve,
                "test_acc": float(curve[-1] * 0.99),
                "priors": {"mag": float(rng.normal())},
            }) + "\n")
        for _ in range(broken_rows):
            fh.write(json.dumps({"arch_str": "|bad~0|", "val_acc": []}) + "\n")


def test_prepared_nb201_roundtrip(tmp_path):
    dump = tmp_path / "dump.jsonl"
    out = tmp_path / "bench.jsonl"
    write_nb201_dump(dump, 40, 200)
    report = convert(dump, "nb201-cifar100", out)
    assert report.records_written == 40
    assert report.total_skipped == 0
    table = load_benchmark(out)
    assert len(table) == 40
    assert table.max_epoch == 200
    assert table.prior_metrics == ("mag",)


def test_dataset_tag_mismatch(tmp_path):
    dump = tmp_path / "dump.jsonl"
    write_nb201_dump(dump, 5, 12)
    with pytest.raises(ConversionError, match="nb201-cifar100"):
        convert(dump, "nb201-cifar10-12ep", tmp_path / "o.jsonl")


def test_deterministic_checksums(tmp_path):
    dump = tmp_path / "dump.jsonl"
    write_nb201_dump(dump, 25, 12)
    # header written as cifar100 above; rewrite with matching tag
    lines = dump.read_text().splitlines()
    header = json.loads(lines[0])
    header["dataset"] = "nb201-cifar10-12ep"
    header["max_epoch"] = 12
    dump.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
    r1 = convert(dump, "nb201-cifar10-12ep", tmp_path / "o1.jsonl")
    r2 = convert(dump, "nb201-cifar10-12ep", tmp_path / "o2.jsonl")
    assert r1.checksum == r2.checksum


def test_spot_check_final_accuracies(tmp_path):
    dump = tmp_path / "dump.jsonl"
    out = tmp_path / "bench.jsonl"
    write_nb201_dump(dump, 100, 12)
    lines = dump.read_text().splitlines()
    header = json.loads(lines[0])
    header["dataset"] = "nb201-cifar10-12ep"
    header["max_epoch"] = 12
    dump.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
    convert(dump, "nb201-cifar10-12ep", out)
    table = load_benchmark(out)
    rng = np.random.default_rng(1)
    rows = [json.loads(line) for line in out.read_text().splitlines()[1:]]
    source_rows = [json.loads(line) for line in dump.read_text().splitlines()[1:]]
    by_key = {canonical_key(nb201_arch_from_string(r["arch_str"])): r
              for r in source_rows}
    keys = table.sorted_keys()
    for i in rng.choice(len(keys), size=min(100, len(keys)), replace=False):
        key = keys[int(i)]
        assert table.val_acc(key, table.max_epoch) == by_key[key]["val_acc"][-1]


def test_nb101_sparse_conversion(tmp_path):
    dump = tmp_path / "nb101.jsonl"
    out = tmp_path / "bench.jsonl"
    rng = np.random.default_rng(2)
    with open(dump, "w") as fh:
        fh.write(json.dumps({"dataset": "nb101",
                             "epoch_grid": list(NB101_EPOCH_GRID)}) + "\n")
        for trial in range(30):
            n = int(rng.integers(3, 8))
            adj = np.triu((rng.random((n, n)) < 0.4).astype(int), k=1)
            while adj.sum() > 9:
                nz = np.argwhere(adj)
                adj[tuple(nz[rng.integers(len(nz))])] = 0
            ops = (["input"]
                   + [["conv1x1-bn-relu", "conv3x3-bn-relu", "maxpool3x3"]
                      [int(rng.integers(3))] for _ in range(n - 2)]
                   + ["output"])
            curve = np.sort(rng.uniform(0.3, 0.95, size=4))
            fh.write(json.dumps({
                "module_adjacency": adj.tolist(),
                "module_operations": ops,
                "val_acc": {str(e): float(c) for e, c in zip(NB101_EPOCH_GRID, curve)},
                "test_acc": float(curve[-1]),
            }) + "\n")
    report = convert(dump, "nb101", out)
    table = load_benchmark(out)
    assert report.records_written == len(table)
    assert table.epoch_grid == NB101_EPOCH_GRID
    assert not table.is_dense
    key = table.sorted_keys()[0]
    assert table.val_acc(key, 36) == table.records[key].val_acc[2]


def test_written_plus_skipped_is_source_count(tmp_path):
    dump = tmp_path / "dump.jsonl"
    out = tmp_path / "bench.jsonl"
    write_nb201_dump(dump, 10, 200, broken_rows=4)
    report = convert(dump, "nb201-cifar100", out)
    assert report.records_written == 10
    assert report.total_skipped == 4
    assert report.records_written + report.total_skipped == 14


def test_cli_reports_and_exit_codes(tmp_path, capsys):
    dump = tmp_path / "dump.jsonl"
    write_nb201_dump(dump, 6, 200)
    out = tmp_path / "bench.jsonl"
    rc = main(["--source", str(dump), "--dataset", "nb201-cifar100",
               "--out", str(out)])
    assert rc == 0
    report = json.loads(capsys.readouterr().out)
    assert report["records_written"] == 6
    rc = main(["--source", str(tmp_path / "missing.jsonl"),
               "--dataset", "nb201-cifar100", "--out", str(out)])
    assert rc == 1


# ---------------------------------------------------------------------------
# torch archive structure (miniature fabricated .pth)
# ---------------------------------------------------------------------------

def fabricate_nb201_archive(path, n_arch, hp_key="less", epochs=12):
    torch = pytest.importorskip("torch")
    rng = np.random.default_rng(3)
    arch2infos = {}
    metas = all_arch_strings(n_arch)
    for idx, arch_str in enumerate(metas):
        all_results = {}
        for seed in (777, 888):
            evals = {}
            for e in range(epochs):
                evals[f"x-valid@{e}"] = float(rng.uniform(20, 90))
            evals[f"x-test@{epochs - 1}"] = float(rng.uniform(20, 90))
            all_results[("cifar10-valid", seed)] = {
                "epochs": epochs,
                "eval_acc1es": evals,
            }
            all_results[("cifar100", seed)] = {
                "epochs": epochs,
                "eval_acc1es": dict(evals),
            }
        arch2infos[idx] = {hp_key: {"arch_str": arch_str, "all_results": all_results}}
    torch.save({"meta_archs": metas, "arch2infos": arch2infos}, path)


def test_archive_conversion_with_seed_averaging(tmp_path):
    pytest.importorskip("torch")
    src = tmp_path / "mini.pth"
    fabricate_nb201_archive(src, 12, hp_key="less", epochs=12)
    out = tmp_path / "bench.jsonl"
    report = convert(src, "nb201-cifar10-12ep", out)
    assert report.records_written == 12
    table = load_benchmark(out)
    assert table.max_epoch == 12
    assert table.notes["seed_average"] == [2]
    # averaged accuracies stay in range
    for rec in table.records.values():
        assert np.all(rec.val_acc >= 0.0) and np.all(rec.val_acc <= 1.0)


def test_archive_conversion_deterministic(tmp_path):
    pytest.importorskip("torch")
    src = tmp_path / "mini.pth"
    fabricate_nb201_archive(src, 8, hp_key="12", epochs=12)
    r1 = convert(src, "nb201-cifar10-12ep", tmp_path / "o1.jsonl")
    r2 = convert(src, "nb201-cifar10-12ep", tmp_path / "o2.jsonl")
    assert r1.checksum == r2.checksum


def test_real_nb201_archive_when_available(tmp_path):
    import os
    src = os.environ.get("RANKHALVING_NB201_PTH")
    if not src:
        pytest.skip("set RANKHALVING_NB201_PTH to the published archive")
    out = tmp_path / "nb201.jsonl"
    report = convert(src, "nb201-cifar10-12ep", out)
    assert report.records_written == 15625
    assert len(load_benchmark(out)) == 15625
