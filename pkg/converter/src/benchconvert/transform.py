"""Edge-op to node-op encoding transforms for the published benchmark spaces.

The search engine stores every cell as operations-on-nodes. NAS-Bench-201
(and DARTS-style) cells place operations on edges, so each edge becomes a
node and two edge-nodes are wired when one's head is the other's tail, plus
explicit input/output marker nodes.

NAS-Bench-201 node order (fixed for reproducible canonical keys):
    0: input marker
    1: edge 0->1      (arch string stage 1)
    2: edge 0->2      (stage 2, first slot)
    3: edge 1->2      (stage 2, second slot)
    4: edge 0->3      (stage 3, first slot)
    5: edge 1->3      (stage 3, second slot)
    6: edge 2->3      (stage 3, third slot)
    7: output marker

NAS-Bench-101 cells are already node-encoded with 2..7 nodes; they are
padded to 7 nodes by appending disconnected nodes carrying a padding
operation, keeping the original node order.
"""

from __future__ import annotations

import re

import numpy as np

from rankhalving import Architecture, SearchSpaceSpec

__all__ = [
    "NB201_OPS",
    "NB101_OPS",
    "nb201_space",
    "nb101_space",
    "nb201_arch_from_string",
    "nb101_arch_from_matrices",
]

NB201_OPS = (
    "input",
    "none",
    "skip_connect",
    "nor_conv_1x1",
    "nor_conv_3x3",
    "avg_pool_3x3",
    "output",
)

# (tail, head) of each original edge, in arch-string slot order
_NB201_EDGES = ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))

NB101_OPS = (
    "input",
    "conv1x1-bn-relu",
    "conv3x3-bn-relu",
    "maxpool3x3",
    "output",
    "none_pad",
)

NB101_NUM_NODES = 7
NB101_MAX_EDGES = 9


def _nb201_adjacency() -> tuple[tuple[int, int], ...]:
    edges = []
    for i, (tail, _) in enumerate(_NB201_EDGES):
        if tail == 0:
            edges.append((0, 1 + i))
    for i, (_, head_i) in enumerate(_NB201_EDGES):
        for j, (tail_j, _) in enumerate(_NB201_EDGES):
            if head_i == tail_j:
                edges.append((1 + i, 1 + j))
        if head_i == 3:
            edges.append((1 + i, 7))
    return tuple(sorted(edges))


def nb201_space() -> SearchSpaceSpec:
    return SearchSpaceSpec(
        num_nodes=8,
        op_vocabulary=NB201_OPS,
        structure="fixed_dag",
        fixed_adjacency=_nb201_adjacency(),
        fixed_node_ops={0: NB201_OPS.index("input"), 7: NB201_OPS.index("output")},
    )


def nb101_space() -> SearchSpaceSpec:
    return SearchSpaceSpec(
        num_nodes=NB101_NUM_NODES,
        op_vocabulary=NB101_OPS,
        structure="free_dag",
        max_edges=NB101_MAX_EDGES,
    )


_ARCH_RE = re.compile(r"\|([^|~]+)~(\d+)(?=\|)")


def nb201_arch_from_string(arch_str: str) -> Architecture:
    """Parse '|op~0|+|op~0|op~1|+|op~0|op~1|op~2|' into the node encoding."""
    tokens = _ARCH_RE.findall(arch_str)
    if len(tokens) != 6:
        raise ValueError(f"expected 6 edge operations, got {len(tokens)} in {arch_str!r}")
    space = nb201_space()
    op_indices = [space.fixed_node_ops[0]] + [0] * 6 + [space.fixed_node_ops[7]]
    for slot, ((op_name, tail), (exp_tail, _)) in enumerate(zip(tokens, _NB201_EDGES)):
        if int(tail) != exp_tail:
            raise ValueError(f"edge slot {slot} expects tail {exp_tail}, got {tail} "
                             f"in {arch_str!r}")
        if op_name not in NB201_OPS:
            raise ValueError(f"unknown operation {op_name!r} in {arch_str!r}")
        op_indices[1 + slot] = NB201_OPS.index(op_name)
    ops = np.zeros((8, len(NB201_OPS)), dtype=np.int8)
    ops[np.arange(8), op_indices] = 1
    return Architecture(ops, space.fixed_dag_adjacency())


def nb101_arch_from_matrices(adjacency, operations) -> Architecture:
    """Pad a 2..7-node cell to the engine's fixed 7-node encoding."""
    adj = np.asarray(adjacency, dtype=np.int8)
    n = adj.shape[0]
    if adj.shape != (n, n) or n < 2 or n > NB101_NUM_NODES:
        raise ValueError(f"bad adjacency shape {adj.shape}")
    if len(operations) != n:
        raise ValueError(f"{len(operations)} operations for {n} nodes")
    if int(adj.sum()) > NB101_MAX_EDGES:
        raise ValueError(f"{int(adj.sum())} edges exceeds budget {NB101_MAX_EDGES}")
    full_adj = np.zeros((NB101_NUM_NODES, NB101_NUM_NODES), dtype=np.int8)
    full_adj[:n, :n] = adj
    op_indices = []
    for name in operations:
        if name not in NB101_OPS:
            raise ValueError(f"unknown operation {name!r}")
        op_indices.append(NB101_OPS.index(name))
    op_indices += [NB101_OPS.index("none_pad")] * (NB101_NUM_NODES - n)
    ops = np.zeros((NB101_NUM_NODES, len(NB101_OPS)), dtype=np.int8)
    ops[np.arange(NB101_NUM_NODES), op_indices] = 1
    return Architecture(ops, full_adj)
