"""Cell search spaces: DAG-encoded architectures, sampling, canonical identity.

An architecture is a cell encoded as a pair of matrices under a fixed
topological node order:

* ``ops``: a one-hot matrix of shape (num_nodes, num_ops); row v selects the
  operation placed on node v.
* ``adjacency``: a binary matrix of shape (num_nodes, num_nodes), strictly
  upper triangular, so acyclicity is structural rather than checked.

Spaces whose searchable operations live on edges are expected to be stored
after an operation-on-node transform (see the converter package); the engine
only ever sees node-op encodings.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SpaceError",
    "SearchSpaceSpec",
    "Architecture",
    "canonical_key",
    "sample",
    "space_size",
    "enumerate_space",
    "subsample_universe",
]

# Rejection-sampling attempt cap for edge-budgeted free-DAG spaces.
MAX_REJECTION_ATTEMPTS = 100_000


class SpaceError(ValueError):
    """Invalid space definition or unsatisfiable sampling request."""


@dataclass(frozen=True)
class SearchSpaceSpec:
    """Description of a cell search space.

    ``structure`` is either ``"fixed_dag"`` (exactly one legal adjacency
    pattern; only node operations vary) or ``"free_dag"`` (any strictly
    upper-triangular adjacency within the optional ``max_edges`` budget).

    ``fixed_adjacency`` pins the single legal edge set of a fixed_dag space
    as (src, dst) pairs; if omitted, the complete DAG under the node order is
    used. ``fixed_node_ops`` pins selected nodes to a fixed operation (e.g.
    input/output marker ops produced by edge-to-node transforms); pinned
    nodes are excluded from sampling.
    """

    num_nodes: int
    op_vocabulary: tuple[str, ...]
    structure: str = "fixed_dag"
    max_edges: int | None = None
    fixed_adjacency: tuple[tuple[int, int], ...] | None = None
    fixed_node_ops: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.num_nodes < 1:
            raise SpaceError(f"num_nodes must be >= 1, got {self.num_nodes}")
        if len(self.op_vocabulary) < 1:
            raise SpaceError("op_vocabulary must contain at least one operation")
        if len(set(self.op_vocabulary)) != len(self.op_vocabulary):
            raise SpaceError("op_vocabulary contains duplicate names")
        if self.structure not in ("fixed_dag", "free_dag"):
            raise SpaceError(f"unknown structure {self.structure!r}")
        if self.max_edges is not None and self.max_edges < 0:
            raise SpaceError("max_edges must be nonnegative")
        object.__setattr__(self, "op_vocabulary", tuple(self.op_vocabulary))
        if self.fixed_adjacency is not None:
            edges = tuple(sorted((int(s), int(d)) for s, d in self.fixed_adjacency))
            for s, d in edges:
                if not (0 <= s < d < self.num_nodes):
                    raise SpaceError(f"fixed_adjacency edge ({s},{d}) is not upper-triangular")
            if len(set(edges)) != len(edges):
                raise SpaceError("fixed_adjacency contains duplicate edges")
            object.__setattr__(self, "fixed_adjacency", edges)
        for node, op in self.fixed_node_ops.items():
            if not 0 <= node < self.num_nodes:
                raise SpaceError(f"fixed_node_ops pins unknown node {node}")
            if not 0 <= op < len(self.op_vocabulary):
                raise SpaceError(f"fixed_node_ops pins node {node} to unknown op index {op}")

    @property
    def num_ops(self) -> int:
        return len(self.op_vocabulary)

    @property
    def free_nodes(self) -> tuple[int, ...]:
        return tuple(v for v in range(self.num_nodes) if v not in self.fixed_node_ops)

    def fixed_dag_adjacency(self) -> np.ndarray:
        """The single legal adjacency of a fixed_dag space (complete DAG by default)."""
        if self.structure != "fixed_dag":
            raise SpaceError("fixed_dag_adjacency is only defined for fixed_dag spaces")
        a = np.zeros((self.num_nodes, self.num_nodes), dtype=np.int8)
        if self.fixed_adjacency is None:
            for s in range(self.num_nodes):
                a[s, s + 1:] = 1
        else:
            for s, d in self.fixed_adjacency:
                a[s, d] = 1
        return a


@dataclass(frozen=True)
class Architecture:
    """Immutable DAG cell: one-hot op matrix + strictly upper-triangular adjacency."""

    ops: np.ndarray        # (V, O) one-hot, int8
    adjacency: np.ndarray  # (V, V) binary, strictly upper triangular, int8

    def __post_init__(self):
        ops = np.ascontiguousarray(np.asarray(self.ops, dtype=np.int8))
        adj = np.ascontiguousarray(np.asarray(self.adjacency, dtype=np.int8))
        if ops.ndim != 2 or adj.shape != (ops.shape[0], ops.shape[0]):
            raise SpaceError(f"shape mismatch: ops {ops.shape}, adjacency {adj.shape}")
        if not np.array_equal(ops.sum(axis=1), np.ones(ops.shape[0], dtype=np.int8)):
            raise SpaceError("each ops row must be one-hot")
        if np.any(np.tril(adj) != 0):
            raise SpaceError("adjacency must be strictly upper triangular")
        if not np.all((adj == 0) | (adj == 1)):
            raise SpaceError("adjacency must be binary")
        ops.setflags(write=False)
        adj.setflags(write=False)
        object.__setattr__(self, "ops", ops)
        object.__setattr__(self, "adjacency", adj)

    @property
    def num_nodes(self) -> int:
        return self.ops.shape[0]

    @property
    def op_indices(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.argmax(self.ops, axis=1))

    @property
    def edge_list(self) -> tuple[tuple[int, int], ...]:
        src, dst = np.nonzero(self.adjacency)
        return tuple((int(s), int(d)) for s, d in zip(src, dst))

    @property
    def num_edges(self) -> int:
        return int(self.adjacency.sum())

    def __eq__(self, other):
        return (
            isinstance(other, Architecture)
            and np.array_equal(self.ops, other.ops)
            and np.array_equal(self.adjacency, other.adjacency)
        )

    def __hash__(self):
        return hash(canonical_key(self))

    def __repr__(self):
        return f"Architecture(ops={self.op_indices}, edges={self.edge_list})"


def from_indices(space: SearchSpaceSpec, op_indices, edges) -> Architecture:
    """Build an Architecture from per-node op indices and an edge list."""
    ops = np.zeros((space.num_nodes, space.num_ops), dtype=np.int8)
    for v, o in enumerate(op_indices):
        ops[v, o] = 1
    adj = np.zeros((space.num_nodes, space.num_nodes), dtype=np.int8)
    for s, d in edges:
        adj[s, d] = 1
    arch = Architecture(ops, adj)
    if space.max_edges is not None and arch.num_edges > space.max_edges:
        raise SpaceError(f"edge count {arch.num_edges} exceeds budget {space.max_edges}")
    return arch


def canonical_key(arch: Architecture) -> str:
    """Stable content hash of the (ops, adjacency) encoding.

    Equal encodings hash equally across processes and platforms; distinct
    encodings of isomorphic graphs remain distinct, matching tabular
    benchmark key semantics.
    """
    payload = "ops:%s;edges:%s" % (
        ",".join(str(i) for i in arch.op_indices),
        ",".join(f"{s}-{d}" for s, d in arch.edge_list),
    )
    return hashlib.sha256(payload.encode("ascii")).hexdigest()[:32]


def _sample_one(space: SearchSpaceSpec, rng: np.random.Generator) -> Architecture:
    op_indices = [0] * space.num_nodes
    for v, o in space.fixed_node_ops.items():
        op_indices[v] = o
    free = space.free_nodes
    if free:
        draws = rng.integers(0, space.num_ops, size=len(free))
        for v, o in zip(free, draws):
            op_indices[v] = int(o)

    if space.structure == "fixed_dag":
        adj = space.fixed_dag_adjacency()
    else:
        n_slots = space.num_nodes * (space.num_nodes - 1) // 2
        for attempt in range(MAX_REJECTION_ATTEMPTS):
            bits = rng.integers(0, 2, size=n_slots)
            if space.max_edges is None or bits.sum() <= space.max_edges:
                break
        else:
            raise SpaceError(
                f"rejection sampling failed after {MAX_REJECTION_ATTEMPTS} attempts "
                f"(max_edges={space.max_edges} too tight for {space.num_nodes} nodes)"
            )
        adj = np.zeros((space.num_nodes, space.num_nodes), dtype=np.int8)
        iu = np.triu_indices(space.num_nodes, k=1)
        adj[iu] = bits

    ops = np.zeros((space.num_nodes, space.num_ops), dtype=np.int8)
    ops[np.arange(space.num_nodes), op_indices] = 1
    return Architecture(ops, adj)


def sample(space: SearchSpaceSpec, n: int, rng_seed: int) -> list[Architecture]:
    """Draw n architectures uniformly over the space's legal encodings.

    Deterministic for a fixed seed. Duplicates are permitted at this layer;
    deduplication happens at the pool/universe level.
    """
    if n < 1:
        raise SpaceError(f"n must be >= 1, got {n}")
    if space_size(space) == 0:
        raise SpaceError("space has zero legal architectures")
    rng = np.random.default_rng(rng_seed)
    return [_sample_one(space, rng) for _ in range(n)]


def space_size(space: SearchSpaceSpec) -> int:
    """Exact number of legal encodings in the space."""
    n_op_choices = space.num_ops ** len(space.free_nodes)
    if space.structure == "fixed_dag":
        return n_op_choices
    n_slots = space.num_nodes * (space.num_nodes - 1) // 2
    if space.max_edges is None:
        n_adj = 2 ** n_slots
    else:
        n_adj = sum(math.comb(n_slots, k) for k in range(0, min(space.max_edges, n_slots) + 1))
    return n_adj * n_op_choices


def enumerate_space(space: SearchSpaceSpec) -> list[Architecture]:
    """Enumerate every legal encoding (small spaces only), in a deterministic order."""
    size = space_size(space)
    if size > 2_000_000:
        raise SpaceError(f"space too large to enumerate ({size} encodings)")
    if space.structure == "fixed_dag":
        adjacencies = [space.fixed_dag_adjacency()]
    else:
        iu = np.triu_indices(space.num_nodes, k=1)
        n_slots = len(iu[0])
        adjacencies = []
        for bits in itertools.product((0, 1), repeat=n_slots):
            if space.max_edges is not None and sum(bits) > space.max_edges:
                continue
            adj = np.zeros((space.num_nodes, space.num_nodes), dtype=np.int8)
            adj[iu] = bits
            adjacencies.append(adj)

    free = space.free_nodes
    base = [space.fixed_node_ops.get(v, 0) for v in range(space.num_nodes)]
    archs = []
    for combo in itertools.product(range(space.num_ops), repeat=len(free)):
        op_indices = list(base)
        for v, o in zip(free, combo):
            op_indices[v] = o
        ops = np.zeros((space.num_nodes, space.num_ops), dtype=np.int8)
        ops[np.arange(space.num_nodes), op_indices] = 1
        for adj in adjacencies:
            archs.append(Architecture(ops, adj))
    return archs


def subsample_universe(space: SearchSpaceSpec, m: int, rng_seed: int) -> list[Architecture]:
    """Up to m distinct architectures (deduplicated by canonical key), seeded.

    Returns the whole space when it holds fewer than m encodings. For
    requests close to the space size the space is enumerated and subsampled
    without replacement, avoiding coupon-collector stalls.
    """
    if m < 1:
        raise SpaceError(f"m must be >= 1, got {m}")
    size = space_size(space)
    if size == 0:
        raise SpaceError("space has zero legal architectures")
    rng = np.random.default_rng(rng_seed)

    if m >= size:
        return enumerate_space(space)
    if size <= 2_000_000 and m > size // 2:
        everything = enumerate_space(space)
        idx = rng.choice(size, size=m, replace=False)
        return [everything[int(i)] for i in sorted(idx)]

    seen: dict[str, Architecture] = {}
    while len(seen) < m:
        batch = max(64, int(1.2 * (m - len(seen))))
        for _ in range(batch):
            arch = _sample_one(space, rng)
            key = canonical_key(arch)
            if key not in seen:
                seen[key] = arch
                if len(seen) == m:
                    break
    return list(seen.values())
