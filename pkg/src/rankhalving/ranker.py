"""Pairwise-ranking performance predictor.

The candidate pool mixes architectures trained for different epoch counts,
so absolute accuracies are not comparable across levels and regression
targets are ill-defined. Instead the pool induces pairwise {0,1} labels
(more trained epochs wins; within a level, the level's score decides), and
a small Siamese model learns to predict the winner of a pair:

* a message-passing graph encoder (sum aggregation over the undirected
  adjacency, learnable self-weight, two-layer ReLU transform per layer,
  sum-pooled readout) embeds each architecture;
* a two-stage feed-forward head maps the concatenated pair embedding to two
  logits.

The head is antisymmetrized: logits(a, b) = g([f(a), f(b)]) - g([f(b), f(a)]),
so win probabilities satisfy p(a, b) + p(b, a) = 1 exactly and self-play is
0.5. A global ranking over a candidate universe is extracted by scoring each
candidate by its mean win probability against a reference set of trained
pool members.

All parameters live in one flat float64 vector with named views, which keeps
the hand-written backprop, the finite-difference check, and the compiled
training kernel in exact correspondence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .pyramid import ContextItem
from .spaces import Architecture, canonical_key

__all__ = [
    "RankerError",
    "PairLabel",
    "generate_pairs",
    "RankerConfig",
    "RankerModel",
    "init_model",
    "embed_batch",
    "pair_logit_diff",
    "forward",
    "global_rank",
    "propose",
    "arch_tensors",
]


class RankerError(RuntimeError):
    """Predictor failure (non-finite values, unsatisfiable proposal, ...)."""


# ---------------------------------------------------------------------------
# Pairwise labels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairLabel:
    """y = 1 means architecture `a` is worse than `b`.

    One canonical orientation (a < b by key) is emitted per unordered pair;
    the mirrored pair is implied by label complement and, under the
    antisymmetrized head, contributes an identical training gradient, so it
    is not materialized.
    """

    a: str
    b: str
    y: int


def generate_pairs(context: list[ContextItem]) -> list[PairLabel]:
    """All comparable unordered pairs from a pool snapshot.

    A pair is decided by trained epochs first; at equal epochs by the
    level's score (validation accuracy above level 0, prior score at level
    0). Exact score ties are omitted: a tie would force y(a,b) = y(b,a),
    which is incoherent as a label pair.
    """
    n = len(context)
    if n < 2:
        return []
    epochs = np.array([c.trained_epochs for c in context], dtype=np.int64)
    scores = np.array([c.score for c in context], dtype=np.float64)
    keys = [c.key for c in context]

    labels = []
    for i in range(n):
        for j in range(i + 1, n):
            if epochs[i] != epochs[j]:
                i_worse = epochs[i] < epochs[j]
            elif scores[i] != scores[j]:
                i_worse = scores[i] < scores[j]
            else:
                continue
            a, b = (i, j) if keys[i] < keys[j] else (j, i)
            # y follows the canonical orientation, not the loop order.
            if a == i:
                y = 1 if i_worse else 0
            else:
                y = 0 if i_worse else 1
            labels.append(PairLabel(a=keys[a], b=keys[b], y=y))
    return labels


# ---------------------------------------------------------------------------
# Model parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RankerConfig:
    """Encoder/head dimensions and initialization scheme.

    init_scale=None (default) uses fan-scaled uniform weight initialization
    with zero biases and self-weights; without it the deep stack of
    contractive layers maps every architecture to a near-identical
    embedding and training sticks at the constant-output saddle (the
    original recipe relied on a pretrained encoder, which is out of scope
    here). Setting init_scale draws every parameter uniformly from
    [-init_scale, init_scale] instead.
    """

    num_layers: int = 5
    emb_dim: int = 16
    hidden_dim: int = 64
    init_scale: float | None = None

    def __post_init__(self):
        if self.num_layers < 1 or self.emb_dim < 1 or self.hidden_dim < 1:
            raise RankerError("ranker dimensions must be positive")


def _param_layout(num_ops: int, cfg: RankerConfig) -> list[tuple[str, tuple[int, ...]]]:
    f, hd, lr = cfg.emb_dim, cfg.hidden_dim, cfg.num_layers - 1
    layout = [
        ("w1_0", (num_ops, f)), ("b1_0", (f,)),
        ("w2_0", (f, f)), ("b2_0", (f,)),
        ("eps_0", (1,)),
    ]
    if lr > 0:
        layout += [
            ("w1_rest", (lr, f, f)), ("b1_rest", (lr, f)),
            ("w2_rest", (lr, f, f)), ("b2_rest", (lr, f)),
            ("eps_rest", (lr,)),
        ]
    layout += [
        ("wh1", (2 * f, hd)), ("bh1", (hd,)),
        ("wh2", (hd, 2)), ("bh2", (2,)),
    ]
    return layout


class RankerModel:
    """Flat parameter vector plus named views, for one search space's op arity."""

    def __init__(self, num_ops: int, cfg: RankerConfig, theta: np.ndarray):
        self.num_ops = int(num_ops)
        self.cfg = cfg
        self.layout = _param_layout(num_ops, cfg)
        total = sum(int(np.prod(shape)) for _, shape in self.layout)
        theta = np.ascontiguousarray(np.asarray(theta, dtype=np.float64))
        if theta.shape != (total,):
            raise RankerError(f"expected {total} parameters, got {theta.shape}")
        self.theta = theta
        self.views = view_params(theta, self.layout)

    @property
    def num_params(self) -> int:
        return len(self.theta)

    def copy(self) -> "RankerModel":
        return RankerModel(self.num_ops, self.cfg, self.theta.copy())

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.theta)):
            bad = [name for name, _ in self.layout
                   if not np.all(np.isfinite(self.views[name]))]
            raise RankerError(f"non-finite parameters in {bad}")


def view_params(flat: np.ndarray, layout) -> dict[str, np.ndarray]:
    """Named reshaped views aliasing a flat vector."""
    views = {}
    off = 0
    for name, shape in layout:
        size = int(np.prod(shape))
        views[name] = flat[off:off + size].reshape(shape)
        off += size
    return views


def init_model(num_ops: int, cfg: RankerConfig = RankerConfig(),
               rng_seed: int = 0) -> RankerModel:
    """Seeded parameter initialization (see RankerConfig.init_scale)."""
    layout = _param_layout(num_ops, cfg)
    rng = np.random.default_rng(rng_seed)
    blocks = []
    for name, shape in layout:
        size = int(np.prod(shape))
        if cfg.init_scale is not None:
            blocks.append(rng.uniform(-cfg.init_scale, cfg.init_scale, size=size))
        elif name.startswith("w"):
            fan_in, fan_out = shape[-2], shape[-1]
            a = math.sqrt(6.0 / (fan_in + fan_out))
            blocks.append(rng.uniform(-a, a, size=size))
        else:
            blocks.append(np.zeros(size))
    return RankerModel(num_ops, cfg, np.concatenate(blocks))


# ---------------------------------------------------------------------------
# Forward passes (inference path, batched numpy)
# ---------------------------------------------------------------------------

def arch_tensors(archs: list[Architecture]) -> tuple[np.ndarray, np.ndarray]:
    """(ops, undirected-neighbor) float64 tensors for a batch of same-space cells."""
    ops = np.stack([a.ops for a in archs]).astype(np.float64)
    adj = np.stack([a.adjacency for a in archs]).astype(np.float64)
    nbr = adj + np.transpose(adj, (0, 2, 1))
    return ops, nbr


def embed_batch(model: RankerModel, ops: np.ndarray, nbr: np.ndarray) -> np.ndarray:
    """Graph embeddings, shape (batch, emb_dim).

    Readout sums the pooled node features of every layer (standard
    jumping-knowledge-style readout for this encoder family); shallow
    layers keep contributing signal and gradient even when deeper ones
    saturate.
    """
    v = model.views
    x = ops
    z = (1.0 + v["eps_0"][0]) * x + nbr @ x
    x = np.maximum(np.maximum(z @ v["w1_0"] + v["b1_0"], 0.0) @ v["w2_0"] + v["b2_0"], 0.0)
    emb = x.sum(axis=1)
    for l in range(model.cfg.num_layers - 1):
        z = (1.0 + v["eps_rest"][l]) * x + nbr @ x
        x = np.maximum(
            np.maximum(z @ v["w1_rest"][l] + v["b1_rest"][l], 0.0) @ v["w2_rest"][l]
            + v["b2_rest"][l], 0.0)
        emb = emb + x.sum(axis=1)
    return emb


def _sigmoid(d: np.ndarray) -> np.ndarray:
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _head_halves(model: RankerModel):
    # First head layer split by input half: cat([fa, fb]) @ wh1 ==
    # fa @ top + fb @ bottom. Lets pairwise grids reuse per-side products.
    f = model.cfg.emb_dim
    wh1 = model.views["wh1"]
    return wh1[:f], wh1[f:]


def _decision(model: RankerModel, pre_u: np.ndarray, pre_v: np.ndarray) -> np.ndarray:
    v = model.views
    w_diff = v["wh2"][:, 1] - v["wh2"][:, 0]
    u = np.maximum(pre_u, 0.0) @ w_diff
    w = np.maximum(pre_v, 0.0) @ w_diff
    return u - w


def pair_logit_diff(model: RankerModel, emb_a: np.ndarray, emb_b: np.ndarray) -> np.ndarray:
    """Antisymmetrized decision value d with p(a beats b) = sigmoid(d).

    d = (u1 - u0) - (v1 - v0) for u = head([fa, fb]), v = head([fb, fa]);
    the head output bias cancels in the difference.
    """
    top, bottom = _head_halves(model)
    bh1 = model.views["bh1"]
    a_top = emb_a @ top
    a_bot = emb_a @ bottom
    b_top = emb_b @ top
    b_bot = emb_b @ bottom
    pre_u = a_top + b_bot + bh1
    pre_v = b_top + a_bot + bh1
    return _decision(model, pre_u, pre_v)


def forward(model: RankerModel, a: Architecture, b: Architecture) -> float:
    """Probability that architecture a beats architecture b, in (0, 1)."""
    model.check_finite()
    ops, nbr = arch_tensors([a, b])
    emb = embed_batch(model, ops, nbr)
    d = pair_logit_diff(model, emb[0:1], emb[1:2])[0]
    if not np.isfinite(d):
        raise RankerError(
            f"non-finite comparison value (|theta|_max={np.abs(model.theta).max():.3g})"
        )
    return float(_sigmoid(np.array([d]))[0])


# ---------------------------------------------------------------------------
# Global ranking and proposal
# ---------------------------------------------------------------------------

def global_rank(
    model: RankerModel,
    universe: list[Architecture],
    reference: list[Architecture],
    rng_seed: int = 0,
    max_reference: int = 64,
    chunk: int = 2048,
) -> list[Architecture]:
    """Universe sorted by descending mean win probability against a reference set.

    The reference is subsampled (seeded) to `max_reference` entries when
    larger. Ties are broken by canonical key. Cost is one embedding per
    architecture plus |universe| * |reference| head evaluations.
    """
    if not reference:
        raise RankerError("reference set must be nonempty")
    model.check_finite()
    if len(reference) > max_reference:
        rng = np.random.default_rng(rng_seed)
        idx = rng.choice(len(reference), size=max_reference, replace=False)
        reference = [reference[int(i)] for i in sorted(idx)]

    ops_r, nbr_r = arch_tensors(reference)
    emb_r = embed_batch(model, ops_r, nbr_r)
    top, bottom = _head_halves(model)
    bh1 = model.views["bh1"]
    r_top = emb_r @ top
    r_bot = emb_r @ bottom
    n_ref = len(reference)

    scores = np.empty(len(universe), dtype=np.float64)
    for start in range(0, len(universe), chunk):
        block = universe[start:start + chunk]
        ops_u, nbr_u = arch_tensors(block)
        emb_u = embed_batch(model, ops_u, nbr_u)
        a_top = emb_u @ top
        a_bot = emb_u @ bottom
        # (block, ref, hidden) grids assembled from per-side products
        pre_u = a_top[:, None, :] + r_bot[None, :, :] + bh1
        pre_v = r_top[None, :, :] + a_bot[:, None, :] + bh1
        d = _decision(model, pre_u, pre_v)
        scores[start:start + len(block)] = _sigmoid(d).mean(axis=1)
    if not np.all(np.isfinite(scores)):
        raise RankerError("non-finite ranking scores")

    keys = [canonical_key(a) for a in universe]
    order = sorted(range(len(universe)), key=lambda i: (-scores[i], keys[i]))
    return [universe[i] for i in order]


def save_model(model: RankerModel, path) -> None:
    """Checkpoint parameters as JSON (shortest round-trip decimals)."""
    payload = {
        "format": "ranker-v1",
        "num_ops": model.num_ops,
        "num_layers": model.cfg.num_layers,
        "emb_dim": model.cfg.emb_dim,
        "hidden_dim": model.cfg.hidden_dim,
        "theta": [float(x) for x in model.theta],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_model(path) -> RankerModel:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "ranker-v1":
        raise RankerError(f"{path}: not a ranker checkpoint")
    cfg = RankerConfig(num_layers=payload["num_layers"], emb_dim=payload["emb_dim"],
                       hidden_dim=payload["hidden_dim"])
    return RankerModel(payload["num_ops"], cfg, np.array(payload["theta"], dtype=np.float64))


def propose(ranking: list[Architecture], pool_keys: set[str], k: int,
            rng_seed: int = 0) -> list[Architecture]:
    """k fresh candidates: the top half of the ranking plus a seeded sample
    from the next tier.

    After removing pool members, takes the top ceil(k/2) candidates and
    samples the remaining k - ceil(k/2) uniformly without replacement from
    ranks (ceil(k/2), 2k] of the filtered ranking.
    """
    if k < 1:
        raise RankerError(f"proposal size must be >= 1, got {k}")
    fresh = [a for a in ranking if canonical_key(a) not in pool_keys]
    if len(fresh) < k:
        raise RankerError(
            f"only {len(fresh)} fresh candidates for a proposal of {k}; "
            f"use a larger candidate universe"
        )
    n_top = math.ceil(k / 2)
    n_sampled = k - n_top
    picks = fresh[:n_top]
    if n_sampled > 0:
        window = fresh[n_top:min(2 * k, len(fresh))]
        if len(window) < n_sampled:
            raise RankerError(
                f"exploration window has {len(window)} candidates, need {n_sampled}; "
                f"use a larger candidate universe"
            )
        rng = np.random.default_rng(rng_seed)
        idx = rng.choice(len(window), size=n_sampled, replace=False)
        picks = picks + [window[int(i)] for i in idx]
    return picks
