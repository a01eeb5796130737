"""Training loop for the pairwise ranker: pairwise binary cross-entropy over
the 2-way softmax, adaptive-moment updates, cosine-annealed learning rate.

The backward pass is written by hand against the forward definition in
`ranker` (the finite-difference check in the test suite validates every
parameter). Two executions of the same math exist:

* a batched numpy reference (`loss_and_grad`), also used by the gradient
  check and as a fallback;
* a compiled per-pair kernel (`ranker_fast`), used by default because
  search-time retraining performs hundreds of thousands of small-batch
  steps.

Both paths are seeded identically (shuffles are drawn outside the kernels)
and agree to floating-point noise; a cross-check test pins them together.
Set the environment variable RANKHALVING_NO_NUMBA=1 to force the reference
path.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from .ranker import PairLabel, RankerError, RankerModel, arch_tensors, view_params
from .spaces import Architecture

__all__ = [
    "TrainConfig",
    "TrainingError",
    "TrainResult",
    "train",
    "loss_and_grad",
    "cosine_lr",
    "ADAM_BETA1",
    "ADAM_BETA2",
    "ADAM_EPS",
]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
# Magnitudes below this are flushed to exact zero (in pair-loss gradients and
# adaptive moments) so converged pairs cannot drag training into denormal
# arithmetic, which is ~100x slower on x86.
TINY_FLUSH = 1e-290


@dataclass(frozen=True)
class TrainConfig:
    """Optimization recipe. Loss (pairwise BCE over a 2-way softmax),
    optimizer (adaptive moments), and schedule shape (cosine) are fixed;
    only their scalars vary."""

    batch_size: int = 10
    epochs: int = 100
    lr_init: float = 0.01
    lr_final: float = 1e-5
    rng_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise RankerError("epochs and batch_size must be >= 1")
        if self.lr_final > self.lr_init:
            raise RankerError("lr_final must not exceed lr_init")


class TrainingError(RankerError):
    """Divergence during training; carries the loss trace so far."""

    def __init__(self, message: str, trace: list[float]):
        super().__init__(message)
        self.trace = trace


class TrainResult(NamedTuple):
    model: RankerModel
    loss_trace: list[float]

    def write_trace(self, path) -> None:
        """Loss trace as CSV (epoch, mean_loss)."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,mean_loss\n")
            for i, loss in enumerate(self.loss_trace, start=1):
                fh.write(f"{i},{loss!r}\n")


def cosine_lr(cfg: TrainConfig) -> np.ndarray:
    """Per-epoch learning rates annealing lr_init -> lr_final."""
    if cfg.epochs == 1:
        return np.array([cfg.lr_init])
    t = np.arange(cfg.epochs) / (cfg.epochs - 1)
    return cfg.lr_final + 0.5 * (cfg.lr_init - cfg.lr_final) * (1.0 + np.cos(np.pi * t))


# ---------------------------------------------------------------------------
# Reference forward/backward (batched numpy)
# ---------------------------------------------------------------------------

def _forward_caches(model: RankerModel, x0, nbr):
    """Encoder forward keeping per-layer pre-activations for the backward pass."""
    v = model.views
    zs, p1s, p2s, xs = [], [], [], []
    x = x0
    for l in range(model.cfg.num_layers):
        if l == 0:
            w1, b1, w2, b2, eps = v["w1_0"], v["b1_0"], v["w2_0"], v["b2_0"], v["eps_0"][0]
        else:
            w1, b1 = v["w1_rest"][l - 1], v["b1_rest"][l - 1]
            w2, b2 = v["w2_rest"][l - 1], v["b2_rest"][l - 1]
            eps = v["eps_rest"][l - 1]
        z = (1.0 + eps) * x + nbr @ x
        p1 = z @ w1 + b1
        p2 = np.maximum(p1, 0.0) @ w2 + b2
        x_out = np.maximum(p2, 0.0)
        zs.append(z)
        p1s.append(p1)
        p2s.append(p2)
        xs.append(x_out)
        x = x_out
    # layer-summed readout: every layer's pooled features contribute
    emb = xs[0].sum(axis=1)
    for x_l in xs[1:]:
        emb = emb + x_l.sum(axis=1)
    return emb, (zs, p1s, p2s, xs)


def loss_and_grad(model: RankerModel, ops, nbr, pa, pb, y):
    """Mean pairwise cross-entropy over a batch and its exact gradient.

    `ops`/`nbr` index the unique architectures; `pa`/`pb` are index pairs
    and `y` the worse-than labels (1 = a worse than b).
    """
    v = model.views
    f = model.cfg.emb_dim
    nb = len(pa)
    gather = np.concatenate([pa, pb])
    x0 = ops[gather]
    nb_adj = nbr[gather]
    emb, (zs, p1s, p2s, xs) = _forward_caches(model, x0, nb_adj)
    fa, fb = emb[:nb], emb[nb:]

    cab = np.concatenate([fa, fb], axis=1)
    cba = np.concatenate([fb, fa], axis=1)
    pre_u = cab @ v["wh1"] + v["bh1"]
    h_u = np.maximum(pre_u, 0.0)
    u = h_u @ v["wh2"] + v["bh2"]
    pre_w = cba @ v["wh1"] + v["bh1"]
    h_w = np.maximum(pre_w, 0.0)
    w = h_w @ v["wh2"] + v["bh2"]
    z = u - w

    target = (1 - np.asarray(y)).astype(np.int64)  # class 1 == "a beats b"
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    losses = lse - z[np.arange(nb), target]
    loss = float(losses.mean())

    grad = np.zeros_like(model.theta)
    g = view_params(grad, model.layout)

    dz = np.exp(z - lse[:, None])
    dz[np.arange(nb), target] -= 1.0
    dz /= nb
    dz[np.abs(dz) < TINY_FLUSH] = 0.0

    def head_backward(cat, pre, h, dout):
        g["wh2"] += h.T @ dout
        g["bh2"] += dout.sum(axis=0)
        dh = dout @ v["wh2"].T
        dpre = dh * (pre > 0.0)
        g["wh1"] += cat.T @ dpre
        g["bh1"] += dpre.sum(axis=0)
        return dpre @ v["wh1"].T

    dcab = head_backward(cab, pre_u, h_u, dz)
    dcba = head_backward(cba, pre_w, h_w, -dz)
    dfa = dcab[:, :f] + dcba[:, f:]
    dfb = dcab[:, f:] + dcba[:, :f]
    demb = np.concatenate([dfa, dfb], axis=0)

    # every layer receives the readout gradient directly plus the chain
    # contribution from the layer above
    demb_rows = np.repeat(demb[:, None, :], x0.shape[1], axis=1)
    dchain = np.zeros_like(demb_rows)
    for l in range(model.cfg.num_layers - 1, -1, -1):
        dx = dchain + demb_rows
        if l == 0:
            w1, w2 = v["w1_0"], v["w2_0"]
            gw1, gb1, gw2, gb2 = g["w1_0"], g["b1_0"], g["w2_0"], g["b2_0"]
            geps, eps = g["eps_0"], v["eps_0"][0]
            x_in = x0
        else:
            w1, w2 = v["w1_rest"][l - 1], v["w2_rest"][l - 1]
            gw1, gb1 = g["w1_rest"][l - 1], g["b1_rest"][l - 1]
            gw2, gb2 = g["w2_rest"][l - 1], g["b2_rest"][l - 1]
            geps, eps = g["eps_rest"][l - 1:l], v["eps_rest"][l - 1]
            x_in = xs[l - 1]
        dp2 = dx * (p2s[l] > 0.0)
        h1 = np.maximum(p1s[l], 0.0)
        gw2 += np.einsum("bvi,bvj->ij", h1, dp2)
        gb2 += dp2.sum(axis=(0, 1))
        dh1 = dp2 @ w2.T
        dp1 = dh1 * (p1s[l] > 0.0)
        gw1 += np.einsum("bvi,bvj->ij", zs[l], dp1)
        gb1 += dp1.sum(axis=(0, 1))
        dzl = dp1 @ w1.T
        geps += (dzl * x_in).sum()
        if l > 0:
            dchain = (1.0 + eps) * dzl + nb_adj @ dzl  # symmetric neighbors

    return loss, grad


def _adam_step(theta, grad, m, v, t, lr):
    m *= ADAM_BETA1
    m += (1.0 - ADAM_BETA1) * grad
    v *= ADAM_BETA2
    v += (1.0 - ADAM_BETA2) * grad * grad
    m[np.abs(m) < TINY_FLUSH] = 0.0
    v[v < TINY_FLUSH] = 0.0
    mhat = m / (1.0 - ADAM_BETA1 ** t)
    vhat = v / (1.0 - ADAM_BETA2 ** t)
    theta -= lr * mhat / (np.sqrt(vhat) + ADAM_EPS)


def _use_fast_path(model: RankerModel) -> bool:
    if os.environ.get("RANKHALVING_NO_NUMBA"):
        return False
    if model.cfg.num_layers < 2:
        return False
    try:
        from . import ranker_fast  # noqa: F401
        return ranker_fast.AVAILABLE
    except ImportError:
        return False


def train(
    model: RankerModel,
    pairs: list[PairLabel],
    cfg: TrainConfig,
    arch_lookup: Mapping[str, Architecture],
) -> TrainResult:
    """Fit the model on labeled pairs; returns it with the per-epoch loss trace.

    Each epoch is one seeded-shuffle pass over the pairs in minibatches.
    Raises TrainingError (carrying the trace) if the loss diverges.
    """
    if not pairs:
        raise RankerError("cannot train on an empty pair set")
    keys = sorted({p.a for p in pairs} | {p.b for p in pairs})
    index = {k: i for i, k in enumerate(keys)}
    ops, nbr = arch_tensors([arch_lookup[k] for k in keys])
    pa = np.array([index[p.a] for p in pairs], dtype=np.int64)
    pb = np.array([index[p.b] for p in pairs], dtype=np.int64)
    y = np.array([p.y for p in pairs], dtype=np.int64)

    n_pairs = len(pairs)
    lrs = cosine_lr(cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    adam_m = np.zeros_like(model.theta)
    adam_v = np.zeros_like(model.theta)
    grad_buf = np.zeros_like(model.theta)
    step = 0
    trace: list[float] = []

    fast = _use_fast_path(model)
    if fast:
        from . import ranker_fast
        offs = ranker_fast.layout_offsets(model)

    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_pairs)
        if fast:
            loss_sum = ranker_fast.run_epoch(
                model.theta, grad_buf, adam_m, adam_v, step, float(lrs[epoch]),
                ops, nbr, pa, pb, y, perm, cfg.batch_size, offs,
                model.num_ops, model.cfg.emb_dim, model.cfg.hidden_dim,
                model.cfg.num_layers,
            )
            step += (n_pairs + cfg.batch_size - 1) // cfg.batch_size
            mean_loss = loss_sum / n_pairs
        else:
            loss_sum = 0.0
            for start in range(0, n_pairs, cfg.batch_size):
                sel = perm[start:start + cfg.batch_size]
                loss, grad = loss_and_grad(model, ops, nbr, pa[sel], pb[sel], y[sel])
                loss_sum += loss * len(sel)
                step += 1
                _adam_step(model.theta, grad, adam_m, adam_v, step, float(lrs[epoch]))
            mean_loss = loss_sum / n_pairs
        trace.append(float(mean_loss))
        if not math.isfinite(mean_loss):
            raise TrainingError(f"loss diverged at epoch {epoch + 1}", trace)
        if mean_loss == 0.0:
            # Mean loss underflowing to 0.0 bounds every pair gradient below
            # ~1e-16 of the decision margin; further epochs only decay the
            # optimizer moments. Stop and report the remaining epochs as zero.
            trace.extend(0.0 for _ in range(cfg.epochs - epoch - 1))
            break

    model.check_finite()
    return TrainResult(model=model, loss_trace=trace)
