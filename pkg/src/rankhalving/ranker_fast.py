"""Compiled training kernel.

Same math as the reference path in `ranker_train`, restructured for speed:
each minibatch stacks its 2*batch architecture graphs into one row-block
matrix so every linear transform is a single BLAS call, while the per-graph
aggregation and ReLU masks run as tight loops. Everything executes
single-threaded and in a fixed order, so results are deterministic for a
given input; summation order differs from the batched numpy reference, so
parameter trajectories agree only to floating-point noise (a single-batch
gradient cross-check test pins the two paths together).

One `run_epoch` call performs a full epoch of shuffled minibatch steps
including the adaptive-moment update; the caller supplies the permutation
so both paths consume the identical shuffle stream.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
    AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    AVAILABLE = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn
        return deco

from .ranker_train import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, TINY_FLUSH

__all__ = ["AVAILABLE", "layout_offsets", "run_epoch", "batch_grad"]


def layout_offsets(model) -> np.ndarray:
    """Start offsets of each named parameter block in the flat vector."""
    sizes = [int(np.prod(shape)) for _, shape in model.layout]
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)


@njit(cache=True)
def _aggregate_blocks(x, nbr, idx, eps, out, n_graphs, v):
    # out = (1 + eps) * x + blockdiag(nbr[idx]) @ x, graph-blocked rows
    d = x.shape[1]
    for g in range(n_graphs):
        base = g * v
        nb = nbr[idx[g]]
        for i in range(v):
            r = base + i
            for j in range(d):
                out[r, j] = (1.0 + eps) * x[r, j]
            for k in range(v):
                c = nb[i, k]
                if c != 0.0:
                    for j in range(d):
                        out[r, j] += c * x[base + k, j]


@njit(cache=True)
def _batch_step(theta, grad, ops, nbr, pa, pb, y, perm, start, end, offs,
                n_ops, f, hd, n_layers,
                x0, z0, zr, p1, h1, p2, xs, demb, dx, dxn):
    """Gradient of the mean pair loss over perm[start:end]; returns loss sum."""
    lrest = n_layers - 1
    w1_0 = theta[offs[0]:offs[1]].reshape(n_ops, f)
    b1_0 = theta[offs[1]:offs[2]]
    w2_0 = theta[offs[2]:offs[3]].reshape(f, f)
    b2_0 = theta[offs[3]:offs[4]]
    eps0 = theta[offs[4]:offs[5]]
    w1r = theta[offs[5]:offs[6]].reshape(lrest, f, f)
    b1r = theta[offs[6]:offs[7]].reshape(lrest, f)
    w2r = theta[offs[7]:offs[8]].reshape(lrest, f, f)
    b2r = theta[offs[8]:offs[9]].reshape(lrest, f)
    epsr = theta[offs[9]:offs[10]]
    wh1 = theta[offs[10]:offs[11]].reshape(2 * f, hd)
    bh1 = theta[offs[11]:offs[12]]
    wh2 = theta[offs[12]:offs[13]].reshape(hd, 2)
    bh2 = theta[offs[13]:offs[14]]

    grad[:] = 0.0
    g_w1_0 = grad[offs[0]:offs[1]].reshape(n_ops, f)
    g_b1_0 = grad[offs[1]:offs[2]]
    g_w2_0 = grad[offs[2]:offs[3]].reshape(f, f)
    g_b2_0 = grad[offs[3]:offs[4]]
    g_eps0 = grad[offs[4]:offs[5]]
    g_w1r = grad[offs[5]:offs[6]].reshape(lrest, f, f)
    g_b1r = grad[offs[6]:offs[7]].reshape(lrest, f)
    g_w2r = grad[offs[7]:offs[8]].reshape(lrest, f, f)
    g_b2r = grad[offs[8]:offs[9]].reshape(lrest, f)
    g_epsr = grad[offs[9]:offs[10]]
    g_wh1 = grad[offs[10]:offs[11]].reshape(2 * f, hd)
    g_bh1 = grad[offs[11]:offs[12]]
    # wh2's pair is antisymmetrized, so bh2 cancels and gets zero gradient.
    g_wh2 = grad[offs[12]:offs[13]].reshape(hd, 2)

    nb = end - start
    v = ops.shape[1]
    n_graphs = 2 * nb
    rows = n_graphs * v
    inv = 1.0 / nb

    idx = np.empty(n_graphs, dtype=np.int64)
    for p in range(nb):
        pi = perm[start + p]
        idx[p] = pa[pi]
        idx[nb + p] = pb[pi]

    # ---- encoder forward over stacked rows
    for g in range(n_graphs):
        base = g * v
        src = ops[idx[g]]
        for i in range(v):
            for j in range(n_ops):
                x0[base + i, j] = src[i, j]
    x0v = x0[:rows]
    _aggregate_blocks(x0v, nbr, idx, eps0[0], z0[:rows], n_graphs, v)
    t = np.dot(z0[:rows], w1_0)
    for r in range(rows):
        for j in range(f):
            val = t[r, j] + b1_0[j]
            p1[0, r, j] = val
            h1[0, r, j] = val if val > 0.0 else 0.0
    t = np.dot(h1[0, :rows], w2_0)
    for r in range(rows):
        for j in range(f):
            val = t[r, j] + b2_0[j]
            p2[0, r, j] = val
            xs[0, r, j] = val if val > 0.0 else 0.0
    for l in range(1, n_layers):
        _aggregate_blocks(xs[l - 1, :rows], nbr, idx, epsr[l - 1], zr[l - 1, :rows],
                          n_graphs, v)
        t = np.dot(zr[l - 1, :rows], w1r[l - 1])
        for r in range(rows):
            for j in range(f):
                val = t[r, j] + b1r[l - 1, j]
                p1[l, r, j] = val
                h1[l, r, j] = val if val > 0.0 else 0.0
        t = np.dot(h1[l, :rows], w2r[l - 1])
        for r in range(rows):
            for j in range(f):
                val = t[r, j] + b2r[l - 1, j]
                p2[l, r, j] = val
                xs[l, r, j] = val if val > 0.0 else 0.0

    # ---- graph embeddings (layer-summed readout) and head
    emb = np.zeros((n_graphs, f))
    for l in range(n_layers):
        for g in range(n_graphs):
            base = g * v
            for i in range(v):
                for j in range(f):
                    emb[g, j] += xs[l, base + i, j]
    cab = np.empty((nb, 2 * f))
    cba = np.empty((nb, 2 * f))
    for p in range(nb):
        for j in range(f):
            cab[p, j] = emb[p, j]
            cab[p, f + j] = emb[nb + p, j]
            cba[p, j] = emb[nb + p, j]
            cba[p, f + j] = emb[p, j]
    pre_u = np.dot(cab, wh1)
    pre_v = np.dot(cba, wh1)
    h_u = np.empty((nb, hd))
    h_v = np.empty((nb, hd))
    for p in range(nb):
        for j in range(hd):
            vu = pre_u[p, j] + bh1[j]
            vv = pre_v[p, j] + bh1[j]
            pre_u[p, j] = vu
            pre_v[p, j] = vv
            h_u[p, j] = vu if vu > 0.0 else 0.0
            h_v[p, j] = vv if vv > 0.0 else 0.0
    out_u = np.dot(h_u, wh2)
    out_v = np.dot(h_v, wh2)

    loss_sum = 0.0
    dz = np.empty((nb, 2))
    for p in range(nb):
        zv0 = out_u[p, 0] - out_v[p, 0]
        zv1 = out_u[p, 1] - out_v[p, 1]
        pi = perm[start + p]
        tcls = 1 - y[pi]
        zm = zv0 if zv0 > zv1 else zv1
        lse = zm + np.log(np.exp(zv0 - zm) + np.exp(zv1 - zm))
        loss_sum += lse - (zv0 if tcls == 0 else zv1)
        d0 = np.exp(zv0 - lse)
        d1 = np.exp(zv1 - lse)
        if tcls == 0:
            d0 -= 1.0
        else:
            d1 -= 1.0
        d0 *= inv
        d1 *= inv
        if -TINY_FLUSH < d0 < TINY_FLUSH:
            d0 = 0.0
        if -TINY_FLUSH < d1 < TINY_FLUSH:
            d1 = 0.0
        dz[p, 0] = d0
        dz[p, 1] = d1

    # ---- head backward (v-orientation receives -dz)
    t = np.dot(h_u.T, dz)
    t2 = np.dot(h_v.T, dz)
    for j in range(hd):
        g_wh2[j, 0] = t[j, 0] - t2[j, 0]
        g_wh2[j, 1] = t[j, 1] - t2[j, 1]
    dpre_u = np.empty((nb, hd))
    dpre_v = np.empty((nb, hd))
    for p in range(nb):
        for j in range(hd):
            dh = wh2[j, 0] * dz[p, 0] + wh2[j, 1] * dz[p, 1]
            dpre_u[p, j] = dh if pre_u[p, j] > 0.0 else 0.0
            dpre_v[p, j] = -dh if pre_v[p, j] > 0.0 else 0.0
    for p in range(nb):
        for j in range(hd):
            if p == 0:
                g_bh1[j] = dpre_u[p, j] + dpre_v[p, j]
            else:
                g_bh1[j] += dpre_u[p, j] + dpre_v[p, j]
    t = np.dot(cab.T, dpre_u)
    t2 = np.dot(cba.T, dpre_v)
    for k in range(2 * f):
        for j in range(hd):
            g_wh1[k, j] = t[k, j] + t2[k, j]
    dcab = np.dot(dpre_u, wh1.T)
    dcba = np.dot(dpre_v, wh1.T)
    for p in range(nb):
        for j in range(f):
            demb[p, j] = dcab[p, j] + dcba[p, f + j]
            demb[nb + p, j] = dcab[p, f + j] + dcba[p, j]

    # ---- encoder backward over stacked rows; each layer takes the readout
    # gradient directly plus the chain term from the layer above (in dxn)
    for r in range(rows):
        for j in range(f):
            dxn[r, j] = 0.0
    for l in range(n_layers - 1, -1, -1):
        for g in range(n_graphs):
            base = g * v
            for i in range(v):
                for j in range(f):
                    dx[base + i, j] = dxn[base + i, j] + demb[g, j]
        dp2 = np.empty((rows, f))
        for r in range(rows):
            for j in range(f):
                dp2[r, j] = dx[r, j] if p2[l, r, j] > 0.0 else 0.0
        gw2_add = np.dot(h1[l, :rows].T, dp2)
        if l == 0:
            dh1 = np.dot(dp2, w2_0.T)
        else:
            dh1 = np.dot(dp2, w2r[l - 1].T)
        dp1 = np.empty((rows, f))
        for r in range(rows):
            for j in range(f):
                dp1[r, j] = dh1[r, j] if p1[l, r, j] > 0.0 else 0.0
        if l == 0:
            gw1_add = np.dot(z0[:rows].T, dp1)
            dzm = np.dot(dp1, w1_0.T)
            deps = 0.0
            for r in range(rows):
                for j in range(n_ops):
                    deps += dzm[r, j] * x0[r, j]
            g_eps0[0] = deps
            for a in range(n_ops):
                for j in range(f):
                    g_w1_0[a, j] = gw1_add[a, j]
            for a in range(f):
                for j in range(f):
                    g_w2_0[a, j] = gw2_add[a, j]
            for r in range(rows):
                for j in range(f):
                    if r == 0:
                        g_b1_0[j] = dp1[r, j]
                        g_b2_0[j] = dp2[r, j]
                    else:
                        g_b1_0[j] += dp1[r, j]
                        g_b2_0[j] += dp2[r, j]
        else:
            gw1_add = np.dot(zr[l - 1, :rows].T, dp1)
            dzm = np.dot(dp1, w1r[l - 1].T)
            x_prev = xs[l - 1]
            deps = 0.0
            for r in range(rows):
                for j in range(f):
                    deps += dzm[r, j] * x_prev[r, j]
            g_epsr[l - 1] = deps
            for a in range(f):
                for j in range(f):
                    g_w1r[l - 1, a, j] = gw1_add[a, j]
                    g_w2r[l - 1, a, j] = gw2_add[a, j]
            for r in range(rows):
                for j in range(f):
                    if r == 0:
                        g_b1r[l - 1, j] = dp1[r, j]
                        g_b2r[l - 1, j] = dp2[r, j]
                    else:
                        g_b1r[l - 1, j] += dp1[r, j]
                        g_b2r[l - 1, j] += dp2[r, j]
            # chain term for the next layer down: (1 + eps) dz + blockdiag @ dz
            _aggregate_blocks(dzm, nbr, idx, epsr[l - 1], dxn[:rows], n_graphs, v)
    return loss_sum


@njit(cache=True)
def _run_epoch_jit(theta, grad, am, av, t0, lr, ops, nbr, pa, pb, y, perm,
                   bsz, offs, n_ops, f, hd, n_layers):
    v = ops.shape[1]
    lrest = max(n_layers - 1, 1)
    n = pa.shape[0]
    n_params = theta.shape[0]
    max_rows = 2 * bsz * v

    x0 = np.empty((max_rows, n_ops))
    z0 = np.empty((max_rows, n_ops))
    zr = np.empty((lrest, max_rows, f))
    p1 = np.empty((n_layers, max_rows, f))
    h1 = np.empty((n_layers, max_rows, f))
    p2 = np.empty((n_layers, max_rows, f))
    xs = np.empty((n_layers, max_rows, f))
    demb = np.empty((2 * bsz, f))
    dx = np.empty((max_rows, f))
    dxn = np.empty((max_rows, f))

    loss_sum = 0.0
    t = t0
    start = 0
    while start < n:
        end = min(start + bsz, n)
        loss_sum += _batch_step(theta, grad, ops, nbr, pa, pb, y, perm,
                                start, end, offs, n_ops, f, hd, n_layers,
                                x0, z0, zr, p1, h1, p2, xs, demb, dx, dxn)
        t += 1
        bc1 = 1.0 - ADAM_BETA1 ** t
        bc2 = 1.0 - ADAM_BETA2 ** t
        for i in range(n_params):
            m = ADAM_BETA1 * am[i] + (1.0 - ADAM_BETA1) * grad[i]
            w = ADAM_BETA2 * av[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i]
            if -TINY_FLUSH < m < TINY_FLUSH:
                m = 0.0
            if w < TINY_FLUSH:
                w = 0.0
            am[i] = m
            av[i] = w
            theta[i] -= lr * (m / bc1) / (np.sqrt(w / bc2) + ADAM_EPS)
        start = end
    return loss_sum


@njit(cache=True)
def _batch_grad_jit(theta, grad, ops, nbr, pa, pb, y, offs,
                    n_ops, f, hd, n_layers):
    v = ops.shape[1]
    lrest = max(n_layers - 1, 1)
    n = pa.shape[0]
    rows = 2 * n * v
    x0 = np.empty((rows, n_ops))
    z0 = np.empty((rows, n_ops))
    zr = np.empty((lrest, rows, f))
    p1 = np.empty((n_layers, rows, f))
    h1 = np.empty((n_layers, rows, f))
    p2 = np.empty((n_layers, rows, f))
    xs = np.empty((n_layers, rows, f))
    demb = np.empty((2 * n, f))
    dx = np.empty((rows, f))
    dxn = np.empty((rows, f))
    perm = np.arange(n)
    return _batch_step(theta, grad, ops, nbr, pa, pb, y, perm, 0, n, offs,
                       n_ops, f, hd, n_layers,
                       x0, z0, zr, p1, h1, p2, xs, demb, dx, dxn)


def run_epoch(theta, grad, adam_m, adam_v, step0, lr, ops, nbr, pa, pb, y,
              perm, batch_size, offs, n_ops, emb_dim, hidden_dim, n_layers):
    if not AVAILABLE:
        raise RuntimeError("numba unavailable; use the reference path")
    return _run_epoch_jit(theta, grad, adam_m, adam_v, step0, lr,
                          ops, nbr, pa, pb, y, perm.astype(np.int64),
                          batch_size, offs, n_ops, emb_dim, hidden_dim, n_layers)


def batch_grad(model, ops, nbr, pa, pb, y):
    """Mean loss and gradient of one batch via the compiled path (for
    cross-checking against the reference implementation)."""
    if not AVAILABLE:
        raise RuntimeError("numba unavailable; use the reference path")
    offs = layout_offsets(model)
    grad = np.zeros_like(model.theta)
    loss_sum = _batch_grad_jit(model.theta, grad,
                               ops, nbr,
                               pa.astype(np.int64), pb.astype(np.int64),
                               y.astype(np.int64), offs,
                               model.num_ops, model.cfg.emb_dim,
                               model.cfg.hidden_dim, model.cfg.num_layers)
    return loss_sum / len(pa), grad
