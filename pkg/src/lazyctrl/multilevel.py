"""Size-constrained multilevel k-way partitioning.

Coarsening uses heavy-edge matching, the coarsest graph is split by greedy
graph growing, and each uncoarsening level runs boundary refinement (single
moves, then pairwise swaps) that never lets a part exceed the size limit.
Vertex weights count the switches folded into a coarse vertex.
"""

from __future__ import annotations

import math

import numpy as np

_EPS = 1e-12


def _coarsen(w: np.ndarray, vw: np.ndarray, cap: int,
             rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = len(vw)
    match = np.full(n, -1, dtype=np.int64)
    for u in rng.permutation(n).tolist():
        if match[u] >= 0:
            continue
        cand = np.where((match < 0) & (vw + vw[u] <= cap) & (w[u] > 0), w[u], -np.inf)
        cand[u] = -np.inf
        v = int(np.argmax(cand))
        if cand[v] > 0:
            match[u], match[v] = v, u
        else:
            match[u] = u
    cmap = np.full(n, -1, dtype=np.int64)
    c = 0
    for u in range(n):
        if cmap[u] < 0:
            cmap[u] = cmap[match[u]] = c
            c += 1
    proj = np.zeros((n, c))
    proj[np.arange(n), cmap] = 1.0
    wc = proj.T @ w @ proj
    np.fill_diagonal(wc, 0.0)
    return wc, np.bincount(cmap, weights=vw, minlength=c).astype(np.int64), cmap


def _cut(w: np.ndarray, part: np.ndarray) -> float:
    lab = np.where(part < 0, -1 - np.arange(len(part)), part)
    return float(w[lab[:, None] != lab[None, :]].sum() / 2)


def _place_unassigned(w: np.ndarray, vw: np.ndarray, part: np.ndarray, pw: np.ndarray,
                      limit: int) -> None:
    k = len(pw)
    for v in sorted(np.flatnonzero(part < 0).tolist(), key=lambda x: -vw[x]):
        conn = np.zeros(k)
        assigned = part >= 0
        np.add.at(conn, part[assigned], w[v, assigned])
        conn = np.where(pw + vw[v] <= limit, conn, -np.inf)
        p = int(np.argmax(conn))
        if np.isfinite(conn[p]):
            part[v] = p
            pw[p] += vw[v]


def _grow(w: np.ndarray, vw: np.ndarray, k: int, limit: int,
          rng: np.random.Generator) -> np.ndarray:
    n = len(vw)
    part = np.full(n, -1, dtype=np.int64)
    pw = np.zeros(k, dtype=np.int64)
    for p in range(k):
        free = np.flatnonzero((part < 0) & (vw <= limit))
        if len(free) == 0:
            break
        seed = int(rng.choice(free))
        part[seed] = p
        pw[p] = vw[seed]
        conn = w[:, seed].copy()
        while True:
            cand = (part < 0) & (pw[p] + vw <= limit)
            if not cand.any():
                break
            score = np.where(cand, conn, -np.inf)
            v = int(np.argmax(score))
            if score[v] <= 0:
                v = int(rng.choice(np.flatnonzero(cand)))
            part[v] = p
            pw[p] += vw[v]
            conn += w[:, v]
    _place_unassigned(w, vw, part, pw, limit)
    return part


def _refine(w: np.ndarray, vw: np.ndarray, part: np.ndarray, k: int, limit: int,
            max_steps: int | None = None) -> np.ndarray:
    part = part.copy()
    n = len(vw)
    pw = np.bincount(part[part >= 0], weights=vw[part >= 0], minlength=k).astype(np.int64)
    _place_unassigned(w, vw, part, pw, limit)
    assigned = part >= 0
    onehot = np.zeros((n, k))
    onehot[np.flatnonzero(assigned), part[assigned]] = 1.0
    conn = w @ onehot
    tol = _EPS * max(1.0, float(w.max()) if w.size else 1.0)
    rows = np.arange(n)
    steps = max_steps if max_steps is not None else 20 * n + 100

    def shift(v: int, old: int, new: int) -> None:
        if old >= 0:
            conn[:, old] -= w[:, v]
            pw[old] -= vw[v]
        conn[:, new] += w[:, v]
        pw[new] += vw[v]
        part[v] = new

    for _ in range(steps):
        live = part >= 0
        own = np.where(live, conn[rows, np.maximum(part, 0)], 0.0)
        gain = conn - own[:, None]
        gain[~((pw[None, :] + vw[:, None]) <= limit)] = -np.inf
        gain[rows[live], part[live]] = -np.inf
        gain[~live] = -np.inf
        v, t = np.unravel_index(int(np.argmax(gain)), gain.shape)
        if gain[v, t] > tol:
            shift(int(v), int(part[v]), int(t))
            continue

        # no improving single move: try the best feasible swap
        idx = np.flatnonzero(live)
        if len(idx) < 2:
            break
        pl = part[idx]
        d = conn[idx] - own[idx, None]
        m1 = d[:, pl]  # m1[a, b] = gain of moving idx[a] into part of idx[b]
        gsw = m1 + m1.T - 2 * w[np.ix_(idx, idx)]
        vwi = vw[idx]
        ok = (pl[:, None] != pl[None, :])
        ok &= (pw[pl][:, None] - vwi[:, None] + vwi[None, :]) <= limit
        ok &= (pw[pl][None, :] - vwi[None, :] + vwi[:, None]) <= limit
        gsw = np.where(ok, gsw, -np.inf)
        a, b = np.unravel_index(int(np.argmax(gsw)), gsw.shape)
        if gsw[a, b] <= tol:
            break
        u, v = int(idx[a]), int(idx[b])
        pu, pv = int(part[u]), int(part[v])
        shift(u, pu, pv)
        shift(v, pv, pu)
    return part


def multilevel_partition(w: np.ndarray, k: int, size_limit: int, rng: np.random.Generator,
                         n_trials: int = 4) -> np.ndarray:
    """Return a part label per vertex with every part holding <= ``size_limit`` vertices.

    ``k * size_limit`` must be at least the vertex count. Parts may come out
    empty when refinement finds it cheaper to use fewer of them.
    """
    n = w.shape[0]
    if k * size_limit < n:
        raise ValueError("k parts of size_limit cannot hold every vertex")
    if k <= 1:
        return np.zeros(n, dtype=np.int64)

    coarsen_to = max(2 * k, 32)
    cap = max(1, math.ceil(size_limit / 2))
    levels: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    cur_w, cur_vw = np.asarray(w, dtype=float), np.ones(n, dtype=np.int64)
    while len(cur_vw) > coarsen_to:
        wc, vwc, cmap = _coarsen(cur_w, cur_vw, cap, rng)
        if len(vwc) > 0.95 * len(cur_vw):
            break
        levels.append((cur_w, cur_vw, cmap))
        cur_w, cur_vw = wc, vwc

    best, best_key = None, None
    for _ in range(max(1, n_trials)):
        part = _refine(cur_w, cur_vw, _grow(cur_w, cur_vw, k, size_limit, rng), k, size_limit)
        key = (int(cur_vw[part < 0].sum()), _cut(cur_w, part))
        if best_key is None or key < best_key:
            best, best_key = part, key
    part = best

    for fine_w, fine_vw, cmap in reversed(levels):
        part = part[cmap]
        part = _refine(fine_w, fine_vw, part, k, size_limit)

    if np.any(part < 0):  # pragma: no cover - unit weights always fit at the finest level
        raise RuntimeError("partitioner left vertices unplaced")
    return part
