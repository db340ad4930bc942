"""Global minimum cut and size-constrained bisection over intensity weights."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .traffic import IntensityMatrix


class InfeasibleSplitError(ValueError):
    pass


def cut_weight(w: np.ndarray, side_a: Iterable[int], side_b: Iterable[int]) -> float:
    a, b = list(side_a), list(side_b)
    if not a or not b:
        return 0.0
    return float(w[np.ix_(a, b)].sum())


def stoer_wagner(w: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimum global cut of a dense symmetric weight matrix.

    Returns ``(cut_value, mask)`` where ``mask`` marks one side of the cut.
    Runs in O(n^3). Ties are broken towards the lowest index, so the result is
    deterministic.
    """
    value, masks = _stoer_wagner_all(w)
    return value, masks[0]


def _stoer_wagner_all(w: np.ndarray, tol: float = 1e-12) -> tuple[float, list[np.ndarray]]:
    """Like :func:`stoer_wagner` but returns every phase cut that ties the minimum."""
    n = w.shape[0]
    if n < 2:
        raise ValueError("a cut needs at least two vertices")
    g = np.array(w, dtype=float)
    # members[v] lists the original vertices merged into super-vertex v
    members = [[v] for v in range(n)]
    alive = list(range(n))
    phases: list[tuple[float, list[int]]] = []

    while len(alive) > 1:
        idx = np.asarray(alive)
        added = np.zeros(len(idx), dtype=bool)
        conn = np.zeros(len(idx))
        prev = last = -1
        for _ in range(len(idx)):
            cand = np.where(added, -np.inf, conn)
            pos = int(np.argmax(cand))
            added[pos] = True
            prev, last = last, pos
            conn += g[idx[pos], idx]
        # cut-of-the-phase separates the last-added vertex from the rest
        s, t = idx[prev], idx[last]
        phases.append((float(g[t, idx].sum()), list(members[t])))
        g[s, :] += g[t, :]
        g[:, s] += g[:, t]
        g[s, s] = 0.0
        members[s].extend(members[t])
        alive.remove(int(t))

    best = min(c for c, _ in phases)
    masks = []
    for c, side in phases:
        if c <= best + tol:
            mask = np.zeros(n, dtype=bool)
            mask[side] = True
            masks.append(mask)
    return best, masks


def _repair_balance(w: np.ndarray, mask: np.ndarray, size_limit: int) -> np.ndarray:
    """Move vertices off the oversized side, cheapest cut increase first."""
    mask = mask.copy()
    while True:
        if mask.sum() > size_limit:
            big = mask.copy()
        elif (~mask).sum() > size_limit:
            big = ~mask
        else:
            return mask
        # moving v from big to small changes the cut by conn(v, big) - conn(v, small)
        delta = w[:, big].sum(axis=1) - w[:, ~big].sum(axis=1)
        delta = np.where(big, delta, np.inf)
        v = int(np.argmin(delta))
        mask[v] = not mask[v]


def _polish(w: np.ndarray, mask: np.ndarray, size_limit: int) -> np.ndarray:
    """Greedy single-vertex moves that lower the cut without breaking feasibility."""
    mask = mask.copy()
    for _ in range(4 * len(mask)):
        side_a, side_b = mask, ~mask
        na, nb = int(side_a.sum()), int(side_b.sum())
        to_a = w[:, side_a].sum(axis=1)
        to_b = w[:, side_b].sum(axis=1)
        # gain of flipping v (positive = cut shrinks)
        gain = np.where(mask, to_b - to_a, to_a - to_b)
        ok = np.where(mask, (na > 1) & (nb + 1 <= size_limit), (nb > 1) & (na + 1 <= size_limit))
        gain = np.where(ok, gain, -np.inf)
        v = int(np.argmax(gain))
        if gain[v] <= 1e-12:
            break
        mask[v] = not mask[v]
    return mask


def min_bisection_split(vertices: Iterable[int], w: IntensityMatrix | np.ndarray,
                        size_limit: int) -> tuple[frozenset[int], frozenset[int]]:
    """Split ``vertices`` into two non-empty parts of at most ``size_limit`` each.

    Starts from the Stoer-Wagner global minimum cut of the induced subgraph
    (the first size-feasible one among tied phase cuts); when every minimum
    cut has a side that is too large, boundary vertices are moved across in
    order of smallest cut increase, then single-vertex moves polish the result.
    """
    verts = sorted(set(vertices))
    if len(verts) < 2:
        raise InfeasibleSplitError("need at least two vertices to split")
    if len(verts) > 2 * size_limit:
        raise InfeasibleSplitError(
            f"{len(verts)} vertices cannot be split into two parts of <= {size_limit}")
    mat = w.w if isinstance(w, IntensityMatrix) else np.asarray(w, dtype=float)
    sub = mat[np.ix_(verts, verts)]
    _, masks = _stoer_wagner_all(sub)
    feasible = [m for m in masks if m.sum() <= size_limit and (~m).sum() <= size_limit]
    if feasible:
        mask = feasible[0]
    else:
        repaired = [_polish(sub, _repair_balance(sub, m, size_limit), size_limit)
                    for m in masks]
        mask = min(repaired, key=lambda m: float(sub[np.ix_(m, ~m)].sum()))
    a = frozenset(v for v, m in zip(verts, mask) if m)
    b = frozenset(v for v, m in zip(verts, mask) if not m)
    # canonical orientation: part holding the smallest id first
    return (a, b) if min(a) < min(b) else (b, a)
