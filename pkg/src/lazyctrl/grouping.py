"""Switch grouping: the inter-group intensity objective, initial multilevel
grouping, and incremental merge/re-split refinement."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .mincut import cut_weight, min_bisection_split
from .multilevel import multilevel_partition
from .traffic import IntensityMatrix

log = logging.getLogger(__name__)

ControllerLoadProbe = Callable[["Grouping"], float]


class InfeasibleGroupingError(ValueError):
    pass


@dataclass(frozen=True)
class Grouping:
    groups: tuple[frozenset[int], ...]
    size_limit: int
    # intensity matrix the grouping was computed against; IncUpdate measures change from it
    reference: IntensityMatrix | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.size_limit < 1:
            raise InfeasibleGroupingError("size_limit must be >= 1")
        groups = tuple(frozenset(g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        seen: set[int] = set()
        for gid, g in enumerate(groups):
            if not g:
                raise InfeasibleGroupingError(f"group {gid} is empty")
            if len(g) > self.size_limit:
                raise InfeasibleGroupingError(
                    f"group {gid} has {len(g)} switches, limit is {self.size_limit}")
            if seen & g:
                raise InfeasibleGroupingError(f"group {gid} overlaps an earlier group")
            seen |= g

    @cached_property
    def assignment(self) -> dict[int, int]:
        return {s: gid for gid, g in enumerate(self.groups) for s in g}

    @property
    def switches(self) -> frozenset[int]:
        return frozenset(self.assignment)

    def labels(self, n: int) -> np.ndarray:
        lab = np.full(n, -1, dtype=np.int64)
        for s, gid in self.assignment.items():
            if s >= n:
                raise InfeasibleGroupingError(f"switch {s} outside a {n}-switch matrix")
            lab[s] = gid
        if np.any(lab < 0):
            missing = np.flatnonzero(lab < 0).tolist()
            raise InfeasibleGroupingError(f"switches not grouped: {missing[:10]}")
        return lab

    def with_reference(self, w: IntensityMatrix | None) -> Grouping:
        return Grouping(self.groups, self.size_limit, w)

    def to_dict(self) -> dict:
        return {"size_limit": self.size_limit,
                "groups": [sorted(g) for g in self.groups]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> Grouping:
        return cls(tuple(frozenset(int(s) for s in g) for g in data["groups"]),
                   int(data["size_limit"]))

    @classmethod
    def from_labels(cls, labels: Sequence[int], size_limit: int,
                    reference: IntensityMatrix | None = None) -> Grouping:
        by_label: dict[int, set[int]] = {}
        for s, lab in enumerate(labels):
            by_label.setdefault(int(lab), set()).add(s)
        # stable group ids: ordered by smallest member
        groups = sorted((frozenset(g) for g in by_label.values()), key=min)
        return cls(tuple(groups), size_limit, reference)


@dataclass
class GroupingDelta:
    moved: list[tuple[int, int, int]] = field(default_factory=list)
    merged_pairs: list[tuple[int, int]] = field(default_factory=list)
    iteration_count: int = 0

    @property
    def merged_pair(self) -> tuple[int, int] | None:
        return self.merged_pairs[-1] if self.merged_pairs else None

    def apply(self, grouping: Grouping) -> Grouping:
        members = [set(g) for g in grouping.groups]
        for s, src, dst in self.moved:
            members[src].discard(s)
            members[dst].add(s)
        return Grouping(tuple(frozenset(g) for g in members if g), grouping.size_limit)


@dataclass(frozen=True)
class Thresholds:
    high: float
    low: float

    @classmethod
    def around(cls, reference_load: float, high_factor: float = 1.3,
               low_factor: float = 1.0) -> Thresholds:
        return cls(high_factor * reference_load, low_factor * reference_load)


def _matrix(w: IntensityMatrix | np.ndarray) -> np.ndarray:
    return w.w if isinstance(w, IntensityMatrix) else np.asarray(w, dtype=float)


def w_inter(grouping: Grouping, w: IntensityMatrix | np.ndarray) -> float:
    """Total intensity between switches in different groups, each pair counted once."""
    mat = _matrix(w)
    lab = grouping.labels(mat.shape[0])
    return float(mat[lab[:, None] != lab[None, :]].sum() / 2)


def intra_weight(grouping: Grouping, w: IntensityMatrix | np.ndarray) -> float:
    mat = _matrix(w)
    lab = grouping.labels(mat.shape[0])
    return float(mat[lab[:, None] == lab[None, :]].sum() / 2)


def ini_group(w: IntensityMatrix | np.ndarray, size_limit: int, seed: int = 0,
              k: int | None = None) -> Grouping:
    """Initial feasible grouping by size-constrained multilevel k-way partitioning.

    ``k`` defaults to ceil(n / size_limit), the fewest groups that can hold
    every switch.
    """
    if size_limit < 1:
        raise InfeasibleGroupingError("size_limit must be >= 1")
    mat = _matrix(w)
    n = mat.shape[0]
    if n == 0:
        return Grouping((), size_limit, w if isinstance(w, IntensityMatrix) else None)
    k = k if k is not None else math.ceil(n / size_limit)
    if k * size_limit < n:
        raise InfeasibleGroupingError(f"{k} groups of {size_limit} cannot hold {n} switches")
    rng = np.random.default_rng(seed)
    labels = multilevel_partition(mat, k, size_limit, rng)
    ref = w if isinstance(w, IntensityMatrix) else IntensityMatrix(mat, 1.0)
    return Grouping.from_labels(labels, size_limit, ref)


def _pair_intensity(mat: np.ndarray, a: Iterable[int], b: Iterable[int]) -> float:
    return cut_weight(mat, a, b)


def inc_update(grouping: Grouping, w_new: IntensityMatrix | np.ndarray,
               load: ControllerLoadProbe, thresholds: Thresholds,
               on_iteration: Callable[[Grouping, Grouping], None] | None = None,
               ) -> tuple[Grouping, GroupingDelta]:
    """Greedy merge-and-resplit of the group pair whose mutual intensity grew most.

    Runs only while the load probe is above ``thresholds.high`` on entry and
    stops once it drops below ``thresholds.low``, when no untried pair shows a
    positive increase, or after n_groups**2 iterations. A re-split is kept only
    if it does not raise the pair's cut, so W_inter never increases.
    """
    mat = _matrix(w_new)
    n = mat.shape[0]
    grouping.labels(n)  # feasibility / coverage check
    ref = _matrix(grouping.reference) if grouping.reference is not None else np.zeros_like(mat)
    delta = GroupingDelta()
    if load(grouping) <= thresholds.high:
        return grouping, delta

    limit = grouping.size_limit
    groups = [frozenset(g) for g in grouping.groups]
    tried: set[frozenset[frozenset[int]]] = set()
    cap = len(groups) ** 2
    current = grouping

    for _ in range(cap):
        best = None
        for x in range(len(groups)):
            for y in range(x + 1, len(groups)):
                key = frozenset((groups[x], groups[y]))
                if key in tried or len(groups[x]) + len(groups[y]) > 2 * limit:
                    continue
                inc = _pair_intensity(mat, groups[x], groups[y]) - \
                    _pair_intensity(ref, groups[x], groups[y])
                if inc > 0 and (best is None or inc > best[0]):
                    best = (inc, x, y)
        if best is None:
            break
        _, x, y = best
        delta.merged_pairs.append((x, y))
        delta.iteration_count += 1
        old_cut = _pair_intensity(mat, groups[x], groups[y])
        a, b = min_bisection_split(groups[x] | groups[y], mat, limit)
        new_cut = cut_weight(mat, a, b)
        if new_cut < old_cut:
            keep = len(a & groups[x]) + len(b & groups[y])
            swap = len(a & groups[y]) + len(b & groups[x])
            if swap > keep:
                a, b = b, a
            groups[x], groups[y] = a, b
            previous, current = current, Grouping(tuple(groups), limit, grouping.reference)
            if on_iteration is not None:
                on_iteration(previous, current)
        tried.add(frozenset((groups[x], groups[y])))
        if load(current) < thresholds.low:
            break

    old = grouping.assignment
    new = Grouping(tuple(groups), limit, w_new if isinstance(w_new, IntensityMatrix)
                   else IntensityMatrix(mat, 1.0))
    delta.moved = sorted((s, old[s], gid) for s, gid in new.assignment.items() if old[s] != gid)
    log.debug("inc_update: %d iterations, %d switches moved", delta.iteration_count,
              len(delta.moved))
    return new, delta


def brute_force_grouping(w: IntensityMatrix | np.ndarray, size_limit: int) -> Grouping:
    """Exact W_inter minimizer by branch-and-bound over capped set partitions (n <= 12)."""
    mat = _matrix(w)
    n = mat.shape[0]
    if n > 12:
        raise ValueError("brute force grouping is limited to 12 switches")
    if size_limit < 1:
        raise InfeasibleGroupingError("size_limit must be >= 1")
    if n == 0:
        return Grouping((), size_limit)

    order = sorted(range(n), key=lambda v: -mat[v].sum())
    best_cost = math.inf
    best_blocks: list[list[int]] = []
    blocks: list[list[int]] = []

    def recurse(i: int, cost: float) -> None:
        nonlocal best_cost, best_blocks
        if cost >= best_cost:
            return
        if i == n:
            best_cost, best_blocks = cost, [list(b) for b in blocks]
            return
        v = order[i]
        placed = [u for b in blocks for u in b]
        total = float(mat[v, placed].sum()) if placed else 0.0
        for b in blocks:
            if len(b) < size_limit:
                inside = float(mat[v, b].sum())
                b.append(v)
                recurse(i + 1, cost + total - inside)
                b.pop()
        blocks.append([v])
        recurse(i + 1, cost + total)
        blocks.pop()

    recurse(0, 0.0)
    return Grouping(tuple(frozenset(b) for b in sorted(best_blocks, key=min)), size_limit)
