"""Host-location tables: the exact local table (L-FIB), the per-peer Bloom
filter bank (G-FIB), and the controller's global base (C-LIB)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

_M64 = (1 << 64) - 1
_SEED_A = 0x5DEECE66D2B7E151
_SEED_B = 0x9E3779B97F4A7C15 ^ 0xC2B2AE3D27D4EB4F

BLOCK_BYTES = 128
BLOCK_BITS = BLOCK_BYTES * 8
MIN_BLOCKS = 16
DEFAULT_FPR = 0.001


def _mix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def _mix64_np(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def hash_pair(addr: int) -> tuple[int, int]:
    """Two independent 64-bit hashes of an address; the second is forced odd."""
    return _mix64(addr ^ _SEED_A), _mix64(addr ^ _SEED_B) | 1


def bf_params_for(n_expected: int, target_fpr: float) -> tuple[int, int]:
    """Optimal (bits, hash count) for ``n_expected`` keys at ``target_fpr``."""
    if not 0 < target_fpr < 1:
        raise ValueError("target_fpr must lie in (0, 1)")
    if n_expected < 1:
        raise ValueError("n_expected must be >= 1")
    m = math.ceil(-n_expected * math.log(target_fpr) / math.log(2) ** 2)
    k = max(1, math.floor(m / n_expected * math.log(2) + 0.5))
    return m, k


def filter_bits_for(n_expected: int, target_fpr: float) -> tuple[int, int]:
    """Bits rounded up to whole 128-byte blocks (at least 16), plus the hash count."""
    m, k = bf_params_for(max(n_expected, MIN_BLOCKS), target_fpr)
    blocks = max(MIN_BLOCKS, math.ceil(m / BLOCK_BITS))
    return blocks * BLOCK_BITS, k


def analytic_fpr(m: int, k: int, n: int) -> float:
    return (1.0 - math.exp(-k * n / m)) ** k


class BloomFilter:
    def __init__(self, m: int, k: int) -> None:
        if m <= 0 or k < 1:
            raise ValueError("Bloom filter needs m > 0 and k >= 1")
        self.m = m
        self.k = k
        self.bits = np.zeros(m, dtype=bool)
        self.n_inserted = 0

    def _positions(self, addr: int) -> list[int]:
        h1, h2 = hash_pair(addr)
        return [((h1 + i * h2) & _M64) % self.m for i in range(self.k)]

    def _positions_np(self, addrs: np.ndarray) -> np.ndarray:
        a = np.asarray(addrs, dtype=np.uint64)
        h1 = _mix64_np(a ^ np.uint64(_SEED_A))
        h2 = _mix64_np(a ^ np.uint64(_SEED_B)) | np.uint64(1)
        i = np.arange(self.k, dtype=np.uint64)
        with np.errstate(over="ignore"):
            pos = h1[:, None] + i[None, :] * h2[:, None]
        return (pos % np.uint64(self.m)).astype(np.int64)

    def insert(self, addr: int) -> None:
        self.bits[self._positions(addr)] = True
        self.n_inserted += 1

    def query(self, addr: int) -> bool:
        return self.query_hashed(*hash_pair(addr))

    def query_hashed(self, h1: int, h2: int) -> bool:
        bits, m = self.bits, self.m
        return all(bits[((h1 + i * h2) & _M64) % m] for i in range(self.k))

    def insert_many(self, addrs: Iterable[int]) -> None:
        arr = np.fromiter(addrs, dtype=np.uint64)
        if len(arr):
            self.bits[self._positions_np(arr).ravel()] = True
            self.n_inserted += len(arr)

    def query_many(self, addrs: np.ndarray) -> np.ndarray:
        arr = np.asarray(addrs, dtype=np.uint64)
        if len(arr) == 0:
            return np.zeros(0, dtype=bool)
        return self.bits[self._positions_np(arr)].all(axis=1)

    @property
    def nbytes(self) -> int:
        return math.ceil(self.m / 8)

    def __repr__(self) -> str:
        return f"BloomFilter(m={self.m}, k={self.k}, n={self.n_inserted})"


def bf_insert(bf: BloomFilter, address: int) -> None:
    bf.insert(address)


def bf_query(bf: BloomFilter, address: int) -> bool:
    return bf.query(address)


# --- L-FIB ------------------------------------------------------------------


@dataclass(frozen=True)
class LFibSnapshot:
    owner: int
    entries: Mapping[int, int]
    version: int


class LFib:
    """Exact address -> local port map owned by one switch."""

    def __init__(self, owner: int, entries: Mapping[int, int] | None = None) -> None:
        self.owner = owner
        self._entries: dict[int, int] = dict(entries or {})
        self.version = 0

    def lookup(self, addr: int) -> int | None:
        return self._entries.get(addr)

    def learn(self, addr: int, port: int) -> bool:
        """Insert or move an entry; returns True if the table changed."""
        if self._entries.get(addr) == port:
            return False
        self._entries[addr] = port
        self.version += 1
        return True

    def remove(self, addr: int) -> bool:
        if addr not in self._entries:
            return False
        del self._entries[addr]
        self.version += 1
        return True

    def snapshot(self) -> LFibSnapshot:
        return LFibSnapshot(self.owner, MappingProxyType(dict(self._entries)), self.version)

    def __contains__(self, addr: int) -> bool:
        return addr in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def items(self):
        return self._entries.items()


# --- G-FIB ------------------------------------------------------------------


def build_filter(addrs: Iterable[int], target_fpr: float = DEFAULT_FPR) -> BloomFilter:
    addrs = list(addrs)
    m, k = filter_bits_for(len(addrs), target_fpr)
    bf = BloomFilter(m, k)
    bf.insert_many(addrs)
    return bf


@dataclass
class GFib:
    group_id: int | None = None
    filters: dict[int, tuple[BloomFilter, int]] = field(default_factory=dict)
    target_fpr: float = DEFAULT_FPR

    def lookup(self, addr: int) -> list[int]:
        h1, h2 = hash_pair(addr)
        return [peer for peer in sorted(self.filters)
                if self.filters[peer][0].query_hashed(h1, h2)]

    def update_peer(self, snapshot: LFibSnapshot) -> bool:
        """Rebuild one peer's filter if the snapshot is newer; returns True if applied."""
        current = self.filters.get(snapshot.owner)
        if current is not None and current[1] >= snapshot.version:
            return False
        self.filters[snapshot.owner] = (build_filter(snapshot.entries, self.target_fpr),
                                        snapshot.version)
        return True

    def drop_peer(self, peer: int) -> None:
        self.filters.pop(peer, None)

    @property
    def storage_bytes(self) -> int:
        return sum(bf.nbytes for bf, _ in self.filters.values())


def _as_snapshot(owner: int, lfib: LFib | LFibSnapshot | Mapping[int, int]) -> LFibSnapshot:
    if isinstance(lfib, LFibSnapshot):
        return lfib
    if isinstance(lfib, LFib):
        return lfib.snapshot()
    return LFibSnapshot(owner, MappingProxyType(dict(lfib)), 0)


def gfib_rebuild(peer_lfibs: Mapping[int, LFib | LFibSnapshot | Mapping[int, int]],
                 target_fpr: float = DEFAULT_FPR, group_id: int | None = None) -> GFib:
    gfib = GFib(group_id=group_id, target_fpr=target_fpr)
    for peer in sorted(peer_lfibs):
        snap = _as_snapshot(peer, peer_lfibs[peer])
        gfib.filters[peer] = (build_filter(snap.entries, target_fpr), snap.version)
    return gfib


def gfib_lookup(gfib: GFib, address: int) -> list[int]:
    return gfib.lookup(address)


# --- C-LIB ------------------------------------------------------------------


class StaleReportError(ValueError):
    """An L-FIB report older than the one already held."""


class CLib:
    def __init__(self) -> None:
        self.snapshots: dict[int, LFibSnapshot] = {}
        self._where: dict[int, int] = {}
        self.grouping = None

    def locate(self, addr: int) -> int | None:
        return self._where.get(addr)

    def port_of(self, addr: int) -> int | None:
        sw = self._where.get(addr)
        return None if sw is None else self.snapshots[sw].entries.get(addr)

    def hosts_on(self, switch: int) -> Mapping[int, int]:
        snap = self.snapshots.get(switch)
        return snap.entries if snap is not None else {}

    def update(self, switch: int, snapshot: LFibSnapshot) -> list[int]:
        held = self.snapshots.get(switch)
        if held is not None:
            if snapshot.version < held.version:
                raise StaleReportError(
                    f"switch {switch}: report v{snapshot.version} older than v{held.version}")
            if snapshot.version == held.version:
                return []
            for addr in held.entries:
                if self._where.get(addr) == switch:
                    del self._where[addr]
        conflicts = []
        for addr in snapshot.entries:
            other = self._where.get(addr)
            if other is not None and other != switch:
                conflicts.append(addr)
                # the latest report wins; evict the stale claim
                old = self.snapshots[other]
                trimmed = {a: p for a, p in old.entries.items() if a != addr}
                self.snapshots[other] = LFibSnapshot(other, MappingProxyType(trimmed), old.version)
            self._where[addr] = switch
        self.snapshots[switch] = LFibSnapshot(switch, MappingProxyType(dict(snapshot.entries)),
                                              snapshot.version)
        return sorted(conflicts)


def clib_update(clib: CLib, switch: int, lfib_snapshot: LFibSnapshot) -> list[int]:
    return clib.update(switch, lfib_snapshot)
