"""Hosts, switches, flow traces, and the traffic statistics computed over them.

Time is carried in integer microseconds inside traces; public helpers that take
windows accept seconds and convert.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Sequence

import numpy as np

US_PER_S = 1_000_000

# Locally administered unicast prefixes for host and management addresses.
HOST_ADDR_BASE = 0x02_00_00_00_00_00
MGMT_ADDR_BASE = 0x0A_00_00_00_00_00
ADDR_MASK = (1 << 48) - 1

TRACE_FORMAT = "lazyctrl-trace/1"


class TraceFormatError(ValueError):
    """Raised when a trace file cannot be parsed."""


def host_addr(host: int) -> int:
    """48-bit address of a host (its MAC in the overlay)."""
    return HOST_ADDR_BASE | host


def addr_host(addr: int) -> int:
    return addr & ~HOST_ADDR_BASE & ADDR_MASK


@dataclass(frozen=True)
class Topology:
    n_switches: int
    host_attachment: tuple[int, ...]
    host_tenant: tuple[int, ...]
    switch_mgmt_addr: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.n_switches < 1:
            raise ValueError("topology needs at least one switch")
        if len(self.host_attachment) != len(self.host_tenant):
            raise ValueError("host_attachment and host_tenant differ in length")
        if len(self.switch_mgmt_addr) != self.n_switches:
            raise ValueError("one management address per switch is required")
        if len(set(self.switch_mgmt_addr)) != self.n_switches:
            raise ValueError("switch management addresses must be distinct")
        for h, s in enumerate(self.host_attachment):
            if not 0 <= s < self.n_switches:
                raise ValueError(f"host {h} attached to unknown switch {s}")

    @property
    def switches(self) -> range:
        return range(self.n_switches)

    @property
    def n_hosts(self) -> int:
        return len(self.host_attachment)

    @cached_property
    def hosts_by_switch(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.n_switches)]
        for h, s in enumerate(self.host_attachment):
            out[s].append(h)
        return tuple(tuple(x) for x in out)

    @cached_property
    def host_port(self) -> tuple[int, ...]:
        """Local port (1-based) of each host on its switch."""
        ports = [0] * self.n_hosts
        for hosts in self.hosts_by_switch:
            for i, h in enumerate(hosts):
                ports[h] = i + 1
        return tuple(ports)

    @cached_property
    def attachment_array(self) -> np.ndarray:
        return np.asarray(self.host_attachment, dtype=np.int64)


@dataclass(frozen=True, order=True)
class FlowRecord:
    start_us: int
    src: int
    dst: int
    n_packets: int = 1
    payload_profile: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.src == self.dst:
            raise ValueError("flow endpoints must differ")
        if self.start_us < 0:
            raise ValueError("flow start time must be non-negative")
        if self.n_packets < 1:
            raise ValueError("a flow carries at least one packet")

    @property
    def start_time(self) -> float:
        return self.start_us / US_PER_S


@dataclass(frozen=True)
class Trace:
    topology: Topology
    flows: tuple[FlowRecord, ...]

    def __post_init__(self) -> None:
        n = self.topology.n_hosts
        prev = None
        for f in self.flows:
            if not (0 <= f.src < n and 0 <= f.dst < n):
                raise ValueError(f"flow references unknown host: {f}")
            key = (f.start_us, f.src, f.dst)
            if prev is not None and key < prev:
                raise ValueError("flows must be sorted by (start_us, src, dst)")
            prev = key

    @cached_property
    def columns(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(start_us, src_switch, dst_switch) as arrays, in flow order."""
        att = self.topology.attachment_array
        t = np.fromiter((f.start_us for f in self.flows), dtype=np.int64, count=len(self.flows))
        src = np.fromiter((f.src for f in self.flows), dtype=np.int64, count=len(self.flows))
        dst = np.fromiter((f.dst for f in self.flows), dtype=np.int64, count=len(self.flows))
        return t, att[src], att[dst]

    @property
    def duration_us(self) -> int:
        return self.flows[-1].start_us + 1 if self.flows else 0


def sorted_trace(topology: Topology, flows: Iterable[FlowRecord]) -> Trace:
    return Trace(topology, tuple(sorted(flows, key=lambda f: (f.start_us, f.src, f.dst))))


@dataclass(frozen=True, eq=False)
class IntensityMatrix:
    """Symmetric new-flow-rate matrix between switches, normalized to max 1.

    ``scale`` is the rate (flows/s) that maps to 1.0, so ``w * scale``
    recovers absolute rates.
    """

    w: np.ndarray
    scale: float = 1.0

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError("intensity matrix must be square")
        if np.any(w < 0):
            raise ValueError("intensities must be non-negative")
        if not np.allclose(w, w.T):
            raise ValueError("intensity matrix must be symmetric")
        if np.any(np.diag(w) != 0):
            raise ValueError("intensity matrix must have a zero diagonal")
        object.__setattr__(self, "w", w)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @classmethod
    def zeros(cls, n: int) -> IntensityMatrix:
        return cls(np.zeros((n, n)), 0.0)

    @classmethod
    def from_counts(cls, counts: np.ndarray, seconds: float = 1.0) -> IntensityMatrix:
        """Normalize a symmetric count matrix observed over ``seconds``."""
        rates = np.asarray(counts, dtype=float) / seconds
        rates = rates.copy()
        np.fill_diagonal(rates, 0.0)
        top = float(rates.max()) if rates.size else 0.0
        if top <= 0:
            return cls(np.zeros_like(rates), 0.0)
        return cls(rates / top, top)

    @classmethod
    def from_edges(cls, n: int, edges: dict[tuple[int, int], float]) -> IntensityMatrix:
        """Build an un-normalized matrix from ``{(i, j): weight}``; used for fixtures."""
        w = np.zeros((n, n))
        for (i, j), x in edges.items():
            w[i, j] = w[j, i] = x
        return cls(w, 1.0)


def _window_us(window: Sequence[float] | None, trace: Trace) -> tuple[int, int]:
    if window is None:
        return 0, max(trace.duration_us, 1)
    t0, t1 = window
    if t1 <= t0:
        raise ValueError("window end must be after its start")
    return int(round(t0 * US_PER_S)), int(round(t1 * US_PER_S))


def switch_pair_counts(trace: Trace, window: Sequence[float] | None = None) -> np.ndarray:
    """Symmetric matrix of flow counts between distinct switches within the window."""
    t0, t1 = _window_us(window, trace)
    n = trace.topology.n_switches
    counts = np.zeros((n, n), dtype=np.int64)
    if not trace.flows:
        return counts
    t, a, b = trace.columns
    sel = (t >= t0) & (t < t1) & (a != b)
    np.add.at(counts, (a[sel], b[sel]), 1)
    return counts + counts.T


def compute_intensity_matrix(trace: Trace, window: Sequence[float]) -> IntensityMatrix:
    t0, t1 = window
    if t1 <= t0:
        raise ValueError("window end must be after its start")
    return IntensityMatrix.from_counts(switch_pair_counts(trace, window), t1 - t0)


def compute_centrality(trace: Trace, group: Iterable[int],
                       window: Sequence[float] | None = None) -> float:
    """Share of the group's related traffic that stays inside the group.

    Returns 1.0 when no flow touches the group.
    """
    members = set(group)
    if not members:
        raise ValueError("group must be non-empty")
    unknown = [s for s in members if not 0 <= s < trace.topology.n_switches]
    if unknown:
        raise ValueError(f"unknown switch ids: {sorted(unknown)}")
    if not trace.flows:
        return 1.0
    t0, t1 = _window_us(window, trace)
    t, a, b = trace.columns
    mask = np.zeros(trace.topology.n_switches, dtype=bool)
    mask[list(members)] = True
    sel = (t >= t0) & (t < t1)
    ina, inb = mask[a[sel]], mask[b[sel]]
    intra = int(np.count_nonzero(ina & inb))
    crossing = int(np.count_nonzero(ina ^ inb))
    if intra + crossing == 0:
        return 1.0
    return intra / (intra + crossing)


def mean_centrality(trace: Trace, groups: Iterable[Iterable[int]],
                    window: Sequence[float] | None = None) -> float:
    values = [compute_centrality(trace, g, window) for g in groups]
    return float(np.mean(values))


# --- synthetic traces -------------------------------------------------------


def _tenant_blocks(zones: list[tuple[int, int]], size_range: tuple[int, int],
                   rng: np.random.Generator) -> list[tuple[int, int]]:
    """Cut each zone's host range into contiguous tenants sized within ``size_range``.

    A zone smaller than the minimum size becomes a single tenant.
    """
    lo, hi = size_range
    if lo < 1 or hi < lo:
        raise ValueError("hosts_per_tenant_range must satisfy 1 <= min <= max")
    blocks = []
    for start, stop in zones:
        while start < stop:
            left = stop - start
            size = int(rng.integers(lo, hi + 1))
            if left <= hi and (left <= size or left - size < lo):
                size = left
            elif 0 < left - size < lo:
                size = left - lo
            blocks.append((start, start + size))
            start += size
    return blocks


def _block_pairs(start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(stop - start, 1)
    return i + start, j + start


def _pair_key(i: np.ndarray, j: np.ndarray, n: int) -> np.ndarray:
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    return lo * n + hi


def _sample_pairs_outside(excluded: np.ndarray, count: int, n: int,
                          rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` distinct unordered pair keys not in ``excluded``."""
    total = n * (n - 1) // 2
    free = total - len(excluded)
    if count > free:
        raise ValueError("not enough host pairs to sample from")
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    if count * 2 > free:
        i, j = np.triu_indices(n, 1)
        keys = i.astype(np.int64) * n + j
        keys = np.setdiff1d(keys, excluded, assume_unique=False)
        return rng.choice(keys, size=count, replace=False)
    taken = set(excluded.tolist())
    out: list[int] = []
    while len(out) < count:
        need = (count - len(out)) * 2 + 16
        a = rng.integers(0, n, size=need)
        b = rng.integers(0, n - 1, size=need)
        b = b + (b >= a)
        for k in _pair_key(a, b, n).tolist():
            if k not in taken:
                taken.add(k)
                out.append(k)
                if len(out) == count:
                    break
    return np.asarray(out, dtype=np.int64)


def _draw_payloads(count: int, source: Trace | None,
                   rng: np.random.Generator) -> list[tuple[int, tuple[int, ...]]]:
    if source is not None and source.flows:
        idx = rng.integers(0, len(source.flows), size=count)
        return [(source.flows[i].n_packets, source.flows[i].payload_profile) for i in idx.tolist()]
    # Heavy-tailed packet counts: most flows are mice, a few are elephants.
    sizes = 1 + np.floor(rng.lognormal(mean=1.5, sigma=1.2, size=count)).astype(np.int64)
    return [(int(s), ()) for s in sizes.tolist()]


def _build_flows(start_us: np.ndarray, a: np.ndarray, b: np.ndarray,
                 payloads: list[tuple[int, tuple[int, ...]]]) -> list[FlowRecord]:
    order = np.lexsort((b, a, start_us))
    return [FlowRecord(int(start_us[i]), int(a[i]), int(b[i]), payloads[i][0], payloads[i][1])
            for i in order.tolist()]


def generate_synthetic_trace(
    n_switches: int,
    n_hosts: int,
    hosts_per_tenant_range: tuple[int, int] = (20, 100),
    p: float = 90.0,
    q: float = 10.0,
    duration: float = 86_400.0,
    n_flows: int = 100_000,
    payload_source: Trace | None = None,
    seed: int = 0,
    n_zones: int = 5,
) -> Trace:
    """Generate a multi-tenant trace with a tunable share of "hot" host pairs.

    ``p`` percent of the flows pick a pair uniformly from a fixed hot set holding
    ``q`` percent of all unordered host pairs; the rest pick uniformly from all
    pairs. The hot set is filled intra-tenant first, then with pairs inside the
    same placement zone, then at random. Switches are split into ``n_zones``
    runs of consecutive ids; hosts attach to switches in order and tenants are
    contiguous host blocks that never straddle a zone, so both tenants and
    zones are placement-local.
    """
    if n_hosts < 2:
        raise ValueError("need at least two hosts")
    if n_switches < 1:
        raise ValueError("need at least one switch")
    if not 0 <= p <= 100:
        raise ValueError("p must be within [0, 100]")
    if not 0 <= q <= 100 or (q == 0 and p > 0):
        raise ValueError("q must be within (0, 100] when p > 0")
    if n_flows < 0 or duration <= 0:
        raise ValueError("n_flows must be >= 0 and duration > 0")

    if n_zones < 1:
        raise ValueError("n_zones must be >= 1")

    rng = np.random.default_rng(seed)
    attach = (np.arange(n_hosts, dtype=np.int64) * n_switches) // n_hosts
    zone = (attach * min(n_zones, n_switches)) // n_switches
    edges = np.flatnonzero(np.diff(zone)) + 1
    bounds = [0, *edges.tolist(), n_hosts]
    zones = [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]
    blocks = _tenant_blocks(zones, hosts_per_tenant_range, rng)
    tenant = np.empty(n_hosts, dtype=np.int64)
    for t, (a, b) in enumerate(blocks):
        tenant[a:b] = t

    mgmt = rng.choice(1 << 40, size=n_switches, replace=False) + MGMT_ADDR_BASE
    topology = Topology(
        n_switches=n_switches,
        host_attachment=tuple(attach.tolist()),
        host_tenant=tuple(tenant.tolist()),
        switch_mgmt_addr=tuple(int(x) for x in mgmt),
    )

    total_pairs = n_hosts * (n_hosts - 1) // 2
    n_hot_flows = int(round(n_flows * p / 100.0))
    hot = np.zeros(0, dtype=np.int64)
    if n_hot_flows > 0:
        n_hot_pairs = max(1, int(round(total_pairs * q / 100.0)))
        hot = _select_hot_pairs(n_hot_pairs, blocks, zones, tenant, rng)

    duration_us = int(round(duration * US_PER_S))
    start = rng.integers(0, duration_us, size=n_flows)
    a = np.empty(n_flows, dtype=np.int64)
    b = np.empty(n_flows, dtype=np.int64)

    hk = hot[rng.integers(0, len(hot), size=n_hot_flows)] if n_hot_flows else hot
    a[:n_hot_flows], b[:n_hot_flows] = hk // n_hosts, hk % n_hosts
    n_rest = n_flows - n_hot_flows
    ra = rng.integers(0, n_hosts, size=n_rest)
    rb = rng.integers(0, n_hosts - 1, size=n_rest)
    a[n_hot_flows:], b[n_hot_flows:] = ra, rb + (rb >= ra)

    swap = rng.random(n_flows) < 0.5
    a, b = np.where(swap, b, a), np.where(swap, a, b)
    payloads = _draw_payloads(n_flows, payload_source, rng)
    return Trace(topology, tuple(_build_flows(start, a, b, payloads)))


def _select_hot_pairs(count: int, blocks: list[tuple[int, int]],
                      zones: list[tuple[int, int]], tenant: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    n = len(tenant)
    chosen: list[np.ndarray] = []
    remaining = count

    tiers: list[np.ndarray] = []
    intra = [_block_pairs(a, b) for a, b in blocks]
    tiers.append(np.concatenate([i.astype(np.int64) * n + j for i, j in intra]))
    keys = []
    for a, b in zones:
        i, j = _block_pairs(a, b)
        keep = tenant[i] != tenant[j]
        keys.append(i[keep].astype(np.int64) * n + j[keep])
    tiers.append(np.concatenate(keys))

    for tier in tiers:
        if remaining == 0:
            break
        if len(tier) <= remaining:
            chosen.append(tier)
            remaining -= len(tier)
        else:
            chosen.append(rng.choice(tier, size=remaining, replace=False))
            remaining = 0
    taken = np.concatenate(chosen) if chosen else np.zeros(0, dtype=np.int64)
    if remaining:
        taken = np.concatenate([taken, _sample_pairs_outside(taken, remaining, n, rng)])
    return np.sort(taken)


def expand_trace(trace: Trace, extra_fraction: float, window: Sequence[float],
                 seed: int = 0) -> Trace:
    """Add ``extra_fraction`` percent more flows between previously silent host pairs."""
    if extra_fraction < 0:
        raise ValueError("extra_fraction must be non-negative")
    t0, t1 = window
    if t1 <= t0:
        raise ValueError("window end must be after its start")
    n_extra = int(round(len(trace.flows) * extra_fraction / 100.0))
    if n_extra == 0:
        return trace
    n = trace.topology.n_hosts
    rng = np.random.default_rng(seed)
    active = np.unique(_pair_key(
        np.fromiter((f.src for f in trace.flows), dtype=np.int64),
        np.fromiter((f.dst for f in trace.flows), dtype=np.int64), n))
    silent = n * (n - 1) // 2 - len(active)
    if silent <= 0:
        raise ValueError("every host pair already communicates; nothing to expand into")

    if len(active) * 2 > n * (n - 1) // 2:
        i, j = np.triu_indices(n, 1)
        pool = np.setdiff1d(i.astype(np.int64) * n + j, active)
        keys = pool[rng.integers(0, len(pool), size=n_extra)]
    else:
        active_set = set(active.tolist())
        picked: list[int] = []
        while len(picked) < n_extra:
            a = rng.integers(0, n, size=n_extra)
            b = rng.integers(0, n - 1, size=n_extra)
            b = b + (b >= a)
            for k in _pair_key(a, b, n).tolist():
                if k not in active_set:
                    picked.append(k)
                    if len(picked) == n_extra:
                        break
        keys = np.asarray(picked, dtype=np.int64)

    a, b = keys // n, keys % n
    swap = rng.random(n_extra) < 0.5
    a, b = np.where(swap, b, a), np.where(swap, a, b)
    lo, hi = int(round(t0 * US_PER_S)), int(round(t1 * US_PER_S))
    start = rng.integers(lo, hi, size=n_extra)
    payloads = _draw_payloads(n_extra, trace, rng)
    extra = _build_flows(start, a, b, payloads)
    return sorted_trace(trace.topology, list(trace.flows) + extra)


# --- file format --------------------------------------------------------------


def write_trace(trace: Trace, out: IO[str]) -> None:
    topo = trace.topology
    header = {
        "format": TRACE_FORMAT,
        "n_switches": topo.n_switches,
        "host_attachment": list(topo.host_attachment),
        "host_tenant": list(topo.host_tenant),
        "mgmt_addrs": [f"{a:012x}" for a in topo.switch_mgmt_addr],
    }
    out.write(json.dumps(header, separators=(",", ":")) + "\n")
    for f in trace.flows:
        line = f"{f.start_us},{f.src},{f.dst},{f.n_packets}"
        if f.payload_profile:
            line += "," + ";".join(str(x) for x in f.payload_profile)
        out.write(line + "\n")


def dumps_trace(trace: Trace) -> str:
    buf = io.StringIO()
    write_trace(trace, buf)
    return buf.getvalue()


def read_trace(src: IO[str]) -> Trace:
    first = src.readline()
    try:
        header = json.loads(first)
        if header.get("format", TRACE_FORMAT) != TRACE_FORMAT:
            raise TraceFormatError(f"unsupported trace format {header.get('format')!r}")
        topo = Topology(
            n_switches=int(header["n_switches"]),
            host_attachment=tuple(int(x) for x in header["host_attachment"]),
            host_tenant=tuple(int(x) for x in header["host_tenant"]),
            switch_mgmt_addr=tuple(int(x, 16) for x in header["mgmt_addrs"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, TraceFormatError):
            raise
        raise TraceFormatError(f"bad trace header: {exc}") from exc

    flows = []
    for lineno, line in enumerate(src, start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) not in (4, 5):
            raise TraceFormatError(f"line {lineno}: expected 4 or 5 fields, got {len(parts)}")
        try:
            payload = tuple(int(x) for x in parts[4].split(";")) if len(parts) == 5 else ()
            flows.append(FlowRecord(int(parts[0]), int(parts[1]), int(parts[2]),
                                    int(parts[3]), payload))
        except ValueError as exc:
            raise TraceFormatError(f"line {lineno}: {exc}") from exc
    try:
        return Trace(topo, tuple(flows))
    except ValueError as exc:
        raise TraceFormatError(str(exc)) from exc


def load_trace(path: str | os.PathLike) -> Trace:
    with open(path, encoding="ascii") as fh:
        return read_trace(fh)


def topology_from_layout(hosts_per_switch: Sequence[int], tenants: Sequence[int] | None = None,
                         mgmt_addrs: Sequence[int] | None = None) -> Topology:
    """Small hand-built topologies for tests and scripted scenarios."""
    attach = [s for s, k in enumerate(hosts_per_switch) for _ in range(k)]
    tenant = list(tenants) if tenants is not None else [0] * len(attach)
    n = len(hosts_per_switch)
    mgmt = list(mgmt_addrs) if mgmt_addrs is not None else [MGMT_ADDR_BASE + i for i in range(n)]
    return Topology(n, tuple(attach), tuple(tenant), tuple(mgmt))


def expected_hot_share(p: float, q: float) -> float:
    """Fraction of flows landing on hot pairs: hot draws plus uniform draws that hit them."""
    return p / 100.0 + (1 - p / 100.0) * q / 100.0


__all__ = [
    "FlowRecord", "IntensityMatrix", "Topology", "Trace", "TraceFormatError",
    "compute_centrality", "compute_intensity_matrix", "dumps_trace", "expand_trace",
    "generate_synthetic_trace", "host_addr", "addr_host", "load_trace", "mean_centrality",
    "read_trace", "sorted_trace", "switch_pair_counts", "topology_from_layout", "write_trace",
]
