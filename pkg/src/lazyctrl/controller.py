"""The lazy central controller: location base, PacketIn handling, group setup
(designated switch, backups, keep-alive wheel), ARP relay and the regroup
trigger policy."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .fib import CLib
from .grouping import Grouping, GroupingDelta, Thresholds, inc_update, w_inter
from .switch import Encap, ForwardLocal, Packet, Rule, Timing
from .traffic import US_PER_S, IntensityMatrix, Topology, addr_host

log = logging.getLogger(__name__)


class UnknownSwitchError(KeyError):
    pass


@dataclass(frozen=True)
class ControllerConfig:
    high_factor: float = 1.3
    low_factor: float = 1.0
    regroup_min_interval_s: float = 120.0
    load_window_s: int = 60
    rule_idle_timeout_s: float = 60.0
    rule_priority: int = 10
    n_backups: int = 1
    # skip cross-group ARP relay when a tenant lives entirely in one group
    arp_blocking: bool = False


@dataclass(frozen=True)
class GroupConfig:
    group_id: int
    members: tuple[int, ...]
    designated: int
    backups: tuple[int, ...]
    wheel: dict[int, tuple[int, int]]
    timing: Timing
    size_limit: int

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("a group needs at least one member")
        if self.designated not in self.members:
            raise ValueError("designated switch must be a group member")
        if any(b not in self.members or b == self.designated for b in self.backups):
            raise ValueError("backups must be non-designated members")
        if len(self.members) > self.size_limit:
            raise ValueError("group exceeds the size limit")
        # the wheel must be one cycle visiting every member
        seen, node = [], self.members[0]
        for _ in self.members:
            seen.append(node)
            node = self.wheel[node][1]
        if node != self.members[0] or sorted(seen) != sorted(self.members):
            raise ValueError("wheel is not a single cycle over the members")

    def upstream(self, switch: int) -> int:
        return self.wheel[switch][0]

    def downstream(self, switch: int) -> int:
        return self.wheel[switch][1]

    def reselect_designated(self, exclude: int | None = None) -> GroupConfig:
        """Promote the first usable backup; the old designated switch is dropped."""
        avoid = {self.designated, exclude}
        pool = [b for b in self.backups if b not in avoid]
        if not pool:
            pool = [m for m in self.members if m not in avoid]
        if not pool:
            return self
        new = pool[0]
        rest = [m for m in self.members if m not in avoid and m != new]
        backups = tuple([b for b in self.backups if b not in avoid and b != new]
                        + rest)[:max(1, len(self.backups))]
        return GroupConfig(self.group_id, self.members, new, backups, self.wheel,
                           self.timing, self.size_limit)


def _wheel(members: tuple[int, ...]) -> dict[int, tuple[int, int]]:
    n = len(members)
    return {m: (members[(i - 1) % n], members[(i + 1) % n]) for i, m in enumerate(members)}


def make_group_config(topology: Topology, group_id: int, switches, size_limit: int,
                      seed: int, n_backups: int = 1,
                      timing: Timing | None = None) -> GroupConfig:
    members = tuple(sorted(switches, key=lambda s: topology.switch_mgmt_addr[s]))
    if not members:
        raise ValueError(f"group {group_id} is empty")
    # seeded by the member set, so an untouched group keeps its designated switch
    rng = np.random.default_rng([seed & 0xFFFFFFFF, *sorted(members)])
    designated = members[int(rng.integers(len(members)))]
    others = [m for m in members if m != designated]
    k = min(n_backups, len(others))
    backups = tuple(others[i] for i in sorted(rng.choice(len(others), size=k, replace=False)))
    return GroupConfig(group_id, members, designated, backups, _wheel(members),
                       timing or Timing(), size_limit)


def setup_groups(topology: Topology, grouping: Grouping, seed: int = 0, n_backups: int = 1,
                 timing: Timing | None = None) -> list[GroupConfig]:
    return [make_group_config(topology, gid, g, grouping.size_limit, seed, n_backups, timing)
            for gid, g in enumerate(grouping.groups)]


class LoadWindow:
    """PacketIn counts in one-second buckets over a sliding window."""

    def __init__(self, span_s: int = 60) -> None:
        self.span_s = span_s
        self._buckets: deque[list[int]] = deque()

    def add(self, now_us: int, count: int = 1) -> None:
        sec = now_us // US_PER_S
        if self._buckets and self._buckets[-1][0] == sec:
            self._buckets[-1][1] += count
        else:
            self._buckets.append([sec, count])
        self._prune(sec)

    def _prune(self, sec: int) -> None:
        while self._buckets and self._buckets[0][0] <= sec - self.span_s:
            self._buckets.popleft()

    def total(self, now_us: int) -> int:
        sec = now_us // US_PER_S
        self._prune(sec)
        return sum(c for s, c in self._buckets if s <= sec)


@dataclass(frozen=True)
class FlowMod:
    switch: int
    rule: Rule


@dataclass(frozen=True)
class RelayArp:
    designated: tuple[int, ...]
    packet: Packet


@dataclass(frozen=True)
class DropPacket:
    packet: Packet
    reason: str


ControllerAction = Union[FlowMod, RelayArp, DropPacket]


@dataclass
class ControllerState:
    topology: Topology
    grouping: Grouping
    configs: list[GroupConfig]
    clib: CLib = field(default_factory=CLib)
    config: ControllerConfig = field(default_factory=ControllerConfig)
    seed: int = 0
    load_window: LoadWindow | None = None
    last_regroup_time: int = 0
    last_regroup_load: float | None = None
    packet_in_total: int = 0

    def __post_init__(self) -> None:
        if self.load_window is None:
            self.load_window = LoadWindow(self.config.load_window_s)
        self.clib.grouping = self.grouping

    @property
    def group_of(self) -> dict[int, int]:
        return self.grouping.assignment

    def tenant_directory(self) -> dict[int, set[tuple[int, int]]]:
        tenants = self.topology.host_tenant
        group_of = self.group_of
        out: dict[int, set[tuple[int, int]]] = {}
        for sw, snap in self.clib.snapshots.items():
            for addr in snap.entries:
                out.setdefault(tenants[addr_host(addr)], set()).add((group_of[sw], sw))
        return out


def handle_packet_in(state: ControllerState, ingress: int, packet: Packet,
                     now: int = 0) -> list[ControllerAction]:
    """React to an escalated packet with flow rules, an ARP relay, or a drop."""
    if ingress not in state.group_of:
        raise UnknownSwitchError(f"PacketIn from unknown switch {ingress}")
    state.load_window.add(now)
    state.packet_in_total += 1

    if packet.is_arp_request:
        home = state.group_of[ingress]
        groups = {gid for gid, _ in state.tenant_directory().get(packet.tenant_vlan, ())}
        if state.config.arp_blocking and groups <= {home}:
            return []
        targets = tuple(sorted(state.configs[g].designated for g in groups if g != home))
        return [RelayArp(targets, packet)] if targets else []

    egress = state.clib.locate(packet.dst_addr)
    if egress is None:
        log.info("PacketIn for unknown destination %012x dropped", packet.dst_addr)
        return [DropPacket(packet, "unknown_destination")]
    port = state.clib.port_of(packet.dst_addr)
    cfg = state.config
    idle = int(cfg.rule_idle_timeout_s * US_PER_S)

    def rule(action) -> Rule:
        return Rule(action, cfg.rule_priority, packet.src_addr, packet.dst_addr,
                    idle_timeout_us=idle)

    if egress == ingress:
        return [FlowMod(ingress, rule(ForwardLocal(port)))]
    return [FlowMod(ingress, rule(Encap(egress))), FlowMod(egress, rule(ForwardLocal(port)))]


def controller_load(state: ControllerState, now: int) -> float:
    """PacketIns received over the trailing load window (one minute by default)."""
    return float(state.load_window.total(now))


@dataclass
class RegroupResult:
    grouping: Grouping
    delta: GroupingDelta
    configs: list[GroupConfig]
    changed_groups: list[int]


def regroup_due(state: ControllerState, now: int) -> bool:
    """Both trigger conditions: enough load growth and enough time since the last update.

    The first call after a full load window only records the reference load.
    """
    cfg = state.config
    load = controller_load(state, now)
    if state.last_regroup_load is None:
        if now - state.last_regroup_time >= cfg.load_window_s * US_PER_S:
            state.last_regroup_load = load
        return False
    if now - state.last_regroup_time < cfg.regroup_min_interval_s * US_PER_S:
        return False
    return load > 0 and load >= cfg.high_factor * state.last_regroup_load


def maybe_regroup(state: ControllerState, now: int,
                  w_current: IntensityMatrix | np.ndarray) -> RegroupResult | None:
    """Run the incremental update when :func:`regroup_due` says so."""
    if not regroup_due(state, now):
        return None
    cfg = state.config
    load = controller_load(state, now)
    current = state.grouping
    base = w_inter(current, w_current)

    def probe(g: Grouping) -> float:
        return load * (w_inter(g, w_current) / base) if base > 0 else load

    thresholds = Thresholds.around(state.last_regroup_load, cfg.high_factor, cfg.low_factor)
    new, delta = inc_update(current, w_current, probe, thresholds)
    state.grouping = new
    state.clib.grouping = new
    state.last_regroup_time = now
    if delta.moved:
        state.last_regroup_load = probe(new)
    # an update that moved nothing leaves the growth outstanding; only the timer restarts

    old_sets = [set(g) for g in current.groups]
    changed = [gid for gid, g in enumerate(new.groups)
               if gid >= len(old_sets) or set(g) != old_sets[gid]]
    configs = list(state.configs)
    for gid in changed:
        timing = configs[gid].timing if gid < len(configs) else None
        cfg_new = make_group_config(state.topology, gid, new.groups[gid], new.size_limit,
                                    state.seed, cfg.n_backups, timing)
        if gid < len(configs):
            configs[gid] = cfg_new
        else:
            configs.append(cfg_new)
    state.configs = configs
    log.info("regroup at %.0f s: load %.0f, %d switches moved", now / US_PER_S, load,
             len(delta.moved))
    return RegroupResult(new, delta, configs, changed)
