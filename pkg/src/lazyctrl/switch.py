"""Edge-switch state machine: flow table, local/group forwarding tables, the
packet forwarding routine with overlay encapsulation, ARP handling and L-FIB
dissemination through the group's designated switch."""

from __future__ import annotations

import enum
import itertools
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Literal, Union

from .fib import GFib, LFib, LFibSnapshot
from .messages import CONTROLLER, Channel, ControlMessage, MessageKind


class PacketKind(enum.Enum):
    PLAIN = "Plain"
    ENCAPSULATED = "Encapsulated"


@dataclass(frozen=True)
class Packet:
    kind: PacketKind
    src_addr: int
    dst_addr: int
    tenant_vlan: int
    outer_dst: int | None = None
    flow_id: int = -1
    is_arp_request: bool = False
    in_port: int | None = None
    outer_src: int | None = None

    def __post_init__(self) -> None:
        if (self.kind is PacketKind.ENCAPSULATED) != (self.outer_dst is not None):
            raise ValueError("outer_dst is set exactly when the packet is encapsulated")

    def encapsulate(self, dst_switch: int, src_switch: int) -> Packet:
        return replace(self, kind=PacketKind.ENCAPSULATED, outer_dst=dst_switch,
                       outer_src=src_switch, in_port=None)

    def decapsulate(self) -> Packet:
        return replace(self, kind=PacketKind.PLAIN, outer_dst=None, outer_src=None)


@dataclass(frozen=True)
class Timing:
    sync_period_s: float = 1.0
    keepalive_period_s: float = 1.0


# --- flow table -------------------------------------------------------------


@dataclass(frozen=True)
class ForwardLocal:
    port: int


@dataclass(frozen=True)
class Encap:
    switch: int


@dataclass(frozen=True)
class ToController:
    pass


@dataclass(frozen=True)
class Discard:
    pass


RuleAction = Union[ForwardLocal, Encap, ToController, Discard]


@dataclass
class Rule:
    action: RuleAction
    priority: int = 10
    match_src: int | None = None
    match_dst: int | None = None
    match_tenant: int | None = None
    idle_timeout_us: int | None = None
    rule_id: int = -1
    last_used_us: int = 0

    def matches(self, packet: Packet) -> bool:
        return ((self.match_src is None or self.match_src == packet.src_addr)
                and (self.match_dst is None or self.match_dst == packet.dst_addr)
                and (self.match_tenant is None or self.match_tenant == packet.tenant_vlan))

    def expired(self, now_us: int) -> bool:
        if self.idle_timeout_us is None:
            return False
        return now_us - self.last_used_us > self.idle_timeout_us

    @property
    def match_key(self) -> tuple[int | None, int | None, int | None, int]:
        return (self.match_src, self.match_dst, self.match_tenant, self.priority)


class FlowTable:
    """Prioritized rules; exact (src, dst) rules are indexed for O(1) lookup.

    Equal-priority ties go to the earliest installed rule.
    """

    def __init__(self) -> None:
        self._rules: dict[int, Rule] = {}
        self._by_key: dict[tuple, int] = {}
        self._exact: dict[tuple[int, int], list[int]] = {}
        self._wild: list[int] = []
        self._ids = itertools.count()

    def __len__(self) -> int:
        return len(self._rules)

    @property
    def rules(self) -> list[Rule]:
        return [self._rules[i] for i in sorted(self._rules)]

    def install(self, rule: Rule, now_us: int = 0) -> int:
        existing = self._by_key.get(rule.match_key)
        if existing is not None:
            held = self._rules[existing]
            held.action, held.idle_timeout_us, held.last_used_us = \
                rule.action, rule.idle_timeout_us, now_us
            return existing
        rid = next(self._ids)
        rule = replace(rule, rule_id=rid, last_used_us=now_us)
        self._rules[rid] = rule
        self._by_key[rule.match_key] = rid
        if rule.match_src is not None and rule.match_dst is not None:
            self._exact.setdefault((rule.match_src, rule.match_dst), []).append(rid)
        else:
            self._wild.append(rid)
        return rid

    def remove(self, rule_id: int) -> None:
        rule = self._rules.pop(rule_id)
        del self._by_key[rule.match_key]
        pair = (rule.match_src, rule.match_dst)
        if pair in self._exact:
            self._exact[pair].remove(rule_id)
            if not self._exact[pair]:
                del self._exact[pair]
        else:
            self._wild.remove(rule_id)

    def expire(self, now_us: int) -> int:
        dead = [rid for rid, r in self._rules.items() if r.expired(now_us)]
        for rid in dead:
            self.remove(rid)
        return len(dead)

    def lookup(self, packet: Packet, now_us: int = 0) -> Rule | None:
        cands = list(self._exact.get((packet.src_addr, packet.dst_addr), ())) + self._wild
        best: Rule | None = None
        for rid in cands:
            rule = self._rules[rid]
            if rule.expired(now_us):
                self.remove(rid)
                continue
            if rule.matches(packet) and (best is None or (rule.priority, -rule.rule_id)
                                         > (best.priority, -best.rule_id)):
                best = rule
        if best is not None:
            best.last_used_us = now_us
        return best


# --- actions ----------------------------------------------------------------


@dataclass(frozen=True)
class DeliverLocal:
    port: int
    packet: Packet
    via: str = "lfib"


@dataclass(frozen=True)
class SendEncapsulated:
    dst: int
    packet: Packet
    via: str = "gfib"


@dataclass(frozen=True)
class SendToController:
    packet: Packet


@dataclass(frozen=True)
class Drop:
    packet: Packet
    reason: str = "false_positive"


@dataclass(frozen=True)
class FloodLocalPorts:
    ports: tuple[int, ...]
    packet: Packet


@dataclass(frozen=True)
class ForwardToDesignated:
    designated: int
    packet: Packet


@dataclass(frozen=True)
class GroupBroadcast:
    targets: tuple[int, ...]
    packet: Packet


@dataclass(frozen=True)
class EscalateToController:
    packet: Packet


Action = Union[DeliverLocal, SendEncapsulated, SendToController, Drop, FloodLocalPorts,
               ForwardToDesignated, GroupBroadcast, EscalateToController]


# --- switch state -----------------------------------------------------------


@dataclass
class SwitchState:
    id: int
    lfib: LFib
    gfib: GFib = field(default_factory=GFib)
    flow_table: FlowTable = field(default_factory=FlowTable)
    group: int = 0
    designated_id: int | None = None
    members: tuple[int, ...] = ()
    wheel_neighbors: tuple[int, int] | None = None
    timing: Timing = field(default_factory=Timing)
    port_tenant: dict[int, int] = field(default_factory=dict)
    # optional: hand mis-forwarded packets to the controller instead of dropping
    misforward_to_controller: bool = False
    # plain reactive OpenFlow behaviour: every flow-table miss goes to the controller
    reactive_only: bool = False
    last_emitted_version: int = -1
    counters: Counter = field(default_factory=Counter)
    _seq: itertools.count = field(default_factory=itertools.count, repr=False)

    @property
    def designated(self) -> bool:
        return self.designated_id == self.id

    def next_seq(self) -> int:
        return next(self._seq)

    def mark_synchronized(self) -> None:
        self.last_emitted_version = self.lfib.version


def _apply_rule(state: SwitchState, rule: Rule, packet: Packet) -> Action:
    act = rule.action
    if isinstance(act, ForwardLocal):
        state.counters["forwarded_local"] += 1
        return DeliverLocal(act.port, packet, via="rule")
    if isinstance(act, Encap):
        state.counters["encapsulated"] += 1
        return SendEncapsulated(act.switch, packet.encapsulate(act.switch, state.id), via="rule")
    if isinstance(act, ToController):
        state.counters["escalated"] += 1
        return SendToController(packet)
    state.counters["dropped_rule"] += 1
    return Drop(packet, reason="rule")


def handle_packet(state: SwitchState, packet: Packet, now: int = 0) -> list[Action]:
    """The forwarding routine: flow table, then L-FIB, then G-FIB, else controller.

    Encapsulated packets are decapsulated and delivered only on an L-FIB hit;
    a miss means the sender followed a Bloom-filter false positive.
    """
    if packet.kind is PacketKind.PLAIN:
        rule = state.flow_table.lookup(packet, now)
        if rule is not None:
            return [_apply_rule(state, rule, packet)]
        if state.reactive_only:
            state.counters["escalated"] += 1
            return [SendToController(packet)]
        port = state.lfib.lookup(packet.dst_addr)
        if port is not None:
            state.counters["forwarded_local"] += 1
            return [DeliverLocal(port, packet)]
        targets = state.gfib.lookup(packet.dst_addr)
        if not targets:
            state.counters["escalated"] += 1
            return [SendToController(packet)]
        state.counters["encapsulated"] += len(targets)
        return [SendEncapsulated(t, packet.encapsulate(t, state.id)) for t in targets]

    inner = packet.decapsulate()
    port = state.lfib.lookup(inner.dst_addr)
    if port is None:
        if state.misforward_to_controller:
            state.counters["escalated"] += 1
            return [SendToController(inner)]
        state.counters["dropped_false_positive"] += 1
        return [Drop(inner)]
    state.counters["forwarded_local"] += 1
    return [DeliverLocal(port, inner)]


ArpSource = Literal["host", "member", "broadcast", "controller"]


def _tenant_ports(state: SwitchState, tenant: int, exclude: int | None) -> tuple[int, ...]:
    return tuple(sorted(p for p, t in state.port_tenant.items() if t == tenant and p != exclude))


def handle_arp(state: SwitchState, arp_request: Packet, now: int = 0,
               source: ArpSource = "host") -> list[Action]:
    """Three-level ARP cascade: local flood, group, then controller.

    ``source`` says how the request reached this switch: from a local host,
    forwarded by a group member to the designated switch, broadcast by the
    designated switch, or relayed by the controller from another group.
    """
    if not arp_request.is_arp_request:
        raise ValueError("handle_arp expects an ARP request")
    pkt = arp_request
    actions: list[Action] = []
    if source == "host":
        if pkt.in_port is not None:
            state.lfib.learn(pkt.src_addr, pkt.in_port)
        actions.append(FloodLocalPorts(_tenant_ports(state, pkt.tenant_vlan, pkt.in_port), pkt))
    if state.lfib.lookup(pkt.dst_addr) is not None:
        if source != "host":
            actions.append(FloodLocalPorts(_tenant_ports(state, pkt.tenant_vlan, None), pkt))
        state.counters["arp_local"] += 1
        return actions
    if source == "broadcast":
        return actions

    targets = state.gfib.lookup(pkt.dst_addr)
    if targets:
        state.counters["arp_group"] += 1
        return actions + [SendEncapsulated(t, pkt.encapsulate(t, state.id)) for t in targets]
    if not state.designated:
        if state.designated_id is None:
            state.counters["arp_escalated"] += 1
            return actions + [EscalateToController(pkt)]
        state.counters["arp_to_designated"] += 1
        return actions + [ForwardToDesignated(state.designated_id, pkt)]
    peers = tuple(m for m in state.members if m != state.id)
    if peers:
        actions.append(GroupBroadcast(peers, pkt))
    if source != "controller":
        state.counters["arp_escalated"] += 1
        actions.append(EscalateToController(pkt))
    return actions


# --- L-FIB dissemination ----------------------------------------------------


def _relay(state: SwitchState, snapshot: LFibSnapshot) -> list[ControlMessage]:
    out = [ControlMessage(Channel.PEER_LINK, MessageKind.LFIB_UPDATE, state.id, m,
                          snapshot, state.next_seq())
           for m in state.members if m not in (state.id, snapshot.owner)]
    out.append(ControlMessage(Channel.STATE_LINK, MessageKind.STATE_REPORT, state.id,
                              CONTROLLER, snapshot, state.next_seq()))
    return out


def emit_lfib_update(state: SwitchState) -> list[ControlMessage]:
    """Messages announcing this switch's L-FIB if it changed since the last emission.

    A regular member sends one update to the designated switch; the designated
    switch relays its own update straight to its peers and the controller.
    """
    if state.lfib.version <= state.last_emitted_version:
        return []
    snap = state.lfib.snapshot()
    state.last_emitted_version = snap.version
    if state.designated:
        return _relay(state, snap)
    if state.designated_id is None:
        return [ControlMessage(Channel.STATE_LINK, MessageKind.STATE_REPORT, state.id,
                               CONTROLLER, snap, state.next_seq())]
    return [ControlMessage(Channel.PEER_LINK, MessageKind.LFIB_UPDATE, state.id,
                           state.designated_id, snap, state.next_seq())]


def apply_lfib_update(state: SwitchState, snapshot: LFibSnapshot) -> bool:
    """Refresh the G-FIB filter of a group peer; ignores self and strangers."""
    if snapshot.owner == state.id or snapshot.owner not in state.members:
        return False
    return state.gfib.update_peer(snapshot)


def receive_lfib_update(state: SwitchState, msg: ControlMessage) -> list[ControlMessage]:
    """Apply an incoming update; the designated switch also fans it out."""
    snap: LFibSnapshot = msg.payload
    apply_lfib_update(state, snap)
    if state.designated and msg.src == snap.owner:
        return _relay(state, snap)
    return []
