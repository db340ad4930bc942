"""Deterministic discrete-event simulation of edge switches, the lazy controller
and the links between them, replaying a flow trace.

Only the first packet of each flow is simulated; it decides whether the
controller is involved. Links have fixed latencies and no queuing.
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
import itertools
import json
import logging
import math
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from ._io import atomic_write_text
from .config import SimConfig
from .controller import (ControllerState, DropPacket, FlowMod, GroupConfig, controller_load,
                         handle_packet_in, maybe_regroup, regroup_due, setup_groups)
from .failover import (DETECTION_ROUNDS, SCRIPT_KINDS, FaultKind, LinkHealth, RebootAndPoll,
                       ReselectDesignated, combine_rounds, diagnose, execute_plan,
                       plan_recovery, run_detection_round)
from .fib import LFib, LFibSnapshot, build_filter
from .grouping import Grouping, ini_group
from .messages import CONTROLLER, Channel, ControlMessage, MessageKind
from .switch import (DeliverLocal, Drop, FlowTable, Packet, PacketKind, SendEncapsulated,
                     SendToController, SwitchState, emit_lfib_update, handle_packet,
                     receive_lfib_update)
from .traffic import (US_PER_S, IntensityMatrix, Trace, compute_intensity_matrix, host_addr,
                      load_trace)

log = logging.getLogger(__name__)

MINUTE_US = 60 * US_PER_S
HOUR_US = 3600 * US_PER_S


class EventKind(enum.IntEnum):
    FLOW_ARRIVAL = 0
    PACKET_DELIVERY = 1
    TIMER_FIRE = 2
    FAULT_INJECT = 3
    TRACE_END = 4


class Event(NamedTuple):
    time_us: int
    seq: int
    kind: EventKind
    target: int
    payload: Any


class FlowClass(str, enum.Enum):
    LOCAL_HIT = "LocalHit"
    INTRA_GROUP = "IntraGroup"
    INTER_GROUP_CACHED = "InterGroupCached"
    VIA_CONTROLLER = "InterGroupViaController"
    UNDELIVERED = "Undelivered"


_CLASS_ORDER = list(FlowClass)


@dataclass(frozen=True)
class FaultSpec:
    at_s: float
    kind: str
    subject: int


def parse_fault_script(text: str) -> list[FaultSpec]:
    """Lines of ``at_s,kind,subject``; blank lines and ``#`` comments are ignored."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3 or parts[1] not in SCRIPT_KINDS:
            raise ValueError(f"fault script line {lineno}: expected at_s,kind,subject "
                             f"with kind in {SCRIPT_KINDS}")
        try:
            out.append(FaultSpec(float(parts[0]), parts[1], int(parts[2])))
        except ValueError:
            raise ValueError(f"fault script line {lineno}: bad number") from None
    return sorted(out, key=lambda f: f.at_s)


@dataclass
class MetricsReport:
    mode: str
    n_flows: int
    duration_s: float
    packet_in_per_hour: list[int]
    packet_in_per_minute: list[int]
    controller_load_per_minute: list[float]
    w_inter_per_minute: list[float]
    regroup_events: list[dict]
    classification: dict[str, int]
    first_packet_latency_us: dict[str, float]
    bf_false_positive_drops: int
    storage_bytes_per_switch: list[int]
    messages: dict[str, int]
    verdicts: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def packet_in_total(self) -> int:
        return sum(self.packet_in_per_hour)

    @property
    def regroups_per_hour(self) -> list[int]:
        out = [0] * len(self.packet_in_per_hour)
        for ev in self.regroup_events:
            out[min(int(ev["time_s"] // 3600), len(out) - 1)] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "n_flows": self.n_flows,
            "duration_s": self.duration_s,
            "packet_in_total": self.packet_in_total,
            "packet_in_per_hour": self.packet_in_per_hour,
            "packet_in_per_minute": self.packet_in_per_minute,
            "controller_load_per_minute": self.controller_load_per_minute,
            "w_inter_per_minute": self.w_inter_per_minute,
            "regroup_events": self.regroup_events,
            "regroups_per_hour": self.regroups_per_hour,
            "classification": self.classification,
            "first_packet_latency_us": self.first_packet_latency_us,
            "bf_false_positive_drops": self.bf_false_positive_drops,
            "storage_bytes_per_switch": self.storage_bytes_per_switch,
            "messages": self.messages,
            "verdicts": self.verdicts,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> MetricsReport:
        names = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in names})

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["minute", "packet_in", "controller_load", "w_inter", "regroups"])
        per_min = Counter(int(ev["time_s"] // 60) for ev in self.regroup_events)
        for m, pin in enumerate(self.packet_in_per_minute):
            w.writerow([m, pin, _fmt(self.controller_load_per_minute[m]),
                        _fmt(self.w_inter_per_minute[m]), per_min.get(m, 0)])
        return buf.getvalue()

    def write(self, json_path, csv_path=None) -> None:
        atomic_write_text(json_path, self.to_json())
        if csv_path is not None:
            atomic_write_text(csv_path, self.to_csv())


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _r(x: float) -> float:
    return float(f"{x:.12g}")


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


class Simulation:
    def __init__(self, config: SimConfig, trace: Trace,
                 faults: list[FaultSpec] | None = None) -> None:
        self.cfg = config
        self.trace = trace
        self.topo = trace.topology
        self.faults = faults or []
        n = self.topo.n_switches
        if config.duration_s is not None:
            self.duration_us = int(round(config.duration_s * US_PER_S))
        else:
            self.duration_us = max(MINUTE_US, math.ceil(trace.duration_us / MINUTE_US) * MINUTE_US)
        self.n_minutes = math.ceil(self.duration_us / MINUTE_US)
        self.n_hours = math.ceil(self.duration_us / HOUR_US)
        lat = config.latency
        self.e2c, self.e2e, self.local = (lat.edge_to_controller_us, lat.edge_to_edge_us,
                                          lat.local_us)

        self.flows = [f for f in trace.flows if f.start_us < self.duration_us]
        nf = len(self.flows)
        self.flow_class = np.full(nf, -1, dtype=np.int8)
        self.flow_latency = np.zeros(nf, dtype=np.int64)
        self.via_ctrl = np.zeros(nf, dtype=bool)
        self.encap_via: dict[int, str] = {}

        self.switches = self._build_switches()
        self.grouping = self._initial_grouping()
        configs = setup_groups(self.topo, self.grouping, config.seed,
                               config.controller.n_backups, config.timing)
        self.ctrl = ControllerState(self.topo, self.grouping, configs, config=config.controller,
                                    seed=config.seed)
        for s in range(n):
            self.ctrl.clib.update(s, self.switches[s].lfib.snapshot())
        for gc in configs:
            self._apply_group_config(gc)
        if config.mode != "baseline":
            self._initial_gfibs(configs)

        self.health = LinkHealth()
        self.rounds: dict[int, list] = {}
        self.window_id = 0
        self.rebooting: set[int] = set()

        self.counts = np.zeros((n, n), dtype=np.int64)
        self.window: deque[tuple[int, int, int]] = deque()
        self.window_us = int(config.intensity_window_s * US_PER_S)

        self.pin_minute = np.zeros(self.n_minutes, dtype=np.int64)
        self.load_minute = [0.0] * self.n_minutes
        self.winter_minute = [0.0] * self.n_minutes
        self.regroups: list[dict] = []
        self.verdicts: list[dict] = []
        self.messages: Counter = Counter()
        self.fp_drops = 0

        self._seq = itertools.count()
        self.queue: list[Event] = []

    # --- setup -------------------------------------------------------------

    def _build_switches(self) -> list[SwitchState]:
        topo, cfg = self.topo, self.cfg
        out = []
        for s, hosts in enumerate(topo.hosts_by_switch):
            entries = {host_addr(h): topo.host_port[h] for h in hosts}
            ports = {topo.host_port[h]: topo.host_tenant[h] for h in hosts}
            st = SwitchState(s, LFib(s, entries), port_tenant=ports,
                             misforward_to_controller=cfg.misforward_to_controller,
                             reactive_only=cfg.mode == "baseline")
            st.gfib.target_fpr = cfg.target_fpr
            st.mark_synchronized()
            out.append(st)
        return out

    def _initial_grouping(self) -> Grouping:
        n = self.topo.n_switches
        if self.cfg.mode == "baseline":
            return Grouping(tuple(frozenset({s}) for s in range(n)), 1)
        limit = self.cfg.size_limit or math.ceil(n / 5)
        t1 = min(self.cfg.initial_window_s, self.duration_us / US_PER_S)
        w0 = compute_intensity_matrix(self.trace, (0.0, t1))
        return ini_group(w0, limit, seed=self.cfg.seed, k=self.cfg.n_groups)

    def _initial_gfibs(self, configs: list[GroupConfig]) -> None:
        filters = {s: (build_filter(st.lfib.snapshot().entries, self.cfg.target_fpr),
                       st.lfib.version) for s, st in enumerate(self.switches)}
        for gc in configs:
            for m in gc.members:
                st = self.switches[m]
                st.gfib.filters = {p: filters[p] for p in sorted(gc.members) if p != m}

    def _apply_group_config(self, gc: GroupConfig) -> None:
        for m in gc.members:
            self._apply_group_config_one(m, gc)

    # --- queue -------------------------------------------------------------

    def push(self, t: int, kind: EventKind, target: int, payload: Any = None) -> None:
        heapq.heappush(self.queue, Event(t, next(self._seq), kind, target, payload))

    def send(self, t: int, msg: ControlMessage, latency: int) -> None:
        self.messages[msg.kind.value] += 1
        self.push(t + latency, EventKind.PACKET_DELIVERY, msg.dst, msg)

    def _ctrl_msg(self, channel: Channel, kind: MessageKind, dst: int,
                  payload: Any) -> ControlMessage:
        return ControlMessage(channel, kind, CONTROLLER, dst, payload, next(self._seq))

    # --- main loop ---------------------------------------------------------

    def run(self) -> MetricsReport:
        for i, f in enumerate(self.flows):
            self.push(f.start_us, EventKind.FLOW_ARRIVAL, self.topo.host_attachment[f.src], i)
        for m in range(1, self.n_minutes + 1):
            self.push(min(m * MINUTE_US, self.duration_us), EventKind.TIMER_FIRE, CONTROLLER,
                      ("minute", m - 1))
        if self.cfg.mode == "dynamic":
            step = int(self.cfg.regroup_check_s * US_PER_S)
            for t in range(step, self.duration_us, step):
                self.push(t, EventKind.TIMER_FIRE, CONTROLLER, ("regroup", None))
        if self.faults:
            for fs in self.faults:
                self.push(int(fs.at_s * US_PER_S), EventKind.FAULT_INJECT, fs.subject, fs)
            step = int(self.cfg.timing.keepalive_period_s * US_PER_S)
            for t in range(step, self.duration_us, step):
                self.push(t, EventKind.TIMER_FIRE, CONTROLLER, ("keepalive", None))
        self.push(self.duration_us, EventKind.TRACE_END, CONTROLLER)

        now = 0
        while self.queue:
            ev = heapq.heappop(self.queue)
            assert ev.time_us >= now, "event scheduled in the past"
            now = ev.time_us
            if ev.kind is EventKind.TRACE_END:
                break
            if ev.kind is EventKind.FLOW_ARRIVAL:
                self._flow_arrival(now, ev.target, ev.payload)
            elif ev.kind is EventKind.PACKET_DELIVERY:
                if ev.target == CONTROLLER:
                    self._controller_receive(now, ev.payload)
                elif isinstance(ev.payload, Packet):
                    self._switch_packet(now, ev.target, ev.payload)
                else:
                    self._switch_message(now, ev.target, ev.payload)
            elif ev.kind is EventKind.TIMER_FIRE:
                self._timer(now, ev.target, ev.payload)
            else:
                self._inject(now, ev.payload)
        return self._report()

    # --- data plane --------------------------------------------------------

    def _flow_arrival(self, t: int, sw: int, i: int) -> None:
        f = self.flows[i]
        topo = self.topo
        a, b = sw, topo.host_attachment[f.dst]
        if a != b:
            self.counts[a, b] += 1
            self.counts[b, a] += 1
            self.window.append((t, a, b))
        pkt = Packet(PacketKind.PLAIN, host_addr(f.src), host_addr(f.dst),
                     topo.host_tenant[f.src], flow_id=i, in_port=topo.host_port[f.src])
        self._switch_packet(t, sw, pkt)

    def _switch_packet(self, t: int, sw: int, pkt: Packet) -> None:
        if sw in self.health.crashed:
            return
        state = self.switches[sw]
        i = pkt.flow_id
        for act in handle_packet(state, pkt, t):
            if isinstance(act, DeliverLocal):
                self._delivered(i, t + self.local)
            elif isinstance(act, SendEncapsulated):
                if pkt.kind is PacketKind.PLAIN and i >= 0:
                    self.encap_via.setdefault(i, act.via)
                self.push(t + self.e2e, EventKind.PACKET_DELIVERY, act.dst, act.packet)
            elif isinstance(act, SendToController):
                msg = ControlMessage(Channel.CONTROL_LINK, MessageKind.PACKET_IN, sw, CONTROLLER,
                                     act.packet, state.next_seq())
                self.send(t, msg, self.e2c)
            elif isinstance(act, Drop) and act.reason == "false_positive":
                self.fp_drops += 1

    def _delivered(self, i: int, t: int) -> None:
        if i < 0 or self.flow_class[i] >= 0:
            return
        if self.via_ctrl[i]:
            cls = FlowClass.VIA_CONTROLLER
        else:
            cls = {None: FlowClass.LOCAL_HIT, "gfib": FlowClass.INTRA_GROUP,
                   "rule": FlowClass.INTER_GROUP_CACHED}[self.encap_via.get(i)]
        self.flow_class[i] = _CLASS_ORDER.index(cls)
        self.flow_latency[i] = t - self.flows[i].start_us

    # --- control plane -----------------------------------------------------

    def _controller_receive(self, t: int, msg: ControlMessage) -> None:
        if msg.kind is MessageKind.PACKET_IN:
            pkt: Packet = msg.payload
            self.pin_minute[min(t // MINUTE_US, self.n_minutes - 1)] += 1
            if pkt.flow_id >= 0:
                self.via_ctrl[pkt.flow_id] = True
            forward = False
            for act in handle_packet_in(self.ctrl, msg.src, pkt, t):
                if isinstance(act, FlowMod):
                    m = self._ctrl_msg(Channel.CONTROL_LINK, MessageKind.FLOW_MOD, act.switch,
                                       act.rule)
                    self.send(t, m, self.e2c)
                    forward = True
                elif isinstance(act, DropPacket):
                    forward = False
            if forward:
                # packet-out: hand the packet back to the ingress switch behind its rules
                self.push(t + self.e2c, EventKind.PACKET_DELIVERY, msg.src, pkt)
        elif msg.kind is MessageKind.STATE_REPORT:
            snap: LFibSnapshot = msg.payload
            self.ctrl.clib.update(snap.owner, snap)

    def _switch_message(self, t: int, sw: int, msg: ControlMessage) -> None:
        if sw in self.health.crashed:
            return
        state = self.switches[sw]
        if msg.kind is MessageKind.FLOW_MOD:
            state.flow_table.install(msg.payload, t)
        elif msg.kind is MessageKind.GROUP_CONFIG:
            self._apply_group_config_one(sw, msg.payload)
        elif msg.kind is MessageKind.LFIB_UPDATE:
            if isinstance(msg.payload, tuple):
                for snap in msg.payload:
                    if snap.owner != sw and snap.owner in state.members:
                        state.gfib.update_peer(snap)
                if msg.src == CONTROLLER:
                    for m in state.members:
                        if m != sw:
                            out = ControlMessage(Channel.PEER_LINK, MessageKind.LFIB_UPDATE, sw,
                                                 m, msg.payload, state.next_seq())
                            self.send(t, out, self.e2e)
            else:
                for out in receive_lfib_update(state, msg):
                    self.send(t, out, self.e2c if out.dst == CONTROLLER else self.e2e)

    def _apply_group_config_one(self, sw: int, gc: GroupConfig) -> None:
        st = self.switches[sw]
        st.group = gc.group_id
        st.gfib.group_id = gc.group_id
        st.designated_id = gc.designated
        st.members = gc.members
        st.wheel_neighbors = (gc.upstream(sw), gc.downstream(sw))
        st.timing = gc.timing
        for p in list(st.gfib.filters):
            if p not in gc.members or p == sw:
                st.gfib.drop_peer(p)

    def _push_group_configs(self, t: int, configs: list[GroupConfig]) -> None:
        for gc in configs:
            for m in gc.members:
                self.send(t, self._ctrl_msg(Channel.CONTROL_LINK, MessageKind.GROUP_CONFIG, m,
                                            gc), self.e2c)

    # --- timers ------------------------------------------------------------

    def _timer(self, t: int, target: int, payload: tuple) -> None:
        what, arg = payload
        if what == "minute":
            self._minute(t, arg)
        elif what == "regroup":
            self._regroup(t)
        elif what == "keepalive":
            self._keepalive(t)
        elif what == "reboot":
            self._reboot_done(t, arg)

    def _trim_window(self, t: int) -> None:
        cut = t - self.window_us
        win, counts = self.window, self.counts
        while win and win[0][0] < cut:
            _, a, b = win.popleft()
            counts[a, b] -= 1
            counts[b, a] -= 1

    def _current_matrix(self, t: int) -> IntensityMatrix:
        self._trim_window(t)
        return IntensityMatrix.from_counts(self.counts, self.window_us / US_PER_S)

    def _w_inter_now(self, t: int) -> float:
        self._trim_window(t)
        peak = self.counts.max()
        if peak == 0 or self.cfg.mode == "baseline":
            return 0.0
        lab = self.ctrl.grouping.labels(self.topo.n_switches)
        return float(self.counts[lab[:, None] != lab[None, :]].sum() / 2 / peak)

    def _minute(self, t: int, m: int) -> None:
        self.load_minute[m] = controller_load(self.ctrl, t)
        self.winter_minute[m] = _r(self._w_inter_now(t))
        for st in self.switches:
            st.flow_table.expire(t)

    def _regroup(self, t: int) -> None:
        if not regroup_due(self.ctrl, t):
            return
        res = maybe_regroup(self.ctrl, t, self._current_matrix(t))
        if res is None:
            return
        self.regroups.append({"time_s": _r(t / US_PER_S), "moved": len(res.delta.moved),
                              "iterations": res.delta.iteration_count,
                              "load": _r(controller_load(self.ctrl, t))})
        changed = [res.configs[g] for g in res.changed_groups]
        self._push_group_configs(t, changed)
        for gc in changed:
            bundle = tuple(self.ctrl.clib.snapshots[m] for m in gc.members)
            self.send(t, self._ctrl_msg(Channel.STATE_LINK, MessageKind.LFIB_UPDATE,
                                        gc.designated, bundle), self.e2c)

    # --- faults ------------------------------------------------------------

    def _inject(self, t: int, fs: FaultSpec) -> None:
        if not 0 <= fs.subject < self.topo.n_switches:
            raise ValueError(f"fault subject {fs.subject} is not a switch")
        gc = self.ctrl.configs[self.ctrl.group_of[fs.subject]]
        self.health.inject(fs.kind, fs.subject, gc)
        log.info("t=%.1f s: injected %s on switch %d", t / US_PER_S, fs.kind, fs.subject)

    def _keepalive(self, t: int) -> None:
        for gc in list(self.ctrl.configs):
            rounds = self.rounds.setdefault(gc.group_id, [])
            rounds.append(run_detection_round(gc, self.health, t, self.window_id))
            if len(rounds) < DETECTION_ROUNDS:
                continue
            obs = combine_rounds(rounds)
            rounds.clear()
            for v in diagnose(obs, gc):
                if v.kind is FaultKind.SWITCH_DOWN and v.subject in self.rebooting:
                    continue
                self._recover(t, v, self.ctrl.configs[gc.group_id])
        self.window_id += 1

    def _recover(self, t: int, verdict, gc: GroupConfig) -> None:
        plan = plan_recovery(verdict, gc)
        self.verdicts.append({"time_s": _r(t / US_PER_S), "subject": verdict.subject,
                              "kind": verdict.kind.value, "group": gc.group_id,
                              "actions": [type(a).__name__ for a in plan.actions]})
        immediate = type(plan)(tuple(a for a in plan.actions if not isinstance(a, RebootAndPoll)))
        new_gc = execute_plan(immediate, gc, self.health)
        kind = (MessageKind.OUTAGE_NOTICE if verdict.kind is FaultKind.SWITCH_DOWN
                else MessageKind.DETOUR_REQUEST)
        notify = new_gc.designated if verdict.kind is FaultKind.SWITCH_DOWN else verdict.subject
        if notify not in self.health.crashed:
            self.send(t, self._ctrl_msg(Channel.CONTROL_LINK, kind, notify, verdict.subject),
                      self.e2c)
        if any(isinstance(a, ReselectDesignated) for a in plan.actions):
            self.ctrl.configs[gc.group_id] = new_gc
            self._push_group_configs(t, [new_gc])
        if any(isinstance(a, RebootAndPoll) for a in plan.actions):
            self.rebooting.add(verdict.subject)
            self.push(t + int(self.cfg.reboot_s * US_PER_S), EventKind.TIMER_FIRE, CONTROLLER,
                      ("reboot", verdict.subject))

    def _reboot_done(self, t: int, sw: int) -> None:
        self.health.crashed.discard(sw)
        self.rebooting.discard(sw)
        st = self.switches[sw]
        st.flow_table = FlowTable()
        gc = self.ctrl.configs[self.ctrl.group_of[sw]]
        self._apply_group_config_one(sw, gc)
        # resync: re-announce the L-FIB to the group
        st.last_emitted_version = -1
        for out in emit_lfib_update(st):
            self.send(t, out, self.e2c if out.dst == CONTROLLER else self.e2e)

    # --- report ------------------------------------------------------------

    def _report(self) -> MetricsReport:
        undelivered = _CLASS_ORDER.index(FlowClass.UNDELIVERED)
        self.flow_class[self.flow_class < 0] = undelivered
        classification, latency = {}, {}
        for ci, cls in enumerate(_CLASS_ORDER):
            sel = self.flow_class == ci
            classification[cls.value] = int(sel.sum())
            if cls is not FlowClass.UNDELIVERED and sel.any():
                latency[cls.value] = _r(float(self.flow_latency[sel].mean()))
        per_hour = [int(self.pin_minute[h * 60:(h + 1) * 60].sum()) for h in range(self.n_hours)]
        return MetricsReport(
            mode=self.cfg.mode,
            n_flows=len(self.flows),
            duration_s=_r(self.duration_us / US_PER_S),
            packet_in_per_hour=per_hour,
            packet_in_per_minute=[int(x) for x in self.pin_minute],
            controller_load_per_minute=[_r(x) for x in self.load_minute],
            w_inter_per_minute=self.winter_minute,
            regroup_events=self.regroups,
            classification=classification,
            first_packet_latency_us=latency,
            bf_false_positive_drops=self.fp_drops,
            storage_bytes_per_switch=[st.gfib.storage_bytes for st in self.switches],
            messages=dict(sorted(self.messages.items())),
            verdicts=self.verdicts,
            config=_jsonable(self.cfg.to_dict()),
        )


def run(config: SimConfig, trace: Trace | None = None,
        faults: list[FaultSpec] | None = None) -> MetricsReport:
    """Replay a trace end to end; identical inputs give an identical report."""
    if trace is None:
        if config.trace_path is None:
            raise ValueError("no trace given")
        trace = load_trace(config.trace_path)
    if faults is None and config.fault_script:
        with open(config.fault_script, encoding="utf-8") as fh:
            faults = parse_fault_script(fh.read())
    return Simulation(config, trace, faults).run()


def compare_runs(report_a: MetricsReport, report_b: MetricsReport) -> list[float | None]:
    """Per-hour reduction (a - b) / a of controller PacketIns; None where a saw none."""
    a, b = report_a.packet_in_per_hour, report_b.packet_in_per_hour
    if len(a) != len(b) or report_a.duration_s != report_b.duration_s:
        raise ValueError("reports cover different durations")
    return [None if x == 0 else _r((x - y) / x) for x, y in zip(a, b)]


def total_reduction(report_a: MetricsReport, report_b: MetricsReport) -> float | None:
    a, b = report_a.packet_in_total, report_b.packet_in_total
    return None if a == 0 else (a - b) / a


def latency_classification(report: MetricsReport) -> dict[str, dict[str, float]]:
    """Count and mean simulated first-packet latency per flow class."""
    return {cls: {"count": n, "mean_latency_us": report.first_packet_latency_us.get(cls, 0.0)}
            for cls, n in report.classification.items()}
