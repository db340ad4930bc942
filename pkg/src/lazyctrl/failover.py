"""Control-plane failure detection on the keep-alive wheel and recovery planning.

Each switch S_n probes both wheel neighbours and the controller probes every
switch. Loss flags for S_n refer to probes on the directed edges
S_n -> S_{n-1} ("up"), S_n -> S_{n+1} ("down") and controller -> S_n ("ctrl").
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np

from .controller import GroupConfig

log = logging.getLogger(__name__)

DETECTION_ROUNDS = 3


class FaultKind(enum.Enum):
    CONTROL_LINK = "ControlLink"
    PEER_LINK_UP = "PeerLinkUp"
    PEER_LINK_DOWN = "PeerLinkDown"
    SWITCH_DOWN = "SwitchDown"


# fault-script kinds -> what breaks in the health model
SCRIPT_KINDS = ("switch", "ctrl_link", "peer_up", "peer_down")


@dataclass(frozen=True)
class LossObservation:
    window_id: int
    up: dict[int, bool]
    down: dict[int, bool]
    ctrl: dict[int, bool]

    @property
    def healthy(self) -> bool:
        return not (any(self.up.values()) or any(self.down.values())
                    or any(self.ctrl.values()))


@dataclass(frozen=True)
class FailureVerdict:
    subject: int
    kind: FaultKind
    window_id: int


@dataclass(frozen=True)
class DetourRoute:
    src: int
    dst: int


@dataclass(frozen=True)
class RelayControlVia:
    switch: int
    upstream: int


@dataclass(frozen=True)
class ReselectDesignated:
    new: int
    old: int


@dataclass(frozen=True)
class SpreadOutage:
    switch: int


@dataclass(frozen=True)
class RebootAndPoll:
    switch: int


@dataclass(frozen=True)
class Resync:
    group: int


RecoveryAction = Union[DetourRoute, RelayControlVia, ReselectDesignated, SpreadOutage,
                       RebootAndPoll, Resync]


@dataclass(frozen=True)
class RecoveryPlan:
    actions: tuple[RecoveryAction, ...] = ()

    def __len__(self) -> int:
        return len(self.actions)


@dataclass
class LinkHealth:
    """Injected faults plus the workarounds recovery has put in place."""

    crashed: set[int] = field(default_factory=set)
    ctrl_cut: set[int] = field(default_factory=set)
    peer_cut: set[tuple[int, int]] = field(default_factory=set)
    detours: set[tuple[int, int]] = field(default_factory=set)
    relayed: set[int] = field(default_factory=set)
    loss_prob: float = 0.0
    rng: np.random.Generator | None = None

    def inject(self, kind: str, subject: int, group: GroupConfig | None = None) -> None:
        if kind == "switch":
            self.crashed.add(subject)
        elif kind == "ctrl_link":
            self.ctrl_cut.add(subject)
        elif kind in ("peer_up", "peer_down"):
            if group is None:
                raise ValueError("peer-link faults need the group wheel")
            nb = group.upstream(subject) if kind == "peer_up" else group.downstream(subject)
            self.peer_cut.add((subject, nb))
        else:
            raise ValueError(f"unknown fault kind {kind!r}")

    def _random_loss(self) -> bool:
        return self.loss_prob > 0 and self.rng is not None and self.rng.random() < self.loss_prob

    def peer_lost(self, a: int, b: int) -> bool:
        if a in self.crashed or b in self.crashed:
            return True
        if (a, b) in self.peer_cut and (a, b) not in self.detours:
            return True
        return self._random_loss()

    def ctrl_lost(self, n: int) -> bool:
        if n in self.crashed:
            return True
        if n in self.ctrl_cut and n not in self.relayed:
            return True
        return self._random_loss()


def run_detection_round(group: GroupConfig, health: LinkHealth, now: int = 0,
                        window_id: int = 0) -> LossObservation:
    """One keep-alive round over the group's wheel and controller spokes."""
    up, down, ctrl = {}, {}, {}
    solo = len(group.members) == 1
    for n in group.members:
        up[n] = False if solo else health.peer_lost(n, group.upstream(n))
        down[n] = False if solo else health.peer_lost(n, group.downstream(n))
        ctrl[n] = health.ctrl_lost(n)
    return LossObservation(window_id, up, down, ctrl)


def combine_rounds(rounds: Iterable[LossObservation]) -> LossObservation:
    """A flag survives the window only if the probe was lost in every round."""
    rounds = list(rounds)
    if not rounds:
        raise ValueError("a detection window needs at least one round")
    first = rounds[0]

    def every(attr: str) -> dict[int, bool]:
        return {n: all(getattr(r, attr)[n] for r in rounds) for n in getattr(first, attr)}

    return LossObservation(first.window_id, every("up"), every("down"), every("ctrl"))


def infer_failure(obs: LossObservation, n: int) -> FailureVerdict | None:
    """Match S_n's loss pattern against the inference table; None if no row fits."""
    flags = (obs.up.get(n, False), obs.down.get(n, False), obs.ctrl.get(n, False))
    kind = {
        (True, True, True): FaultKind.SWITCH_DOWN,
        (False, False, True): FaultKind.CONTROL_LINK,
        (True, False, False): FaultKind.PEER_LINK_UP,
        (False, True, False): FaultKind.PEER_LINK_DOWN,
    }.get(flags)
    if kind is None:
        if any(flags):
            log.warning("ambiguous loss pattern for switch %d in window %d: up=%d down=%d "
                        "ctrl=%d", n, obs.window_id, *flags)
        return None
    return FailureVerdict(n, kind, obs.window_id)


def diagnose(obs: LossObservation, group: GroupConfig) -> list[FailureVerdict]:
    """Verdicts for the whole group.

    A crashed switch also silences its neighbours' probes towards it; those
    peer-link verdicts are explained by the crash and are dropped.
    """
    verdicts = [v for n in group.members if (v := infer_failure(obs, n)) is not None]
    down = {v.subject for v in verdicts if v.kind is FaultKind.SWITCH_DOWN}
    explained = set()
    for n in down:
        explained.add((group.downstream(n), FaultKind.PEER_LINK_UP))
        explained.add((group.upstream(n), FaultKind.PEER_LINK_DOWN))
    return [v for v in verdicts if (v.subject, v.kind) not in explained]


def plan_recovery(verdict: FailureVerdict, group_config: GroupConfig) -> RecoveryPlan:
    cfg = group_config
    n = verdict.subject
    if n not in cfg.members:
        raise ValueError(f"switch {n} is not in group {cfg.group_id}")
    if verdict.kind is FaultKind.CONTROL_LINK:
        return RecoveryPlan((RelayControlVia(n, cfg.upstream(n)),))
    if verdict.kind in (FaultKind.PEER_LINK_UP, FaultKind.PEER_LINK_DOWN):
        other = cfg.upstream(n) if verdict.kind is FaultKind.PEER_LINK_UP else cfg.downstream(n)
        actions: list[RecoveryAction] = [DetourRoute(n, other)]
        if cfg.designated in (n, other):
            peer = other if cfg.designated == n else n
            new = cfg.reselect_designated(exclude=peer).designated
            if new != cfg.designated:
                actions.append(ReselectDesignated(new, cfg.designated))
        return RecoveryPlan(tuple(actions))
    actions = []
    if cfg.designated == n:
        new = cfg.reselect_designated().designated
        if new != n:
            actions.append(ReselectDesignated(new, n))
    actions += [SpreadOutage(n), RebootAndPoll(n), Resync(cfg.group_id)]
    return RecoveryPlan(tuple(actions))


def execute_plan(plan: RecoveryPlan, group_config: GroupConfig,
                 health: LinkHealth) -> GroupConfig:
    """Apply a plan to the health model; returns the possibly updated group config.

    Reboots complete immediately here; the simulator delays them.
    """
    cfg = group_config
    for act in plan.actions:
        if isinstance(act, DetourRoute):
            health.detours.add((act.src, act.dst))
        elif isinstance(act, RelayControlVia):
            health.relayed.add(act.switch)
        elif isinstance(act, ReselectDesignated):
            cfg = GroupConfig(cfg.group_id, cfg.members, act.new,
                              tuple(b for b in cfg.backups if b != act.new) or
                              tuple(m for m in cfg.members if m not in (act.new, act.old))[:1],
                              cfg.wheel, cfg.timing, cfg.size_limit)
        elif isinstance(act, RebootAndPoll):
            health.crashed.discard(act.switch)
    return cfg
