"""Control-plane message envelope and the channel/kind permission matrix."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

CONTROLLER = -1


class Channel(enum.Enum):
    CONTROL_LINK = "ControlLink"
    STATE_LINK = "StateLink"
    PEER_LINK = "PeerLink"


class MessageKind(enum.Enum):
    PACKET_IN = "PacketIn"
    FLOW_MOD = "FlowMod"
    GROUP_CONFIG = "GroupConfig"
    STATE_REPORT = "StateReport"
    LFIB_UPDATE = "LFibUpdate"
    GROUP_BROADCAST = "GroupBroadcast"
    KEEP_ALIVE = "KeepAlive"
    DETOUR_REQUEST = "DetourRequest"
    OUTAGE_NOTICE = "OutageNotice"


_K = MessageKind
PERMITTED: dict[Channel, frozenset[MessageKind]] = {
    Channel.CONTROL_LINK: frozenset({_K.PACKET_IN, _K.FLOW_MOD, _K.GROUP_CONFIG,
                                     _K.DETOUR_REQUEST, _K.OUTAGE_NOTICE, _K.KEEP_ALIVE}),
    # regroup pushes L-FIB bundles to designated switches over the state link
    Channel.STATE_LINK: frozenset({_K.STATE_REPORT, _K.LFIB_UPDATE}),
    Channel.PEER_LINK: frozenset({_K.LFIB_UPDATE, _K.GROUP_BROADCAST, _K.KEEP_ALIVE}),
}


class ChannelViolation(ValueError):
    pass


@dataclass(frozen=True)
class ControlMessage:
    channel: Channel
    kind: MessageKind
    src: int
    dst: int
    payload: Any = None
    seq: int = 0

    def __post_init__(self) -> None:
        if self.kind not in PERMITTED[self.channel]:
            raise ChannelViolation(f"{self.kind.value} is not allowed on {self.channel.value}")
        if self.src == self.dst:
            raise ChannelViolation(f"message from node {self.src} to itself")
        touches_ctrl = CONTROLLER in (self.src, self.dst)
        if self.channel is Channel.PEER_LINK and touches_ctrl:
            raise ChannelViolation("peer links connect two edge switches")
        if self.channel is not Channel.PEER_LINK and not touches_ctrl:
            raise ChannelViolation(f"{self.channel.value} must end at the controller")
