"""Domain model for the covert overlay: agents, steganographic carrier
methods, steg-links, and protocol messages.

Two agent kinds exist on the platform.  Ordinary agents only relay
anonymous traffic; steg-capable agents additionally hold a non-empty set
of carrier methods and can form steg-links with peers whose method sets
intersect.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

AgentId = int
StegMethodId = str


class AgentKind(Enum):
    ORDINARY = "ordinary"
    STEG = "steg"


@dataclass(frozen=True, slots=True)
class StegMethodProfile:
    """One hidden-data carrier: its throughput, added latency, how common
    it is in the population, and its preference rank (lower = preferred)."""

    id: StegMethodId
    name: str
    bandwidth_bps: float
    delay_s: float
    occurrence: float
    preference_rank: int

    def __post_init__(self) -> None:
        if self.bandwidth_bps <= 0:
            raise ValueError(f"method {self.id!r}: bandwidth must be positive")
        if self.delay_s < 0:
            raise ValueError(f"method {self.id!r}: delay must be >= 0")
        if not 0 < self.occurrence <= 1:
            raise ValueError(f"method {self.id!r}: occurrence must be in (0, 1]")
        if self.preference_rank < 1:
            raise ValueError(f"method {self.id!r}: preference_rank must be >= 1")


# Default carrier catalogue.  Bandwidth in bit/s; occurrence is the
# probability that a steg-capable agent supports the method; rank orders
# methods for path selection when capacity and delay tie.
DEFAULT_METHODS: tuple[StegMethodProfile, ...] = (
    StegMethodProfile("internet", "Network (Internet)", 300_000.0, 0.0, 0.90, 1),
    StegMethodProfile("hiccups", "Network (HICCUPS)", 225_000.0, 0.0, 0.05, 2),
    StegMethodProfile("image", "Image", 100.0, 0.0, 0.10, 3),
    StegMethodProfile("video", "Video", 100.0, 0.0, 0.10, 4),
    StegMethodProfile("audio", "Audio", 80.0, 0.0, 0.10, 5),
    StegMethodProfile("text", "Text", 80.0, 0.0, 0.05, 6),
)


def method_table(
    profiles: Iterable[StegMethodProfile] = DEFAULT_METHODS,
) -> dict[StegMethodId, StegMethodProfile]:
    """Index profiles by id, rejecting duplicate ids or duplicate ranks."""
    table: dict[StegMethodId, StegMethodProfile] = {}
    ranks: set[int] = set()
    for prof in profiles:
        if prof.id in table:
            raise ValueError(f"duplicate method id {prof.id!r}")
        if prof.preference_rank in ranks:
            raise ValueError(f"duplicate preference rank {prof.preference_rank}")
        table[prof.id] = prof
        ranks.add(prof.preference_rank)
    if not table:
        raise ValueError("method table must not be empty")
    return table


@dataclass(slots=True)
class AgentRecord:
    """Platform membership record for one agent."""

    id: AgentId
    kind: AgentKind
    capabilities: frozenset[StegMethodId] = frozenset()
    alive: bool = True
    joined_at: float = 0.0
    left_at: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind is AgentKind.ORDINARY and self.capabilities:
            raise ValueError("ordinary agents carry no steg capabilities")
        if self.kind is AgentKind.STEG and not self.capabilities:
            raise ValueError("steg agents need at least one capability")


def derive_capabilities(
    rng: random.Random,
    profiles: Sequence[StegMethodProfile] = DEFAULT_METHODS,
) -> frozenset[StegMethodId]:
    """Draw a steg agent's method set: independent inclusion per method at
    its occurrence probability, redrawn until at least one is present."""
    while True:
        caps = frozenset(p.id for p in profiles if rng.random() < p.occurrence)
        if caps:
            return caps


@dataclass(frozen=True, slots=True)
class StegLink:
    """Covert channel between two steg agents; exists exactly when their
    capability sets intersect.  Endpoint ids are stored low, high."""

    a: AgentId
    b: AgentId
    methods: frozenset[StegMethodId]

    def __post_init__(self) -> None:
        if self.a >= self.b:
            raise ValueError("link endpoints must satisfy a < b")
        if not self.methods:
            raise ValueError("a steg-link needs at least one shared method")

    @property
    def key(self) -> tuple[AgentId, AgentId]:
        return (self.a, self.b)

    def peer_of(self, agent: AgentId) -> AgentId:
        if agent == self.a:
            return self.b
        if agent == self.b:
            return self.a
        raise ValueError(f"agent {agent} is not an endpoint of {self.key}")


def build_steg_link(x: AgentRecord, y: AgentRecord) -> Optional[StegLink]:
    """Link two agents if both are live steg agents sharing a method."""
    if x.id == y.id:
        return None
    if x.kind is not AgentKind.STEG or y.kind is not AgentKind.STEG:
        return None
    if not (x.alive and y.alive):
        return None
    shared = x.capabilities & y.capabilities
    if not shared:
        return None
    lo, hi = sorted((x.id, y.id))
    return StegLink(lo, hi, shared)


class MessageKind(Enum):
    DISCOVERY = "discovery"
    HELLO = "hello"
    ROUTING_UPDATE = "routing_update"
    DATA = "data"


@dataclass(frozen=True, slots=True)
class MessageSizes:
    """Wire sizes (bytes) used for traffic accounting."""

    discovery: int = 64
    hello: int = 32
    update_header: int = 16
    update_entry: int = 24

    def __post_init__(self) -> None:
        for name in ("discovery", "hello", "update_header", "update_entry"):
            if getattr(self, name) <= 0:
                raise ValueError(f"message size {name} must be positive")

    def update_payload(self, rows: int) -> int:
        """Payload bytes of a routing update carrying `rows` table rows."""
        return self.update_header + self.update_entry * rows


@dataclass(frozen=True, slots=True)
class Message:
    """A platform message.  Discovery payloads are padded to a constant
    size, so a relay cannot tell advertisement traffic from ordinary
    anonymous traffic."""

    kind: MessageKind
    source: Optional[AgentId]
    destination: Optional[AgentId]
    payload_bytes: int
    steg_content: object = None


def discovery_message(
    advertiser: AgentId,
    capabilities: frozenset[StegMethodId],
    sizes: MessageSizes = MessageSizes(),
) -> Message:
    """Capability advertisement embedded in an anonymous carrier message."""
    return Message(
        kind=MessageKind.DISCOVERY,
        source=None,
        destination=None,
        payload_bytes=sizes.discovery,
        steg_content=(advertiser, capabilities),
    )


def anonymous_message(
    source: AgentId,
    destination: Optional[AgentId] = None,
    sizes: MessageSizes = MessageSizes(),
) -> Message:
    """Plain anonymous message with no embedded steg content; same wire
    size as a discovery advertisement."""
    return Message(
        kind=MessageKind.DATA,
        source=source,
        destination=destination,
        payload_bytes=sizes.discovery,
        steg_content=None,
    )
