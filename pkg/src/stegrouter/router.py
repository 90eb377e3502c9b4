"""Distance-vector routing over steg-links.

Each steg agent keeps a neighbor table maintained by hellos and a route
table exchanged through periodic full-table updates.  Route quality is a
lexicographic metric: widest bottleneck first, then lowest added delay,
then best (lowest) worst-case method preference rank, then fewest hops;
remaining ties are broken by the lower next-hop id.  Split horizon is
applied without poisoned reverse, updates are strictly periodic (an
expiry stays silent until the next scheduled update), and paths longer
than the hop limit are treated as unreachable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .core import AgentId, StegLink, StegMethodId, StegMethodProfile


@dataclass(frozen=True, slots=True)
class Metric:
    """Composable path quality; combining never improves any component."""

    bottleneck_bps: float
    delay_s: float
    worst_rank: int
    hops: int

    @property
    def sort_key(self) -> tuple:
        return (-self.bottleneck_bps, self.delay_s, self.worst_rank, self.hops)


#: Identity element for combine_metrics; the metric of reaching oneself.
ZERO_METRIC = Metric(math.inf, 0.0, 0, 0)


def compare_metrics(a: Metric, b: Metric) -> int:
    """-1 if a is the better path metric, 1 if b is, 0 on a tie."""
    ka, kb = a.sort_key, b.sort_key
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


def combine_metrics(a: Metric, b: Metric) -> Metric:
    """Metric of a path made by joining two path segments."""
    return Metric(
        min(a.bottleneck_bps, b.bottleneck_bps),
        a.delay_s + b.delay_s,
        max(a.worst_rank, b.worst_rank),
        a.hops + b.hops,
    )


def _single_link_key(profile: StegMethodProfile) -> tuple:
    return (-profile.bandwidth_bps, profile.delay_s, profile.preference_rank)


def best_method_on_link(
    link: StegLink, profiles: Mapping[StegMethodId, StegMethodProfile]
) -> StegMethodId:
    """The shared method whose one-hop metric wins under compare_metrics."""
    return min(link.methods, key=lambda m: _single_link_key(profiles[m]))


def metric_of_link(
    link: StegLink,
    method: StegMethodId,
    profiles: Mapping[StegMethodId, StegMethodProfile],
) -> Metric:
    """One-hop metric of carrying traffic over `link` with `method`."""
    if method not in link.methods:
        raise ValueError(f"method {method!r} not available on link {link.key}")
    profile = profiles[method]
    return Metric(profile.bandwidth_bps, profile.delay_s, profile.preference_rank, 1)


@dataclass(frozen=True, slots=True)
class RouterTimers:
    hello_interval: float = 5.0
    hold_time: float = 15.0
    update_interval: float = 30.0

    def __post_init__(self) -> None:
        if self.hello_interval <= 0 or self.update_interval <= 0:
            raise ValueError("timer intervals must be positive")
        if self.hold_time <= self.hello_interval:
            raise ValueError("hold_time must exceed hello_interval")


class NeighborState(Enum):
    UP = "up"
    EXPIRED = "expired"


@dataclass(slots=True)
class NeighborEntry:
    neighbor: AgentId
    link: StegLink
    best_method: StegMethodId
    link_metric: Metric
    last_hello_at: float

    def state(self, now: float, hold_time: float) -> NeighborState:
        if now - self.last_hello_at > hold_time:
            return NeighborState.EXPIRED
        return NeighborState.UP


@dataclass(frozen=True, slots=True)
class RouteEntry:
    destination: AgentId
    next_hop: AgentId
    metric: Metric
    via_method: StegMethodId  # method used on the first steg-link of the path
    sort_key: tuple = ()  # cached metric.sort_key; comparisons are the hot path

    def __post_init__(self) -> None:
        if not self.sort_key:
            object.__setattr__(self, "sort_key", self.metric.sort_key)


# A table row on the wire: (destination, bottleneck_bps, delay_s, worst_rank, hops).
Row = tuple[AgentId, float, float, int, int]


@dataclass(frozen=True, slots=True)
class UpdateBatch:
    """Immutable snapshot of a router's table, shared by the per-neighbor
    update messages of one emission.

    Rows are grouped by their next hop so that split horizon costs no
    copying: the message addressed to neighbor X simply skips group X.
    """

    sender: AgentId
    sender_version: int
    self_row: Row
    groups: dict[AgentId, tuple[Row, ...]]
    recipients: tuple[AgentId, ...]

    def rows_for(self, receiver: AgentId) -> Iterator[Row]:
        yield self.self_row
        for next_hop, rows in self.groups.items():
            if next_hop != receiver:
                yield from rows

    def row_count_for(self, receiver: AgentId) -> int:
        omitted = len(self.groups.get(receiver, ()))
        return 1 + sum(len(rows) for rows in self.groups.values()) - omitted


class StegRouter:
    """Routing state machine of one steg agent."""

    def __init__(
        self,
        agent_id: AgentId,
        capabilities: frozenset[StegMethodId],
        profiles: Mapping[StegMethodId, StegMethodProfile],
        timers: RouterTimers = RouterTimers(),
        hop_limit: int = 32,
    ) -> None:
        self.agent_id = agent_id
        self.capabilities = capabilities
        self.profiles = profiles
        self.timers = timers
        self.hop_limit = hop_limit
        self.neighbors: dict[AgentId, NeighborEntry] = {}
        self.routes: dict[AgentId, RouteEntry] = {}
        self.table_version = 0
        # sender -> (sender table version, own table version) at the time
        # an identical update from that sender was last processed.
        self._processed: dict[AgentId, tuple[int, int]] = {}
        self._batch_cache: Optional[UpdateBatch] = None

    # -- neighbor maintenance -------------------------------------------

    def ingest_discovery(
        self, advertiser: AgentId, capabilities: frozenset[StegMethodId], now: float
    ) -> bool:
        """Handle a capability advertisement that reached this agent.

        Returns True when a new (or re-formed) neighbor relation came up,
        which is the caller's cue to answer with its own capabilities and
        a full-table update.  A repeat advertisement only refreshes the
        liveness timestamp.
        """
        if advertiser == self.agent_id:
            return False
        shared = capabilities & self.capabilities
        if not shared:
            return False
        entry = self.neighbors.get(advertiser)
        if entry is not None:
            fresh = entry.state(now, self.timers.hold_time) is NeighborState.UP
            entry.last_hello_at = now
            if fresh:
                return False
            self._processed.pop(advertiser, None)
            return True
        lo, hi = sorted((self.agent_id, advertiser))
        link = StegLink(lo, hi, shared)
        method = best_method_on_link(link, self.profiles)
        self.neighbors[advertiser] = NeighborEntry(
            neighbor=advertiser,
            link=link,
            best_method=method,
            link_metric=metric_of_link(link, method, self.profiles),
            last_hello_at=now,
        )
        return True

    def receive_hello(self, sender: AgentId, now: float) -> None:
        entry = self.neighbors.get(sender)
        if entry is not None:
            entry.last_hello_at = now

    def up_neighbors(self, now: float) -> list[AgentId]:
        hold = self.timers.hold_time
        return sorted(
            nid
            for nid, entry in self.neighbors.items()
            if entry.state(now, hold) is NeighborState.UP
        )

    def hello_tick(self, now: float) -> list[AgentId]:
        """One beat of the liveness beacon: the addressees for this
        interval's hello, i.e. every neighbor currently heard from
        recently enough to count as Up.  A hello carries no payload
        beyond the sender's identity, so the emission is just the
        recipient list; delivery refreshes the peer via receive_hello.
        Stale neighbors are merely skipped here — their routes are
        invalidated at the next periodic table emission, never sooner,
        so link loss is only ever disclosed on the regular cadence."""
        return self.up_neighbors(now)

    def expire_check(self, now: float) -> list[AgentId]:
        """Invalidate routes whose next hop has gone stale.  Expiry is a
        local, silent event: nothing is emitted until the next periodic
        update simply stops mentioning the lost destinations."""
        hold = self.timers.hold_time
        expired = [
            nid
            for nid, entry in self.neighbors.items()
            if entry.state(now, hold) is NeighborState.EXPIRED
        ]
        if expired:
            dead = set(expired)
            stale = [
                dest
                for dest, route in self.routes.items()
                if route.next_hop in dead
            ]
            for dest in stale:
                del self.routes[dest]
            if stale:
                self.table_version += 1
        return expired

    # -- update emission --------------------------------------------------

    def build_update(self, now: float) -> Optional[UpdateBatch]:
        """Snapshot the table for one periodic emission: every route plus
        the self row, split-horizon-grouped, addressed to all Up
        neighbors.  Returns None when there is nobody to talk to."""
        self.expire_check(now)
        recipients = tuple(self.up_neighbors(now))
        if not recipients:
            return None
        cached = self._batch_cache
        if (
            cached is not None
            and cached.sender_version == self.table_version
            and cached.recipients == recipients
        ):
            return cached
        groups: dict[AgentId, list[Row]] = {}
        for route in self.routes.values():
            m = route.metric
            row: Row = (
                route.destination,
                m.bottleneck_bps,
                m.delay_s,
                m.worst_rank,
                m.hops,
            )
            groups.setdefault(route.next_hop, []).append(row)
        batch = UpdateBatch(
            sender=self.agent_id,
            sender_version=self.table_version,
            self_row=(self.agent_id, math.inf, 0.0, 0, 0),
            groups={hop: tuple(rows) for hop, rows in groups.items()},
            recipients=recipients,
        )
        self._batch_cache = batch
        return batch

    # -- update processing ------------------------------------------------

    def process_update(self, batch: UpdateBatch, now: float) -> bool:
        """Apply one received table snapshot; returns True if the local
        table changed.

        Rules: a candidate beating the current entry is adopted; an entry
        is always overwritten by its own next hop's latest advertisement;
        destinations our current next hop stopped advertising are
        invalidated; candidates beyond the hop limit count as absent;
        metric ties go to the lower next-hop id.
        """
        sender = batch.sender
        entry = self.neighbors.get(sender)
        if entry is None or entry.state(now, self.timers.hold_time) is NeighborState.EXPIRED:
            return False
        seen = self._processed.get(sender)
        if seen == (batch.sender_version, self.table_version):
            return False

        link_bw = entry.link_metric.bottleneck_bps
        link_delay = entry.link_metric.delay_s
        link_rank = entry.link_metric.worst_rank
        method = entry.best_method
        me = self.agent_id
        hop_limit = self.hop_limit
        routes = self.routes

        advertised: dict[AgentId, tuple] = {}
        row_groups = [(batch.self_row,)] + [
            rows for hop, rows in batch.groups.items() if hop != me
        ]
        for rows in row_groups:
            for dest, bw, delay, rank, hops in rows:
                if dest == me:
                    continue
                total_hops = hops + 1
                if total_hops > hop_limit:
                    continue
                advertised[dest] = (
                    -min(bw, link_bw),
                    delay + link_delay,
                    max(rank, link_rank),
                    total_hops,
                )

        changed = False
        for dest, key in advertised.items():
            current = routes.get(dest)
            if current is None:
                adopt = True
            elif current.next_hop == sender:
                adopt = key != current.sort_key
            else:
                cur_key = current.sort_key
                adopt = key < cur_key or (key == cur_key and sender < current.next_hop)
            if adopt:
                routes[dest] = RouteEntry(
                    destination=dest,
                    next_hop=sender,
                    metric=Metric(-key[0], key[1], key[2], key[3]),
                    via_method=method,
                    sort_key=key,
                )
                changed = True

        withdrawn = [
            dest
            for dest, route in routes.items()
            if route.next_hop == sender and dest not in advertised
        ]
        for dest in withdrawn:
            del routes[dest]
            changed = True

        if changed:
            self.table_version += 1
        self._processed[sender] = (batch.sender_version, self.table_version)
        return changed

    # -- inspection ---------------------------------------------------------

    def dump_table(self) -> str:
        """Plain-text table: one `dest next_hop method bottleneck_bps
        delay_s rank hops` line per destination, sorted by destination."""
        lines = ["dest next_hop method bottleneck_bps delay_s rank hops"]
        for dest in sorted(self.routes):
            r = self.routes[dest]
            m = r.metric
            lines.append(
                f"{dest} {r.next_hop} {r.via_method} {m.bottleneck_bps:g} "
                f"{m.delay_s:g} {m.worst_rank} {m.hops}"
            )
        return "\n".join(lines)


def resolve_steg_path(
    routers: Mapping[AgentId, StegRouter],
    source: AgentId,
    destination: AgentId,
    now: Optional[float] = None,
) -> Optional[list[tuple[AgentId, StegMethodId]]]:
    """Resolve the hop-by-hop steg path from source to destination by
    chaining next-hop lookups, returning (agent, method-into-that-agent)
    pairs; each hop may re-embed the payload with a different method.
    Returns None when any router on the chain lacks a live route."""
    if source == destination:
        return []
    path: list[tuple[AgentId, StegMethodId]] = []
    visited = {source}
    current = source
    while current != destination:
        router = routers.get(current)
        if router is None:
            return None
        route = router.routes.get(destination)
        if route is None:
            return None
        if now is not None:
            entry = router.neighbors.get(route.next_hop)
            if entry is None or entry.state(
                now, router.timers.hold_time
            ) is NeighborState.EXPIRED:
                return None
        if route.next_hop in visited:
            return None
        path.append((route.next_hop, route.via_method))
        visited.add(route.next_hop)
        current = route.next_hop
    return path


def reference_tables(
    capabilities: Mapping[AgentId, frozenset],
    profiles: Mapping[StegMethodId, StegMethodProfile],
    hop_limit: int = 32,
) -> dict[AgentId, dict[AgentId, tuple[float, float, int, int]]]:
    """Reference optima for a static topology, computed by global
    relaxation instead of the distributed protocol.

    For every ordered pair this returns the best reachable
    (bottleneck_bps, delay_s, worst_rank, hops) under the same
    lexicographic order and hop limit the protocol uses.  Kept free of
    StegRouter machinery so converged protocol tables can be checked
    against an independent computation.
    """
    ids = sorted(capabilities)
    links: list[tuple[AgentId, AgentId, float, float, int]] = []
    for i, u in enumerate(ids):
        for v in ids[i + 1 :]:
            shared = capabilities[u] & capabilities[v]
            if not shared:
                continue
            best = min(shared, key=lambda m: _single_link_key(profiles[m]))
            p = profiles[best]
            links.append((u, v, p.bandwidth_bps, p.delay_s, p.preference_rank))

    tables: dict[AgentId, dict[AgentId, tuple]] = {u: {} for u in ids}
    for dest in ids:
        # Key order mirrors the metric: (-bottleneck, delay, rank, hops).
        dist: dict[AgentId, tuple] = {dest: (-math.inf, 0.0, 0, 0)}
        changed = True
        while changed:
            changed = False
            for u, v, bw, delay, rank in links:
                for near, far in ((u, v), (v, u)):
                    base = dist.get(far)
                    if base is None:
                        continue
                    hops = base[3] + 1
                    if hops > hop_limit:
                        continue
                    cand = (
                        max(-bw, base[0]),
                        base[1] + delay,
                        max(rank, base[2]),
                        hops,
                    )
                    known = dist.get(near)
                    if known is None or cand < known:
                        dist[near] = cand
                        changed = True
        for u, key in dist.items():
            if u != dest:
                tables[u][dest] = (-key[0], key[1], key[2], key[3])
    return tables
