"""Deterministic discrete-event simulation of the overlay platform.

One run builds a mixed population of ordinary and steg-capable agents,
drives periodic discovery walks, hello/update timers and optional agent
migration through a single event queue, and samples four measurements on
a fixed grid: route convergence level, per-link protocol overhead,
platform capacity usage, and the fraction of saturated steg-links.
Identical configs (including the seed) produce byte-identical reports.
"""
from __future__ import annotations

import bisect
import csv
import dataclasses
import heapq
import io
import json
import os
import random
import tempfile
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import (
    AgentId,
    AgentKind,
    AgentRecord,
    DEFAULT_METHODS,
    MessageKind,
    MessageSizes,
    StegMethodProfile,
    derive_capabilities,
    discovery_message,
    method_table,
)
from .router import RouterTimers, StegRouter
from .walk import run_walk


class ConfigError(ValueError):
    """Raised when a run configuration fails validation."""


@dataclass(frozen=True, slots=True)
class SimConfig:
    """Complete description of one run; two equal configs give identical
    results bit for bit."""

    duration: float = 1800.0
    n_agents: int = 250
    sa_fraction: float = 0.10
    p_f: float = 0.75
    migration_rate: float = 0.0
    seed: int = 1
    sampling_interval: float = 10.0
    discovery_interval: float = 10.0
    walk_hop_latency: float = 0.001
    hop_limit: int = 32
    timers: RouterTimers = field(default_factory=RouterTimers)
    sizes: MessageSizes = field(default_factory=MessageSizes)
    methods: tuple[StegMethodProfile, ...] = DEFAULT_METHODS

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ConfigError("duration must be >= 0")
        if self.n_agents < 1:
            raise ConfigError("n_agents must be >= 1")
        if not 0.0 < self.sa_fraction < 1.0:
            raise ConfigError("sa_fraction must lie in (0, 1)")
        if not 0.0 <= self.p_f < 1.0:
            raise ConfigError("p_f must lie in [0, 1)")
        if self.migration_rate < 0:
            raise ConfigError("migration_rate must be >= 0")
        if self.sampling_interval <= 0:
            raise ConfigError("sampling_interval must be positive")
        if self.discovery_interval <= 0:
            raise ConfigError("discovery_interval must be positive")
        if self.walk_hop_latency < 0:
            raise ConfigError("walk_hop_latency must be >= 0")
        if self.hop_limit < 1:
            raise ConfigError("hop_limit must be >= 1")
        if not 1 <= len(self.methods) <= 16:
            raise ConfigError("between 1 and 16 method profiles are supported")
        try:
            method_table(self.methods)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def n_steg_agents(self) -> int:
        return round(self.n_agents * self.sa_fraction)

    def to_mapping(self) -> dict:
        """Flat echo of every knob; feeding it back into from_mapping
        reproduces the identical run."""
        return {
            "duration": self.duration,
            "n_agents": self.n_agents,
            "sa_fraction": self.sa_fraction,
            "p_f": self.p_f,
            "migration_rate": self.migration_rate,
            "seed": self.seed,
            "sampling_interval": self.sampling_interval,
            "discovery_interval": self.discovery_interval,
            "walk_hop_latency": self.walk_hop_latency,
            "hop_limit": self.hop_limit,
            "timers": dataclasses.asdict(self.timers),
            "sizes": dataclasses.asdict(self.sizes),
            "methods": [dataclasses.asdict(m) for m in self.methods],
        }

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "SimConfig":
        """Build a config from a plain mapping (parsed config file, echo
        from a report, or override set); raises ConfigError on unknown
        keys or malformed values."""
        scalars = {
            "duration": float,
            "n_agents": int,
            "sa_fraction": float,
            "p_f": float,
            "migration_rate": float,
            "seed": int,
            "sampling_interval": float,
            "discovery_interval": float,
            "walk_hop_latency": float,
            "hop_limit": int,
        }
        timer_fields = {"hello_interval": float, "hold_time": float, "update_interval": float}
        size_fields = {"discovery": int, "hello": int, "update_header": int, "update_entry": int}
        method_fields = {
            "id": str,
            "name": str,
            "bandwidth_bps": float,
            "delay_s": float,
            "occurrence": float,
            "preference_rank": int,
        }

        def convert(name: str, conv: Callable, value: object) -> object:
            try:
                return conv(value)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {name}: {value!r}") from None

        kwargs: dict = {}
        for key, value in mapping.items():
            if key in scalars:
                kwargs[key] = convert(key, scalars[key], value)
            elif key == "timers":
                fields = {}
                for k, v in dict(value).items():
                    if k not in timer_fields:
                        raise ConfigError(f"unknown timer field {k!r}")
                    fields[k] = convert(f"timers.{k}", timer_fields[k], v)
                kwargs["timers"] = _build("timers", RouterTimers, fields)
            elif key == "sizes":
                fields = {}
                for k, v in dict(value).items():
                    if k not in size_fields:
                        raise ConfigError(f"unknown size field {k!r}")
                    fields[k] = convert(f"sizes.{k}", size_fields[k], v)
                kwargs["sizes"] = _build("sizes", MessageSizes, fields)
            elif key == "methods":
                methods = []
                for entry in value:
                    fields = {}
                    for k, v in dict(entry).items():
                        if k not in method_fields:
                            raise ConfigError(f"unknown method field {k!r}")
                        fields[k] = convert(f"method.{k}", method_fields[k], v)
                    methods.append(_build("method", StegMethodProfile, fields))
                kwargs["methods"] = tuple(methods)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def _build(label: str, factory: Callable, fields: dict):
    try:
        return factory(**fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {label}: {exc}") from None


@dataclass(frozen=True, slots=True)
class MetricsFrame:
    """One sample of the four platform measurements.  Meter values cover
    the window since the previous sample; convergence is instantaneous."""

    time: float
    convergence_level: float
    convergence_level_all_pairs: float
    routing_overhead_per_link_bps: float
    capacity_usage: float
    saturated_link_fraction: float


@dataclass(frozen=True, slots=True)
class RunReport:
    """Everything one run produced: the config echo, the sampled series,
    the derived convergence summary, and traffic totals by message kind."""

    config: dict
    frames: tuple[MetricsFrame, ...]
    convergence_time_s: Optional[float]
    undiscovered_fraction: Optional[float]
    totals: dict


#: Optional per-message-accounting callback:
#: (time, kind value, sender, recipient, message count, payload bytes).
TraceFn = Callable[[float, str, AgentId, Optional[AgentId], int, int], None]


class _Ev(IntEnum):
    WALK_DELIVER = 1
    HELLO = 2
    UPDATE = 3
    DISCOVERY = 4
    MIGRATE = 5
    SAMPLE = 6


class EventKernel:
    """Priority queue of timed events; ties resolve by insertion order."""

    def __init__(self) -> None:
        self._heap: list = []
        self._seq = 0
        self.now = 0.0

    def schedule(self, time: float, tag: int, a=None, b=None) -> None:
        heapq.heappush(self._heap, (time, self._seq, tag, a, b))
        self._seq += 1

    def run_until(self, until: float, dispatch: Callable) -> None:
        heap = self._heap
        while heap and heap[0][0] <= until:
            time, _, tag, a, b = heapq.heappop(heap)
            self.now = time
            dispatch(tag, a, b, time)
        self.now = until


@dataclass(slots=True)
class _Topology:
    """Cached view of the current steg-link graph (alive SAs only)."""

    sa_ids: tuple[AgentId, ...]
    n_links: int
    sum_best_bw: float
    connected_pairs: int


class Platform:
    """One simulated platform instance.

    Construction builds the population and schedules all periodic
    processes; run_until drives the event loop.  The instance exposes its
    routers and agents so failure drills and inspection do not need any
    special hooks.
    """

    def __init__(self, config: SimConfig, trace: Optional[TraceFn] = None) -> None:
        self.config = config
        self.profiles = method_table(config.methods)
        self.kernel = EventKernel()
        self.agents: dict[AgentId, AgentRecord] = {}
        self.routers: dict[AgentId, StegRouter] = {}
        self.frames: list[MetricsFrame] = []
        self._trace = trace
        self._alive: list[AgentId] = []
        self._alive_sas: list[AgentId] = []
        self._mask: dict[AgentId, int] = {}
        self._bit = {p.id: 1 << i for i, p in enumerate(config.methods)}
        self._bw_by_mask = _best_bandwidth_by_mask(config.methods)
        self._population_version = 0
        self._topology: Optional[_Topology] = None
        self._topology_version = -1
        self._ever_removed = False
        self._next_id = 0
        self._last_sample_t = 0.0
        self._win_overhead_bits = 0
        self._win_link_bits: dict[tuple[AgentId, AgentId], int] = {}
        self._win_link_total = 0
        self._totals = {kind.value: [0, 0] for kind in MessageKind}

        self._rng_population = random.Random(f"{config.seed}:population")
        self._rng_walks = random.Random(f"{config.seed}:walks")
        self._rng_timers = random.Random(f"{config.seed}:timers")
        self._rng_migrations = random.Random(f"{config.seed}:migrations")

        self._build_population()
        self._schedule_initial()

    # -- population --------------------------------------------------------

    def _build_population(self) -> None:
        cfg = self.config
        n = cfg.n_agents
        sa_ids = set(self._rng_population.sample(range(n), cfg.n_steg_agents))
        for agent_id in range(n):
            if agent_id in sa_ids:
                caps = derive_capabilities(self._rng_population, cfg.methods)
                self._add_agent(agent_id, AgentKind.STEG, caps, joined_at=0.0)
            else:
                self._add_agent(agent_id, AgentKind.ORDINARY, frozenset(), joined_at=0.0)
        self._next_id = n

    def _add_agent(
        self,
        agent_id: AgentId,
        kind: AgentKind,
        caps: frozenset,
        joined_at: float,
    ) -> None:
        self.agents[agent_id] = AgentRecord(
            id=agent_id, kind=kind, capabilities=caps, joined_at=joined_at
        )
        self._alive.append(agent_id)
        if kind is AgentKind.STEG:
            bisect.insort(self._alive_sas, agent_id)
            self._mask[agent_id] = sum(self._bit[m] for m in caps)
            self.routers[agent_id] = StegRouter(
                agent_id,
                caps,
                self.profiles,
                timers=self.config.timers,
                hop_limit=self.config.hop_limit,
            )
        self._population_version += 1

    def remove_agent(self, agent_id: AgentId) -> None:
        """Forced departure: the agent stops all activity immediately and
        silently; peers notice only through hello loss."""
        record = self.agents[agent_id]
        if not record.alive:
            return
        record.alive = False
        record.left_at = self.kernel.now
        self._alive.remove(agent_id)
        if record.kind is AgentKind.STEG:
            self._alive_sas.remove(agent_id)
            self.routers.pop(agent_id, None)
        self._population_version += 1
        self._ever_removed = True

    def _spawn_replacement(self, kind: AgentKind, now: float) -> AgentId:
        agent_id = self._next_id
        self._next_id += 1
        caps = (
            derive_capabilities(self._rng_migrations, self.config.methods)
            if kind is AgentKind.STEG
            else frozenset()
        )
        self._add_agent(agent_id, kind, caps, joined_at=now)
        if kind is AgentKind.STEG:
            cfg = self.config
            rng = self._rng_migrations
            self.kernel.schedule(
                now + rng.uniform(0, cfg.timers.hello_interval), _Ev.HELLO, agent_id
            )
            self.kernel.schedule(
                now + rng.uniform(0, cfg.timers.update_interval), _Ev.UPDATE, agent_id
            )
            self.kernel.schedule(
                now + rng.uniform(0, cfg.discovery_interval), _Ev.DISCOVERY, agent_id
            )
        return agent_id

    # -- scheduling ---------------------------------------------------------

    def _schedule_initial(self) -> None:
        cfg = self.config
        for agent_id in self._alive_sas:
            self.kernel.schedule(
                self._rng_timers.uniform(0, cfg.timers.hello_interval), _Ev.HELLO, agent_id
            )
            self.kernel.schedule(
                self._rng_timers.uniform(0, cfg.timers.update_interval), _Ev.UPDATE, agent_id
            )
            self.kernel.schedule(
                self._rng_timers.uniform(0, cfg.discovery_interval), _Ev.DISCOVERY, agent_id
            )
        if cfg.migration_rate > 0:
            self.kernel.schedule(
                self._rng_migrations.expovariate(cfg.migration_rate), _Ev.MIGRATE
            )
        if cfg.sampling_interval <= cfg.duration:
            self.kernel.schedule(cfg.sampling_interval, _Ev.SAMPLE)

    # -- event loop -----------------------------------------------------------

    @property
    def now(self) -> float:
        return self.kernel.now

    def run_until(self, until: float) -> None:
        self.kernel.run_until(until, self._dispatch)

    def _dispatch(self, tag: int, a, b, now: float) -> None:
        if tag == _Ev.HELLO:
            self._on_hello(a, now)
        elif tag == _Ev.UPDATE:
            self._on_update(a, now)
        elif tag == _Ev.DISCOVERY:
            self._on_discovery(a, now)
        elif tag == _Ev.WALK_DELIVER:
            self._on_walk_deliver(a, b, now)
        elif tag == _Ev.SAMPLE:
            self._on_sample(now)
        elif tag == _Ev.MIGRATE:
            self._on_migrate(now)

    # -- accounting -----------------------------------------------------------

    def _account(
        self,
        kind: str,
        sender: AgentId,
        recipient: Optional[AgentId],
        count: int,
        nbytes: int,
        on_link: bool,
    ) -> None:
        totals = self._totals[kind]
        totals[0] += count
        totals[1] += nbytes
        bits = nbytes * 8
        self._win_overhead_bits += bits
        if on_link:
            key = (sender, recipient) if sender < recipient else (recipient, sender)
            self._win_link_bits[key] = self._win_link_bits.get(key, 0) + bits
            self._win_link_total += bits
        if self._trace is not None:
            self._trace(self.kernel.now, kind, sender, recipient, count, nbytes)

    # -- event handlers ---------------------------------------------------------

    def _on_hello(self, agent_id: AgentId, now: float) -> None:
        record = self.agents.get(agent_id)
        if record is None or not record.alive:
            return
        router = self.routers[agent_id]
        hello_bytes = self.config.sizes.hello
        for neighbor in router.hello_tick(now):
            self._account("hello", agent_id, neighbor, 1, hello_bytes, on_link=True)
            peer = self.routers.get(neighbor)
            if peer is not None:
                peer.receive_hello(agent_id, now)
        self.kernel.schedule(now + self.config.timers.hello_interval, _Ev.HELLO, agent_id)

    def _on_update(self, agent_id: AgentId, now: float) -> None:
        record = self.agents.get(agent_id)
        if record is None or not record.alive:
            return
        router = self.routers[agent_id]
        batch = router.build_update(now)
        if batch is not None:
            sizes = self.config.sizes
            for recipient in batch.recipients:
                payload = sizes.update_payload(batch.row_count_for(recipient))
                self._account(
                    "routing_update", agent_id, recipient, 1, payload, on_link=True
                )
                peer = self.routers.get(recipient)
                if peer is not None:
                    peer.process_update(batch, now)
        self.kernel.schedule(now + self.config.timers.update_interval, _Ev.UPDATE, agent_id)

    def _on_discovery(self, agent_id: AgentId, now: float) -> None:
        record = self.agents.get(agent_id)
        if record is None or not record.alive:
            return
        cfg = self.config
        if len(self._alive) >= 2:
            message = discovery_message(agent_id, record.capabilities, cfg.sizes)
            path = run_walk(agent_id, message, cfg.p_f, self._alive, self._rng_walks)
            hops = len(path) - 1
            self.kernel.schedule(
                now + hops * cfg.walk_hop_latency, _Ev.WALK_DELIVER, path[-1], (agent_id, hops)
            )
        self.kernel.schedule(now + cfg.discovery_interval, _Ev.DISCOVERY, agent_id)

    def _on_walk_deliver(self, holder: AgentId, origin_hops, now: float) -> None:
        originator, hops = origin_hops
        # The walk's hop transmissions happened regardless of what the
        # final holder does with the advertisement.
        self._account(
            "discovery", originator, holder, hops, hops * self.config.sizes.discovery,
            on_link=False,
        )
        holder_rec = self.agents.get(holder)
        origin_rec = self.agents.get(originator)
        if holder_rec is None or not holder_rec.alive:
            return
        if origin_rec is None or not origin_rec.alive:
            return
        receiver = self.routers.get(holder)
        if receiver is None:
            return
        formed = receiver.ingest_discovery(originator, origin_rec.capabilities, now)
        if not formed:
            return
        # New neighbor relation: answer with own capabilities over the
        # fresh covert channel, then both sides swap full tables.
        sizes = self.config.sizes
        originator_router = self.routers[originator]
        self._account("discovery", holder, originator, 1, sizes.discovery, on_link=True)
        originator_router.ingest_discovery(holder, holder_rec.capabilities, now)
        for sender, dest in ((holder, originator), (originator, holder)):
            batch = self.routers[sender].build_update(now)
            if batch is None:
                continue
            payload = sizes.update_payload(batch.row_count_for(dest))
            self._account("routing_update", sender, dest, 1, payload, on_link=True)
            self.routers[dest].process_update(batch, now)

    def _on_migrate(self, now: float) -> None:
        victim = self._alive[self._rng_migrations.randrange(len(self._alive))]
        kind = self.agents[victim].kind
        self.remove_agent(victim)
        self._spawn_replacement(kind, now)
        self.kernel.schedule(
            now + self._rng_migrations.expovariate(self.config.migration_rate), _Ev.MIGRATE
        )

    def _on_sample(self, now: float) -> None:
        for router in self.routers.values():
            router.expire_check(now)
        self.frames.append(self._measure(now))
        self._win_overhead_bits = 0
        self._win_link_bits = {}
        self._win_link_total = 0
        self._last_sample_t = now
        next_t = now + self.config.sampling_interval
        if next_t <= self.config.duration:
            self.kernel.schedule(next_t, _Ev.SAMPLE)

    # -- measurement -----------------------------------------------------------

    def _current_topology(self) -> _Topology:
        if self._topology_version != self._population_version:
            self._topology = _build_topology(
                self._alive_sas, self._mask, self._bw_by_mask
            )
            self._topology_version = self._population_version
        return self._topology

    def _routed_pairs(self) -> int:
        if not self._ever_removed:
            return sum(len(r.routes) for r in self.routers.values())
        alive = set(self._alive_sas)
        return sum(
            sum(1 for dest in router.routes if dest in alive)
            for router in self.routers.values()
        )

    def convergence_level(self) -> float:
        """Fraction of reachable ordered SA pairs with an installed route;
        pairs disconnected in the steg-link graph are unroutable by
        construction and excluded.  Vacuously 1.0 with fewer than 2 SAs."""
        topo = self._current_topology()
        if topo.connected_pairs == 0:
            return 1.0
        return self._routed_pairs() / topo.connected_pairs

    def convergence_level_all_pairs(self) -> float:
        """Same numerator over all ordered alive-SA pairs, reachable or not."""
        n = len(self._alive_sas)
        if n < 2:
            return 1.0
        return self._routed_pairs() / (n * (n - 1))

    def _measure(self, now: float) -> MetricsFrame:
        topo = self._current_topology()
        window = now - self._last_sample_t
        routed = self._routed_pairs()
        level = 1.0 if topo.connected_pairs == 0 else routed / topo.connected_pairs
        n_sa = len(self._alive_sas)
        level_all = 1.0 if n_sa < 2 else routed / (n_sa * (n_sa - 1))
        if topo.n_links and window > 0:
            overhead = self._win_overhead_bits / (window * topo.n_links)
        else:
            overhead = 0.0
        if topo.sum_best_bw and window > 0:
            usage = self._win_link_total / (topo.sum_best_bw * window)
        else:
            usage = 0.0
        saturated = 0
        if topo.n_links and window > 0:
            mask = self._mask
            bw = self._bw_by_mask
            for (a, b), bits in self._win_link_bits.items():
                if bits >= bw[mask[a] & mask[b]] * window:
                    saturated += 1
        sat_fraction = saturated / topo.n_links if topo.n_links else 0.0
        return MetricsFrame(
            time=now,
            convergence_level=level,
            convergence_level_all_pairs=level_all,
            routing_overhead_per_link_bps=overhead,
            capacity_usage=usage,
            saturated_link_fraction=sat_fraction,
        )

    # -- reporting ------------------------------------------------------------

    def report(self) -> RunReport:
        frames = tuple(self.frames)
        convergence_time = _first_sustained_full(frames)
        undiscovered = 1.0 - frames[-1].convergence_level if frames else None
        totals = {
            kind: {"messages": counts[0], "bytes": counts[1]}
            for kind, counts in self._totals.items()
        }
        return RunReport(
            config=self.config.to_mapping(),
            frames=frames,
            convergence_time_s=convergence_time,
            undiscovered_fraction=undiscovered,
            totals=totals,
        )


def _first_sustained_full(frames: Sequence[MetricsFrame]) -> Optional[float]:
    """First sample time from which convergence_level stays at 1.0 to the
    end of the run; None when never reached or no samples exist."""
    last_below = -1
    for i, frame in enumerate(frames):
        if frame.convergence_level < 1.0:
            last_below = i
    if not frames or last_below == len(frames) - 1:
        return None
    return frames[last_below + 1].time


def _best_bandwidth_by_mask(methods: Sequence[StegMethodProfile]) -> np.ndarray:
    """bandwidth of the preferred method for every capability-intersection
    bitmask; index 0 (no shared method) maps to 0.0."""
    table = np.zeros(1 << len(methods), dtype=np.float64)
    for mask in range(1, 1 << len(methods)):
        present = [m for i, m in enumerate(methods) if mask >> i & 1]
        best = min(
            present, key=lambda m: (-m.bandwidth_bps, m.delay_s, m.preference_rank)
        )
        table[mask] = best.bandwidth_bps
    return table


def _build_topology(
    sa_ids: Sequence[AgentId],
    mask: Mapping[AgentId, int],
    bw_by_mask: np.ndarray,
) -> _Topology:
    n = len(sa_ids)
    if n < 2:
        return _Topology(tuple(sa_ids), 0, 0.0, 0)
    masks = np.fromiter((mask[a] for a in sa_ids), dtype=np.int64, count=n)
    pair = np.bitwise_and.outer(masks, masks)
    np.fill_diagonal(pair, 0)
    iu = np.triu_indices(n, 1)
    upper = pair[iu]
    exists = upper != 0
    n_links = int(exists.sum())
    sum_best_bw = float(bw_by_mask[upper].sum())
    graph = csr_matrix((pair != 0).astype(np.int8))
    n_comp, labels = connected_components(graph, directed=False)
    sizes = np.bincount(labels, minlength=n_comp)
    connected_pairs = int((sizes * (sizes - 1)).sum())
    return _Topology(tuple(sa_ids), n_links, sum_best_bw, connected_pairs)


def run(config: SimConfig, trace: Optional[TraceFn] = None) -> RunReport:
    """Execute one full run and return its report."""
    platform = Platform(config, trace=trace)
    platform.run_until(config.duration)
    return platform.report()


# -- serialization -------------------------------------------------------------

SUMMARY_CSV_COLUMNS = (
    "seed",
    "n_agents",
    "sa_fraction",
    "p_f",
    "migration_rate",
    "convergence_time_s",
    "undiscovered_fraction",
    "mean_overhead_bps",
    "mean_capacity_usage",
    "mean_saturation",
    "convergence_time_min",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def summary_row(report: RunReport) -> dict[str, str]:
    """One summary CSV row; empty convergence cells mean not reached."""
    cfg = report.config
    frames = report.frames

    def mean(get: Callable[[MetricsFrame], float]) -> Optional[float]:
        if not frames:
            return None
        return sum(get(f) for f in frames) / len(frames)

    conv_s = report.convergence_time_s
    values = {
        "seed": cfg["seed"],
        "n_agents": cfg["n_agents"],
        "sa_fraction": cfg["sa_fraction"],
        "p_f": cfg["p_f"],
        "migration_rate": cfg["migration_rate"],
        "convergence_time_s": conv_s,
        "undiscovered_fraction": report.undiscovered_fraction,
        "mean_overhead_bps": mean(lambda f: f.routing_overhead_per_link_bps),
        "mean_capacity_usage": mean(lambda f: f.capacity_usage),
        "mean_saturation": mean(lambda f: f.saturated_link_fraction),
        "convergence_time_min": None if conv_s is None else conv_s / 60.0,
    }
    return {k: _fmt(values[k]) for k in SUMMARY_CSV_COLUMNS}


def write_summary_csv(rows: Iterable[Mapping[str, str]], path: str) -> None:
    """Write summary rows atomically (complete file or nothing)."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    atomic_write_text(path, buf.getvalue())


def run_report_lines(report: RunReport) -> Iterable[str]:
    """JSONL serialization: header object, one line per frame, then a
    summary trailer.  Key order is fixed so identical runs serialize to
    identical bytes."""
    yield json.dumps({"type": "header", "config": report.config}, sort_keys=True)
    for f in report.frames:
        yield json.dumps(
            {
                "type": "frame",
                "time": f.time,
                "convergence_level": f.convergence_level,
                "convergence_level_all_pairs": f.convergence_level_all_pairs,
                "routing_overhead_per_link_bps": f.routing_overhead_per_link_bps,
                "capacity_usage": f.capacity_usage,
                "saturated_link_fraction": f.saturated_link_fraction,
            },
            sort_keys=True,
        )
    yield json.dumps(
        {
            "type": "summary",
            "convergence_time_s": report.convergence_time_s,
            "undiscovered_fraction": report.undiscovered_fraction,
            "totals": report.totals,
        },
        sort_keys=True,
    )


def write_run_jsonl(report: RunReport, path: str) -> None:
    atomic_write_text(path, "\n".join(run_report_lines(report)) + "\n")


def atomic_write_text(path: str, text: str) -> None:
    """Write via a same-directory temp file and rename, so readers never
    observe a partial file and parallel writers cannot interleave."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
