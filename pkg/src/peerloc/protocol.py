"""Discrete-event model of the peer-to-peer discovery and ranging protocol.

Nodes advertise over BLE on a fixed period, discover each other with a 1-2 s
latency, and (while active) initiate double-sided two-way ranging exchanges
round-robin through their neighbor list on a poll period t_uwb. Exchanges
whose airtime intervals overlap within a collision domain are all lost;
initiators then offset their next poll by a truncated-exponential backoff
(slotted-ALOHA style). Idle radios duty-cycle at 10 mW; active ranging costs
800 mW. The DS-TWR handshake itself is modeled as an atomic timed exchange;
range noise is applied by the world simulation on success.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

IDLE_POWER_W = 0.010
ACTIVE_POWER_W = 0.800

# poll period needed to keep a collision domain stable at a given node count;
# calibrated so a 10-node clique ranges each neighbor at ~1 Hz
DENSITY_TUWB_TABLE = ((10, 0.1), (20, 0.2), (30, 0.3))


def t_uwb_for_density(num_nodes: int, table=DENSITY_TUWB_TABLE) -> float:
    for bound, t_uwb in table:
        if num_nodes <= bound:
            return t_uwb
    return table[-1][1]


@dataclass(frozen=True)
class ProtocolConfig:
    t_ble: float = 0.2
    t_uwb: float = 0.1
    rssi_threshold: float = -85.0
    eviction_timeout: float = 15.0
    exchange_duration: float = 0.003
    radio_radius: float = 60.0
    discovery_latency: tuple[float, float] = (1.0, 2.0)
    sleep_timeout: float = 15.0

    def __post_init__(self):
        if min(self.t_ble, self.t_uwb, self.eviction_timeout, self.exchange_duration) <= 0:
            raise ValueError("protocol periods must be positive")
        if self.exchange_duration >= self.t_uwb:
            raise ValueError("exchange_duration must be below t_uwb")


@dataclass
class NeighborEntry:
    node_id: int
    last_seen: float
    rssi: float


@dataclass(frozen=True)
class RadioEvent:
    kind: str  # advertisement|discovery|twr_start|twr_success|twr_collision|eviction|wake|sleep
    time: float
    participants: tuple[int, ...]


def path_loss_rssi(distance: float) -> float:
    """Log-distance model anchored at -41 dBm @ 1 m, exponent 2."""
    return -41.0 - 20.0 * math.log10(max(distance, 0.1))


class RadioNode:
    """Protocol state machine for one radio: neighbor list, round robin, duty cycle."""

    def __init__(self, node_id: int, config: ProtocolConfig, rng: np.random.Generator,
                 wants_ranging: bool = True):
        self.node_id = node_id
        self.config = config
        self.rng = rng
        self.wants_ranging = wants_ranging
        self.mode = "scanning"  # scanning|sleeping|active
        self.neighbors: list[NeighborEntry] = []
        self.round_robin_index = 0
        self.next_poll_at = math.inf
        self.pending_backoff = False
        self.last_active_heard = -math.inf
        self.energy_mj: dict[str, float] = {"idle": 0.0, "active": 0.0}
        self._mode_since = 0.0

    # ------------------------------------------------------------------
    # neighbor list

    def neighbor(self, node_id: int) -> NeighborEntry | None:
        for entry in self.neighbors:
            if entry.node_id == node_id:
                return entry
        return None

    def add_neighbor(self, node_id: int, now: float, rssi: float):
        if self.neighbor(node_id) is None:
            self.neighbors.append(NeighborEntry(node_id, now, rssi))

    def evict_stale(self, now: float) -> list[RadioEvent]:
        """Drop neighbors not heard within the eviction timeout, keeping the
        round-robin position on the evicted entry's successor."""
        events = []
        i = 0
        while i < len(self.neighbors):
            entry = self.neighbors[i]
            if now - entry.last_seen > self.config.eviction_timeout:
                del self.neighbors[i]
                if i < self.round_robin_index:
                    self.round_robin_index -= 1
                events.append(RadioEvent("eviction", now, (self.node_id, entry.node_id)))
            else:
                i += 1
        if self.neighbors:
            self.round_robin_index %= len(self.neighbors)
        else:
            self.round_robin_index = 0
        return events

    def next_poll_target(self) -> int | None:
        if not self.neighbors:
            return None
        target = self.neighbors[self.round_robin_index].node_id
        self.round_robin_index = (self.round_robin_index + 1) % len(self.neighbors)
        return target

    # ------------------------------------------------------------------
    # duty cycle and energy

    def _account_energy(self, now: float):
        span = max(0.0, now - self._mode_since)
        key = "active" if self.mode == "active" else "idle"
        power = ACTIVE_POWER_W if self.mode == "active" else IDLE_POWER_W
        self.energy_mj[key] += power * span * 1000.0
        self._mode_since = now

    def duty_cycle(self, now: float, heard_active_advertisement: bool) -> list[RadioEvent]:
        """Wake on an active-ranging advertisement; sleep after the quiet timeout."""
        events = []
        if heard_active_advertisement:
            self.last_active_heard = now
        if self.mode != "active" and (heard_active_advertisement or self.wants_ranging):
            self._account_energy(now)
            self.mode = "active"
            self.next_poll_at = now + self.rng.uniform(0.0, self.config.t_uwb)
            events.append(RadioEvent("wake", now, (self.node_id,)))
        elif (self.mode == "active" and not self.wants_ranging
              and now - self.last_active_heard > self.config.sleep_timeout):
            self._account_energy(now)
            self.mode = "scanning"
            self.next_poll_at = math.inf
            events.append(RadioEvent("sleep", now, (self.node_id,)))
        return events

    def finalize_energy(self, now: float):
        self._account_energy(now)

    def apply_backoff(self) -> float:
        """Offset the next poll by Exp(mean = t_uwb / 2) truncated to [0, t_uwb]."""
        mean = self.config.t_uwb / 2.0
        offset = self.rng.exponential(mean)
        while offset > self.config.t_uwb:
            offset = self.rng.exponential(mean)
        self.next_poll_at += offset
        self.pending_backoff = False
        return offset


def apply_backoff(node: RadioNode, rng: np.random.Generator | None = None) -> float:
    """Module-level alias; the draw uses the node's own stream unless one is given."""
    if rng is not None:
        node.rng = rng
    return node.apply_backoff()


@dataclass
class _Exchange:
    start: float
    end: float
    initiator: int
    responder: int
    collided: bool = False
    resolved: bool = False


class CollisionDomainView:
    """Tracks in-flight DS-TWR airtime intervals within one collision domain."""

    def __init__(self, exchange_duration: float):
        self.exchange_duration = exchange_duration
        self.exchanges: list[_Exchange] = []

    def register(self, start: float, initiator: int, responder: int,
                 failed: bool = False) -> _Exchange:
        ex = _Exchange(start, start + self.exchange_duration, initiator, responder, collided=failed)
        for other in self.exchanges:
            if not other.resolved and other.end > start:
                other.collided = True
                ex.collided = True
        self.exchanges.append(ex)
        return ex

    def pop_due(self, now: float) -> list[_Exchange]:
        due = [e for e in self.exchanges if not e.resolved and e.end <= now]
        for e in due:
            e.resolved = True
        self.exchanges = [e for e in self.exchanges if not e.resolved]
        return sorted(due, key=lambda e: (e.end, e.initiator, e.responder))


def resolve_medium(starts, exchange_duration: float) -> list[str]:
    """Batch outcome for a list of (start_time, initiator, responder) tuples.

    Any two exchanges whose airtime intervals overlap both collide.
    """
    view = CollisionDomainView(exchange_duration)
    exchanges = [view.register(t, a, b) for t, a, b in starts]
    return ["collision" if e.collided else "success" for e in exchanges]


@dataclass(frozen=True)
class RangeSuccess:
    time: float
    initiator: int
    responder: int


class ProtocolSim:
    """Event-driven simulation of N radios sharing one UWB collision domain.

    positions maps node_id -> position callable of t (or a fixed array).
    Deterministic given the seed: same seed, same event stream.
    """

    _PRIORITY = {"resolve": 0, "adv": 1, "discover": 2, "poll": 3}

    def __init__(self, node_ids, positions, config: ProtocolConfig = ProtocolConfig(),
                 seed: int = 0, active_nodes=None):
        self.config = config
        self.positions = positions
        self.nodes: dict[int, RadioNode] = {}
        self.events: list[RadioEvent] = []
        self.successes: list[RangeSuccess] = []
        self._heap: list[tuple[float, int, int, int]] = []
        self._payloads: dict[int, tuple[str, object]] = {}
        self._seq = 0
        self._now = 0.0
        self._medium = CollisionDomainView(config.exchange_duration)
        self._pending_discovery: dict[tuple[int, int], float] = {}
        active = set(node_ids) if active_nodes is None else set(active_nodes)
        for node_id in sorted(node_ids):
            rng = np.random.default_rng(np.random.SeedSequence((seed, 100, node_id)))
            node = RadioNode(node_id, config, rng, wants_ranging=node_id in active)
            self.nodes[node_id] = node
            self._push(rng.uniform(0.0, config.t_ble), "adv", node_id)
            if node.wants_ranging:
                self.events.extend(node.duty_cycle(0.0, False))
                self._push(node.next_poll_at, "poll", node_id)

    # ------------------------------------------------------------------

    def _push(self, time: float, kind: str, node_id: int, payload: object = None):
        self._seq += 1
        heapq.heappush(self._heap, (time, self._PRIORITY[kind], node_id, self._seq))
        self._payloads[self._seq] = (kind, payload)

    def position(self, node_id: int, t: float) -> np.ndarray:
        p = self.positions[node_id]
        return np.asarray(p(t) if callable(p) else p, dtype=float)

    def _distance(self, a: int, b: int, t: float) -> float:
        return float(np.linalg.norm(self.position(a, t) - self.position(b, t)))

    def advance_to(self, t_end: float) -> tuple[list[RadioEvent], list[RangeSuccess]]:
        """Process all scheduled actions up to t_end; returns new events/successes."""
        start_events = len(self.events)
        start_succ = len(self.successes)
        while self._heap and self._heap[0][0] <= t_end:
            time, _, node_id, seq = heapq.heappop(self._heap)
            kind, payload = self._payloads.pop(seq)
            self._now = time
            if kind == "adv":
                self._handle_advertisement(time, node_id)
            elif kind == "poll":
                self._handle_poll(time, node_id)
            elif kind == "discover":
                self._handle_discovery(time, node_id, payload)
            elif kind == "resolve":
                self._handle_resolution(time, payload)
        self._now = t_end
        return self.events[start_events:], self.successes[start_succ:]

    def run(self, duration: float) -> list[RadioEvent]:
        self.advance_to(duration)
        for node in self.nodes.values():
            node.finalize_energy(duration)
        return self.events

    def energy_summary(self) -> dict[int, dict[str, float]]:
        """Per-node energy in mJ by radio mode."""
        return {nid: dict(node.energy_mj) for nid, node in sorted(self.nodes.items())}

    # ------------------------------------------------------------------
    # handlers

    def _handle_advertisement(self, time: float, node_id: int):
        node = self.nodes[node_id]
        self.events.append(RadioEvent("advertisement", time, (node_id,)))
        self.events.extend(node.evict_stale(time))
        active_adv = node.wants_ranging or node.mode == "active"
        for other_id, other in self.nodes.items():
            if other_id == node_id:
                continue
            dist = self._distance(other_id, node_id, time)
            rssi = path_loss_rssi(dist)
            if dist > self.config.radio_radius or rssi < self.config.rssi_threshold:
                continue
            if active_adv:
                woke = other.duty_cycle(time, True)
                self.events.extend(woke)
                if any(e.kind == "wake" for e in woke):
                    self._push(other.next_poll_at, "poll", other_id)
            entry = other.neighbor(node_id)
            if entry is not None:
                entry.last_seen = time
                entry.rssi = rssi
            elif (other_id, node_id) not in self._pending_discovery:
                lo, hi = self.config.discovery_latency
                done = time + other.rng.uniform(lo, hi)
                self._pending_discovery[(other_id, node_id)] = done
                self._push(done, "discover", other_id, node_id)
        self._push(time + self.config.t_ble, "adv", node_id)

    def _handle_discovery(self, time: float, listener_id: int, advertiser_id: int):
        self._pending_discovery.pop((listener_id, advertiser_id), None)
        listener = self.nodes[listener_id]
        dist = self._distance(listener_id, advertiser_id, time)
        if dist > self.config.radio_radius:
            return
        listener.add_neighbor(advertiser_id, time, path_loss_rssi(dist))
        self.events.append(RadioEvent("discovery", time, (listener_id, advertiser_id)))

    def _handle_poll(self, time: float, node_id: int):
        node = self.nodes[node_id]
        if node.mode != "active" or time < node.next_poll_at - 1e-12:
            return  # stale heap entry after a backoff reschedule
        self.events.extend(node.evict_stale(time))
        target = node.next_poll_target()
        node.next_poll_at = time + self.config.t_uwb
        if node.pending_backoff:
            node.apply_backoff()
        self._push(node.next_poll_at, "poll", node_id)
        if target is None:
            return
        self.events.append(RadioEvent("twr_start", time, (node_id, target)))
        responder = self.nodes[target]
        unreachable = (self._distance(node_id, target, time) > self.config.radio_radius
                       or responder.mode != "active")
        ex = self._medium.register(time, node_id, target, failed=unreachable)
        self._push(ex.end, "resolve", node_id, ex)

    def _handle_resolution(self, time: float, ex: _Exchange):
        ex.resolved = True
        self._medium.exchanges = [e for e in self._medium.exchanges if e is not ex]
        if ex.collided:
            self.events.append(RadioEvent("twr_collision", time, (ex.initiator, ex.responder)))
            self.nodes[ex.initiator].pending_backoff = True
        else:
            self.events.append(RadioEvent("twr_success", time, (ex.initiator, ex.responder)))
            self.successes.append(RangeSuccess(time, ex.initiator, ex.responder))
