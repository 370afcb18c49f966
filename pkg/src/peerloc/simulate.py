"""Closed-loop world: trajectories, sensors, protocol, transport, and filters.

One deterministic event loop per scenario: every tick the mobile users'
odometry feeds their local joint filters, state messages go out at 10 Hz
through the lossy transport, the ranging protocol produces exchanges whose
successful ranges are noised by the UWB model and delivered to both endpoint
filters, and exact ground-truth snapshots are logged every few seconds.
Identical seeds produce byte-identical logs.
"""

from __future__ import annotations

import csv
import math
import time as _time
from dataclasses import dataclass, field, replace

import heapq
import numpy as np

from .building import BUILDING_LIBRARY, BuildingModel, build, is_nlos
from .joint_filter import FilterConfig, JointFilter
from .particles import RangeMeasurement, VioNoiseParams
from .protocol import ProtocolConfig, ProtocolSim, t_uwb_for_density
from .sensors import UwbModel, VioSensor, sample_uwb_range
from .trajectory import Trajectory, gen_trajectory
from .transport import PeerMessage, TransportConfig, transport_deliver

TAG_MOUNT_HEIGHT = 1.2

# event-kind order used for stable tie-breaking in the emitted log
_KIND_ORDER = {k: i for i, k in enumerate(
    ["wake", "sleep", "advertisement", "discovery", "eviction",
     "twr_start", "twr_success", "twr_collision", "range", "vio", "msg"])}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: str = "custom"
    duration_s: float = 600.0
    tick_hz: int = 60
    seed: int = 0
    building_name: str = "office"
    num_users: int = 2
    user_floors: tuple[int, ...] = ()
    mobility: str = "random_walk"  # random_walk|waypoint|pairs|stress|static
    num_tags: int = 0
    tag_positions: tuple[tuple[float, float, float], ...] = ()
    tag_subset: tuple[int, ...] = ()  # indices of tags the filters use; () = all
    world_vio: VioNoiseParams = VioNoiseParams(0.005, 0.0005)
    uwb: UwbModel = UwbModel()
    transport: TransportConfig = TransportConfig()
    protocol: ProtocolConfig = ProtocolConfig()
    filter: FilterConfig = FilterConfig()
    independent_mode: bool = False
    message_rate_hz: float = 10.0
    estimate_rate_hz: float = 2.0
    truth_interval_s: float = 5.0
    auto_t_uwb: bool = True
    measure_cpu: bool = False  # per-event clock reads are costly on this clock source

    def __post_init__(self):
        if self.duration_s <= 0 or self.tick_hz <= 0:
            raise ValueError("duration and tick rate must be positive")
        if self.num_users < 1:
            raise ValueError("need at least one user")
        if self.building_name not in BUILDING_LIBRARY:
            raise ValueError(f"unknown building {self.building_name!r}")
        if self.mobility not in ("random_walk", "waypoint", "pairs", "stress", "static"):
            raise ValueError(f"unknown mobility {self.mobility!r}")


@dataclass(frozen=True)
class LogEvent:
    time: float
    kind: str
    src: int
    dst: int
    values: tuple = ()


@dataclass(frozen=True)
class TruthRow:
    time: float
    node: int
    x: float
    y: float
    z: float
    vio_yaw: float


@dataclass(frozen=True)
class EstimateRow:
    time: float
    display: int
    target: int
    x: float
    y: float
    z: float
    theta: float


@dataclass
class WorldResult:
    config: ScenarioConfig
    user_ids: list[int]
    tag_ids: list[int]
    used_tag_ids: list[int]
    events: list[LogEvent]
    truth: list[TruthRow]
    estimates: list[EstimateRow]
    energy: dict[int, dict[str, float]]
    cpu_seconds: dict[int, float] = field(default_factory=dict)
    peak_memory: dict[int, int] = field(default_factory=dict)
    filters: dict[int, JointFilter] = field(default_factory=dict)
    trajectories: dict[int, Trajectory] = field(default_factory=dict)

    def write_events_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "kind", "src", "dst", "v0", "v1", "v2", "v3"])
            for e in self.events:
                vals = [repr(float(v)) for v in e.values]
                vals += [""] * (4 - len(vals))
                w.writerow([repr(e.time), e.kind, e.src, e.dst] + vals[:4])

    def write_truth_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "node", "x", "y", "z", "yaw"])
            for r in self.truth:
                w.writerow([repr(r.time), r.node, repr(r.x), repr(r.y), repr(r.z), repr(r.vio_yaw)])

    def write_estimates_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "display", "target", "x", "y", "z", "theta"])
            for r in self.estimates:
                w.writerow([repr(r.time), r.display, r.target,
                            repr(r.x), repr(r.y), repr(r.z), repr(r.theta)])


# ----------------------------------------------------------------------


def auto_place_tags(building: BuildingModel, num_tags: int) -> list[np.ndarray]:
    """Deterministic tag placement spread across floors, center-first."""
    lo, hi = building.bounds_min, building.bounds_max
    fractions = [(0.5, 0.5), (0.17, 0.22), (0.83, 0.78), (0.83, 0.22),
                 (0.17, 0.78), (0.34, 0.62), (0.66, 0.38), (0.5, 0.12), (0.5, 0.88)]
    floors = building.floor_heights
    out = []
    for i in range(num_tags):
        fx, fz = fractions[i % len(fractions)]
        floor_y = floors[(i // len(fractions) + i) % len(floors)]
        out.append(np.array([
            lo[0] + fx * (hi[0] - lo[0]),
            floor_y + TAG_MOUNT_HEIGHT,
            lo[2] + fz * (hi[2] - lo[2]),
        ]))
    return out


def _sub_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence((seed,) + key).generate_state(1)[0])


def _make_trajectories(cfg: ScenarioConfig, building: BuildingModel,
                       user_ids: list[int]) -> dict[int, Trajectory]:
    n_floors = len(building.floor_heights)
    floors = list(cfg.user_floors) or [i % n_floors for i in range(cfg.num_users)]
    n_ticks = int(round(cfg.duration_s * cfg.tick_hz))
    out: dict[int, Trajectory] = {}
    if cfg.mobility == "static":
        for i, u in enumerate(user_ids):
            rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 10, u)))
            from .trajectory import _LevelMap  # deliberate: reuse the walkable sampler
            level = _LevelMap(building, building.floor_heights[floors[i] % n_floors])
            p = level.random_free_point(rng)
            positions = np.tile([p[0], level.y, p[1]], (n_ticks, 1))
            yaws = np.full(n_ticks, rng.uniform(0.0, 2.0 * math.pi))
            out[u] = Trajectory(u, cfg.tick_hz, positions, yaws)
        return out
    for i, u in enumerate(user_ids):
        seed = np.random.default_rng(np.random.SeedSequence((cfg.seed, 10, u)))
        if cfg.mobility == "pairs" and i % 2 == 1:
            out[u] = gen_trajectory("pairs", building, cfg.duration_s, seed, node_id=u,
                                    floor=floors[i - 1] % n_floors, tick_hz=cfg.tick_hz,
                                    partner=out[user_ids[i - 1]])
        else:
            kind = cfg.mobility if cfg.mobility != "pairs" else "pairs"
            out[u] = gen_trajectory(kind, building, cfg.duration_s, seed, node_id=u,
                                    floor=floors[i] % n_floors, tick_hz=cfg.tick_hz)
    return out


def run_world(cfg: ScenarioConfig) -> WorldResult:
    """Run the scenario end to end; returns the full deterministic log."""
    building = build(cfg.building_name)
    user_ids = list(range(cfg.num_users))
    tag_ids = list(range(cfg.num_users, cfg.num_users + cfg.num_tags))
    n_ticks = int(round(cfg.duration_s * cfg.tick_hz))
    dt = 1.0 / cfg.tick_hz

    trajectories = _make_trajectories(cfg, building, user_ids)
    sensors = {u: VioSensor(trajectories[u], cfg.world_vio, _sub_seed(cfg.seed, 11, u))
               for u in user_ids}

    if cfg.tag_positions:
        tag_pos = {t: np.asarray(p, dtype=float)
                   for t, p in zip(tag_ids, cfg.tag_positions)}
    else:
        placed = auto_place_tags(building, cfg.num_tags)
        tag_pos = {t: placed[i] for i, t in enumerate(tag_ids)}

    positions = {}
    for u in user_ids:
        positions[u] = trajectories[u].position_at
    for t_id in tag_ids:
        positions[t_id] = tag_pos[t_id]

    proto_cfg = cfg.protocol
    if cfg.auto_t_uwb:
        proto_cfg = replace(proto_cfg, t_uwb=t_uwb_for_density(len(positions)))
    proto = ProtocolSim(list(positions), positions, proto_cfg, seed=_sub_seed(cfg.seed, 14))

    if cfg.tag_subset:
        used_tags = {tag_ids[i] for i in cfg.tag_subset if 0 <= i < len(tag_ids)}
    else:
        used_tags = set(tag_ids)

    filters: dict[int, JointFilter] = {}
    for u in user_ids:
        f = JointFilter(u, cfg.filter, seed=_sub_seed(cfg.seed, 20, u))
        f.independent_mode(cfg.independent_mode)
        filters[u] = f

    uwb_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 12)))
    transport_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 13)))

    events: list[LogEvent] = []
    truth: list[TruthRow] = []
    estimates: list[EstimateRow] = []
    cpu_ns = {u: 0 for u in user_ids}
    peak_mem = {u: 0 for u in user_ids}

    delivery_heap: list[tuple[float, int, int, PeerMessage]] = []
    heap_seq = 0

    msg_period = max(1, int(round(cfg.tick_hz / cfg.message_rate_hz)))
    est_period = max(1, int(round(cfg.tick_hz / cfg.estimate_rate_hz)))
    truth_period = max(1, int(round(cfg.truth_interval_s * cfg.tick_hz)))

    def node_pos(node: int, at: float) -> np.ndarray:
        if node in tag_pos:
            return tag_pos[node]
        return trajectories[node].position_at(at)

    if cfg.measure_cpu:
        def timed(node: int, fn, *args, **kwargs):
            t0 = _time.process_time_ns()
            fn(*args, **kwargs)
            cpu_ns[node] += _time.process_time_ns() - t0
    else:
        def timed(node: int, fn, *args, **kwargs):
            fn(*args, **kwargs)

    for k in range(n_ticks):
        now = k * dt

        # ranging protocol up to this tick
        _, successes = proto.advance_to(now)
        for s in successes:
            pa = node_pos(s.initiator, s.time)
            pb = node_pos(s.responder, s.time)
            dist = float(np.linalg.norm(pa - pb))
            nlos, _ = is_nlos(pa, pb, building)
            z = sample_uwb_range(dist, nlos, cfg.uwb, uwb_rng)
            if z is None:
                continue
            meas = RangeMeasurement(s.initiator, s.responder, z, s.time)
            events.append(LogEvent(s.time, "range", s.initiator, s.responder, (z,)))
            pair = (s.initiator, s.responder)
            if any(n in tag_pos and n not in used_tags for n in pair):
                continue  # deployed but unselected tags stay on the air only
            for endpoint in pair:
                if endpoint in filters:
                    timed(endpoint, filters[endpoint].on_range, meas)

        # transport deliveries due by now
        while delivery_heap and delivery_heap[0][0] <= now:
            deliver_at, _, dst, msg = heapq.heappop(delivery_heap)
            timed(dst, filters[dst].on_peer_message, msg, deliver_at)

        # local odometry and outgoing state messages
        for u in user_ids:
            if k > 0:
                timed(u, filters[u].on_vio_self, sensors[u].delta(k), now)
            if k > 0 and k % msg_period == 0:
                seq = k // msg_period
                tx, ty, tz = sensors[u].totals(k)
                msg = PeerMessage(u, seq, now, float(tx), float(ty), float(tz))
                events.append(LogEvent(now, "vio", u, -1, (tx, ty, tz, float(seq))))
                for entry in proto.nodes[u].neighbors:
                    if entry.node_id not in filters:
                        continue
                    deliver_at = transport_deliver(msg, cfg.transport, transport_rng)
                    events.append(LogEvent(
                        now, "msg", u, entry.node_id,
                        (float(msg.size_bytes), float(seq),
                         -1.0 if deliver_at is None else deliver_at)))
                    if deliver_at is not None:
                        heap_seq += 1
                        heapq.heappush(delivery_heap,
                                       (max(deliver_at, now), heap_seq, entry.node_id, msg))

        # exact ground truth snapshots
        if k % truth_period == 0:
            for u in user_ids:
                p = trajectories[u].positions[k]
                truth.append(TruthRow(now, u, float(p[0]), float(p[1]), float(p[2]),
                                      sensors[u].vio_yaw(k)))
                peak_mem[u] = max(peak_mem[u], filters[u].memory_bytes())
            for t_id in tag_ids:
                p = tag_pos[t_id]
                truth.append(TruthRow(now, t_id, float(p[0]), float(p[1]), float(p[2]), 0.0))

        # estimate snapshots
        if k > 0 and k % est_period == 0:
            for u in user_ids:
                for target, rs in filters[u].joint_estimate().items():
                    estimates.append(EstimateRow(now, u, target, rs.x, rs.y, rs.z, rs.theta))

    end_t = n_ticks * dt
    proto.advance_to(end_t)
    for node in proto.nodes.values():
        node.finalize_energy(end_t)

    for e in proto.events:
        dst = e.participants[1] if len(e.participants) > 1 else -1
        events.append(LogEvent(e.time, e.kind, e.participants[0], dst, ()))

    events.sort(key=lambda e: (e.time, e.src, _KIND_ORDER.get(e.kind, 99), e.dst))

    return WorldResult(
        config=cfg, user_ids=user_ids, tag_ids=tag_ids,
        used_tag_ids=sorted(used_tags),
        events=events, truth=truth, estimates=estimates,
        energy=proto.energy_summary(),
        cpu_seconds={u: ns / 1e9 for u, ns in cpu_ns.items()},
        peak_memory=peak_mem,
        filters=filters,
        trajectories=trajectories,
    )
