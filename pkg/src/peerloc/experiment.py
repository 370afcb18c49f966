"""Experiment runner: error sampling, baselines, reports, and sweeps.

Errors are sampled only at ground-truth snapshot times, pairwise per ordered
(display, target) pair, for three methods: the collaborative joint filter,
dead-reckoned odometry from known starts, and the known-anchor oracle filter.
Reports are reproducible bit-exactly from (config, seed); wall-clock timings
go to a separate non-canonical file.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import anchor_oracle_baseline, series_at, vio_only_baseline
from .config import ConfigError, load_scenario
from .geometry import CameraIntrinsics, Vec3, rotate_yaw
from .metrics import DEFAULT_CAMERA, ErrorSample, make_error_sample
from .simulate import ScenarioConfig, WorldResult, run_world

METHODS = ("rbpf", "vio_only", "anchor_oracle")

SWEEP_AXES = ("num_static_tags", "nlos_level", "mobility", "transport_drop",
              "separation_bucket")

_NLOS_LEVEL_BUILDINGS = {"los": "office-open", "mixed": "office", "heavy": "three-floor"}
_MOBILITY_VALUES = {"pairs": "pairs", "normal": "random_walk", "stress": "stress"}


@dataclass(frozen=True)
class MethodSummary:
    count: int
    geom_p50: float
    geom_p90: float
    geom_p99: float
    dpe_p50: float
    dpe_p90: float
    dpe_p99: float


@dataclass(frozen=True)
class ProtocolStats:
    twr_starts: int
    successes: int
    collisions: int
    delivery_rate: float
    collision_rate: float
    neighbor_rate_mean_hz: float
    neighbor_rate_min_hz: float
    neighbor_rate_max_hz: float


@dataclass(frozen=True)
class BandwidthStats:
    num_messages: int
    max_message_bytes: int
    max_link_bps: float


@dataclass
class RunReport:
    scenario_id: str
    seed: int
    samples: list[tuple[str, ErrorSample]]
    summaries: dict[str, MethodSummary]
    protocol: ProtocolStats
    bandwidth: BandwidthStats
    peak_memory: dict[int, int]
    energy: dict[int, dict[str, float]]
    config_echo: dict
    cpu_seconds: dict[int, float] = field(default_factory=dict, repr=False)
    result: WorldResult | None = field(default=None, repr=False)


# ----------------------------------------------------------------------
# error sampling


def _truth_maps(result: WorldResult):
    truth = {}
    times = []
    for row in result.truth:
        truth[(row.time, row.node)] = row
        if not times or times[-1] != row.time:
            times.append(row.time)
    return truth, times


def compute_samples(result: WorldResult,
                    camera: CameraIntrinsics = DEFAULT_CAMERA) -> list[tuple[str, ErrorSample]]:
    """All (method, ErrorSample) rows for one run, at truth snapshot times > 0."""
    truth, times = _truth_maps(result)
    users = result.user_ids
    samples: list[tuple[str, ErrorSample]] = []

    # collaborative filter: estimates are logged in each display's drifting
    # odometry frame, so truth is rotated into that frame for comparison
    time_set = set(times)
    for row in result.estimates:
        if row.time not in time_set or row.time == 0.0:
            continue
        tu = truth.get((row.time, row.display))
        tv = truth.get((row.time, row.target))
        if tu is None or tv is None:
            continue
        dx, dy, dz = tv.x - tu.x, tv.y - tu.y, tv.z - tu.z
        true_dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        if true_dist <= 0.0:
            continue
        rel_true = rotate_yaw(Vec3(dx, dy, dz), -tu.vio_yaw)
        samples.append(("rbpf", make_error_sample(
            row.time, row.display, row.target,
            row.x - rel_true.x, row.y - rel_true.y, row.z - rel_true.z,
            true_dist, camera)))

    # dead reckoning from known starts (world frame)
    starts = {u: (np.array([truth[(0.0, u)].x, truth[(0.0, u)].y, truth[(0.0, u)].z]),
                  truth[(0.0, u)].vio_yaw)
              for u in users if (0.0, u) in truth}
    dead_reckoned = vio_only_baseline(result.events, starts)
    _pairwise_samples(samples, "vio_only", dead_reckoned, users, truth, times, camera)

    # anchor oracle (needs at least one tag with known position); uses the
    # same tag subset the filters were allowed to range against
    if result.used_tag_ids:
        anchors = {t: np.array([truth[(0.0, t)].x, truth[(0.0, t)].y, truth[(0.0, t)].z])
                   for t in result.used_tag_ids if (0.0, t) in truth}
        oracle = anchor_oracle_baseline(
            result.events, anchors, users,
            noise=result.config.filter.range_noise,
            vio_noise=result.config.filter.vio_noise,
            vertical_extent=result.config.filter.vertical_extent,
            num_particles=result.config.filter.m_display,
            seed=result.config.seed,
            sample_times=[t for t in times if t > 0.0],
        )
        _pairwise_samples(samples, "anchor_oracle", oracle, users, truth, times, camera)

    samples.sort(key=lambda ms: (ms[0], ms[1].time, ms[1].display, ms[1].target))
    return samples


def _pairwise_samples(samples, method, series, users, truth, times, camera):
    for t in times:
        if t == 0.0:
            continue
        est = {}
        for u in users:
            if u in series:
                est[u] = series_at(series[u], t)
        for u in users:
            for v in users:
                if u == v or est.get(u) is None or est.get(v) is None:
                    continue
                tu, tv = truth[(t, u)], truth[(t, v)]
                dxt, dyt, dzt = tv.x - tu.x, tv.y - tu.y, tv.z - tu.z
                true_dist = math.sqrt(dxt * dxt + dyt * dyt + dzt * dzt)
                if true_dist <= 0.0:
                    continue
                rel_est = est[v] - est[u]
                samples.append((method, make_error_sample(
                    t, u, v,
                    float(rel_est[0] - dxt), float(rel_est[1] - dyt),
                    float(rel_est[2] - dzt), true_dist, camera)))


# ----------------------------------------------------------------------
# aggregation


def filter_samples(samples, method: str, pair_kind: str = "all",
                   user_ids=(), t_min: float = -math.inf, t_max: float = math.inf):
    """Select geometric samples: pair_kind in {all, user-user, user-tag}."""
    users = set(user_ids)
    out = []
    for m, s in samples:
        if m != method or not (t_min <= s.time <= t_max):
            continue
        is_uu = s.display in users and s.target in users
        if pair_kind == "user-user" and not is_uu:
            continue
        if pair_kind == "user-tag" and (s.target in users or s.display not in users):
            continue
        out.append(s)
    return out


def median_geom(samples, method: str, pair_kind: str = "all", user_ids=(),
                t_min: float = -math.inf, t_max: float = math.inf) -> float:
    sel = filter_samples(samples, method, pair_kind, user_ids, t_min, t_max)
    if not sel:
        return math.nan
    return float(np.median([s.geom_3d for s in sel]))


def summarize_method(samples, method: str) -> MethodSummary | None:
    geoms = [s.geom_3d for m, s in samples if m == method]
    dpes = [s.dpe for m, s in samples if m == method]
    if not geoms:
        return None
    gp = np.percentile(geoms, [50, 90, 99])
    dp = np.percentile(dpes, [50, 90, 99])
    return MethodSummary(len(geoms), *(float(v) for v in gp), *(float(v) for v in dp))


def protocol_stats(result: WorldResult) -> ProtocolStats:
    starts = successes = collisions = 0
    per_pair: dict[tuple[int, int], int] = {}
    for e in result.events:
        if e.kind == "twr_start":
            starts += 1
        elif e.kind == "twr_collision":
            collisions += 1
        elif e.kind == "twr_success":
            successes += 1
            per_pair[(e.src, e.dst)] = per_pair.get((e.src, e.dst), 0) + 1
    duration = result.config.duration_s
    rates = [c / duration for c in per_pair.values()] or [0.0]
    attempts = successes + collisions
    return ProtocolStats(
        twr_starts=starts, successes=successes, collisions=collisions,
        delivery_rate=successes / attempts if attempts else 0.0,
        collision_rate=collisions / attempts if attempts else 0.0,
        neighbor_rate_mean_hz=float(np.mean(rates)),
        neighbor_rate_min_hz=float(np.min(rates)),
        neighbor_rate_max_hz=float(np.max(rates)),
    )


def bandwidth_stats(result: WorldResult) -> BandwidthStats:
    per_link: dict[tuple[int, int], float] = {}
    max_bytes = 0
    count = 0
    for e in result.events:
        if e.kind != "msg":
            continue
        count += 1
        size = int(e.values[0])
        max_bytes = max(max_bytes, size)
        per_link[(e.src, e.dst)] = per_link.get((e.src, e.dst), 0.0) + size * 8.0
    duration = result.config.duration_s
    max_bps = max(per_link.values()) / duration if per_link else 0.0
    return BandwidthStats(count, max_bytes, max_bps)


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    def ranks(a):
        a = np.asarray(a, dtype=float)
        order = np.argsort(a, kind="stable")
        r = np.empty(len(a))
        i = 0
        while i < len(a):
            j = i
            while j + 1 < len(a) and a[order[j + 1]] == a[order[i]]:
                j += 1
            r[order[i : j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        return r
    rx, ry = ranks(x), ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(np.sum(rx * rx) * np.sum(ry * ry)))
    if denom == 0.0:
        return 0.0
    return float(np.sum(rx * ry) / denom)


def distance_buckets(samples, method: str, width: float = 2.0, lo: float = 0.0,
                     hi: float = 28.0, min_count: int = 30):
    """Per-separation-bucket medians: (center, n, median geom, median dpe)."""
    edges = np.arange(lo, hi + width, width)
    out = []
    sel = [s for m, s in samples if m == method]
    for k in range(len(edges) - 1):
        inside = [s for s in sel if edges[k] <= s.true_dist < edges[k + 1]]
        if len(inside) < min_count:
            continue
        out.append((
            float(0.5 * (edges[k] + edges[k + 1])),
            len(inside),
            float(np.median([s.geom_3d for s in inside])),
            float(np.median([s.dpe for s in inside])),
        ))
    return out


# ----------------------------------------------------------------------
# top-level entry points


def run_experiment(config_source, seed: int | None = None,
                   out_dir: str | None = None, fmt: str = "csv") -> RunReport:
    """Execute one scenario plus baselines and aggregate a report."""
    if isinstance(config_source, ScenarioConfig):
        cfg = config_source if seed is None else replace(config_source, seed=seed)
    else:
        cfg = load_scenario(config_source, seed=seed)
    result = run_world(cfg)
    samples = compute_samples(result)
    summaries = {}
    for method in METHODS:
        summary = summarize_method(samples, method)
        if summary is not None:
            summaries[method] = summary
    report = RunReport(
        scenario_id=cfg.scenario_id,
        seed=cfg.seed,
        samples=samples,
        summaries=summaries,
        protocol=protocol_stats(result),
        bandwidth=bandwidth_stats(result),
        peak_memory=dict(result.peak_memory),
        energy=result.energy,
        config_echo=asdict(cfg),
        cpu_seconds=dict(result.cpu_seconds),
        result=result,
    )
    if out_dir is not None:
        write_report(report, out_dir, fmt=fmt)
    return report


def apply_axis(cfg: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis == "num_static_tags":
        # subsets of one fixed deployment: the full tag set stays on the air,
        # filters range against the first k, so runs pair across k
        k = int(value)
        if cfg.num_tags >= k:
            return replace(cfg, tag_subset=tuple(range(k)))
        return replace(cfg, num_tags=k)
    if axis == "nlos_level":
        name = _NLOS_LEVEL_BUILDINGS[str(value)]
        return replace(cfg, building_name=name, user_floors=())
    if axis == "mobility":
        return replace(cfg, mobility=_MOBILITY_VALUES[str(value)])
    if axis == "transport_drop":
        return replace(cfg, transport=replace(cfg.transport, drop_prob=float(value)))
    if axis == "separation_bucket":
        return cfg  # single run; aggregation happens per bucket downstream
    raise ConfigError(f"unknown sweep axis {axis!r}; known: {SWEEP_AXES}")


def sweep(config_source, axis: str, values, seed: int | None = None,
          out_dir: str | None = None, fmt: str = "csv") -> list[RunReport]:
    """One run per axis value with shared seeds (paired comparisons)."""
    if isinstance(config_source, ScenarioConfig):
        base = config_source
    else:
        base = load_scenario(config_source, seed=seed)
    if seed is not None:
        base = replace(base, seed=seed)
    if axis == "separation_bucket":
        values = [None]
    reports = []
    for value in values:
        cfg = base if value is None else apply_axis(base, axis, value)
        label = "all" if value is None else str(value)
        cfg = replace(cfg, scenario_id=f"{base.scenario_id}__{axis}={label}")
        sub = os.path.join(out_dir, f"{axis}={label}") if out_dir else None
        reports.append(run_experiment(cfg, out_dir=sub, fmt=fmt))
    return reports


# ----------------------------------------------------------------------
# persistence


def _summary_dict(report: RunReport) -> dict:
    return {
        "scenario_id": report.scenario_id,
        "seed": report.seed,
        "methods": {m: asdict(s) for m, s in sorted(report.summaries.items())},
        "protocol": asdict(report.protocol),
        "bandwidth": asdict(report.bandwidth),
        "peak_memory_bytes": {str(k): v for k, v in sorted(report.peak_memory.items())},
        "energy_mj": {str(k): v for k, v in sorted(report.energy.items())},
        "config": report.config_echo,
    }


def write_samples_csv(samples, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "time_s", "display", "target", "geom_3d", "eps_xy",
                    "eps_z", "true_dist", "dpe", "pixel_err"])
        for method, s in samples:
            w.writerow([method, repr(s.time), s.display, s.target, repr(s.geom_3d),
                        repr(s.eps_xy), repr(s.eps_z), repr(s.true_dist),
                        repr(s.dpe), repr(s.pixel_err)])


def read_samples_csv(path) -> list[tuple[str, ErrorSample]]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append((row["method"], ErrorSample(
                float(row["time_s"]), int(row["display"]), int(row["target"]),
                float(row["geom_3d"]), float(row["eps_xy"]), float(row["eps_z"]),
                float(row["true_dist"]), float(row["dpe"]), float(row["pixel_err"]))))
    return out


def write_report(report: RunReport, out_dir: str, fmt: str = "csv"):
    os.makedirs(out_dir, exist_ok=True)
    write_samples_csv(report.samples, os.path.join(out_dir, "samples.csv"))
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(_summary_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if report.result is not None:
        report.result.write_events_csv(os.path.join(out_dir, "events.csv"))
        report.result.write_truth_csv(os.path.join(out_dir, "truth.csv"))
        report.result.write_estimates_csv(os.path.join(out_dir, "estimates.csv"))
    # non-canonical diagnostics: wall-clock measurements are not reproducible
    with open(os.path.join(out_dir, "timings.json"), "w") as fh:
        json.dump({"cpu_seconds": {str(k): v for k, v in sorted(report.cpu_seconds.items())}},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    if fmt == "json":
        with open(os.path.join(out_dir, "samples.json"), "w") as fh:
            json.dump([{"method": m, **asdict(s)} for m, s in report.samples], fh)
            fh.write("\n")


def reaggregate(out_dir: str) -> dict:
    """Recompute method summaries from an emitted per-sample CSV."""
    samples = read_samples_csv(os.path.join(out_dir, "samples.csv"))
    methods = sorted({m for m, _ in samples})
    return {m: asdict(summarize_method(samples, m)) for m in methods}
