"""Scenario configuration files: INI sections over the simulation dataclasses.

Sections: [scenario] [nodes] [building] [noise] [transport] [protocol]
[filter] [seeds]. Every numeric default is overridable; unknown sections or
keys are rejected. Syntax errors surface with the line numbers reported by
the INI parser.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import replace

from .joint_filter import FilterConfig
from .particles import RangeNoiseParams, VioNoiseParams
from .protocol import ProtocolConfig
from .sensors import UwbModel
from .simulate import ScenarioConfig
from .transport import TransportConfig


class ConfigError(ValueError):
    """Malformed scenario configuration."""


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s: str) -> tuple[int, ...]:
    s = s.strip()
    return tuple(int(p) for p in s.split(",")) if s else ()


def _vec3_list(s: str) -> tuple[tuple[float, float, float], ...]:
    out = []
    for chunk in s.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = [float(p) for p in chunk.split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected x,y,z triple, got {chunk!r}")
        out.append(tuple(parts))
    return tuple(out)


def _opt_float(s: str) -> float | None:
    return None if s.strip().lower() in ("none", "default") else float(s)


_SCHEMA = {
    "scenario": {
        "id": str, "duration_s": float, "tick_hz": int, "mobility": str,
        "independent_mode": _bool, "message_rate_hz": float,
        "estimate_rate_hz": float, "truth_interval_s": float,
        "measure_cpu": _bool,
    },
    "nodes": {
        "num_users": int, "num_tags": int,
        "user_floors": _int_list, "tag_positions": _vec3_list,
        "tag_subset": _int_list,
    },
    "building": {"name": str},
    "noise": {
        "vio_sigma_xyz": float, "vio_sigma_theta": float,
        "uwb_sigma_r": float, "uwb_p_nlos": float,
        "nlos_outlier_factor": float, "nlos_outlier_cap": float,
        "nlos_outlier_mean_m": float, "nlos_sigma_factor": float,
        "radio_radius": float,
    },
    "transport": {"latency_mean": float, "jitter_std": float, "drop_prob": float},
    "protocol": {
        "t_ble": float, "t_uwb": float, "auto_t_uwb": _bool,
        "eviction_timeout": float, "exchange_duration": float,
        "rssi_threshold": float, "sleep_timeout": float,
    },
    "filter": {
        "m_display": int, "m_target": int, "sigma_xyz": float, "sigma_theta": float,
        "sigma_r": float, "p_nlos": float, "vertical_extent": float,
        "display_sigma_xyz": _opt_float, "ess_fraction": float,
        "recovery_fraction": float, "forced_resample_period": float,
        "coupling_subsample": int,
    },
    "seeds": {"master": int},
}


def parse_scenario_text(text: str, source: str = "<config>") -> ScenarioConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    values: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            conv = _SCHEMA[section].get(key)
            if conv is None:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            try:
                values[section][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for [{section}] {key} = {raw!r}: {exc}") from exc

    def sec(name):
        return values.get(name, {})

    try:
        cfg = ScenarioConfig(
            scenario_id=sec("scenario").get("id", "custom"),
            duration_s=sec("scenario").get("duration_s", 600.0),
            tick_hz=sec("scenario").get("tick_hz", 60),
            seed=sec("seeds").get("master", 0),
            building_name=sec("building").get("name", "office"),
            num_users=sec("nodes").get("num_users", 2),
            user_floors=sec("nodes").get("user_floors", ()),
            mobility=sec("scenario").get("mobility", "random_walk"),
            num_tags=sec("nodes").get("num_tags", 0),
            tag_positions=sec("nodes").get("tag_positions", ()),
            tag_subset=sec("nodes").get("tag_subset", ()),
            world_vio=VioNoiseParams(
                sec("noise").get("vio_sigma_xyz", 0.005),
                sec("noise").get("vio_sigma_theta", 0.0005),
            ),
            uwb=UwbModel(
                sigma_r=sec("noise").get("uwb_sigma_r", 0.1),
                p_nlos=sec("noise").get("uwb_p_nlos", 0.1),
                nlos_outlier_factor=sec("noise").get("nlos_outlier_factor", 3.0),
                nlos_outlier_cap=sec("noise").get("nlos_outlier_cap", 0.5),
                nlos_outlier_mean_m=sec("noise").get("nlos_outlier_mean_m", 3.0),
                nlos_sigma_factor=sec("noise").get("nlos_sigma_factor", 2.0),
                radio_radius=sec("noise").get("radio_radius", 60.0),
            ),
            transport=TransportConfig(
                latency_mean=sec("transport").get("latency_mean", 0.1),
                jitter_std=sec("transport").get("jitter_std", 0.02),
                drop_prob=sec("transport").get("drop_prob", 0.0),
            ),
            protocol=ProtocolConfig(
                t_ble=sec("protocol").get("t_ble", 0.2),
                t_uwb=sec("protocol").get("t_uwb", 0.1),
                rssi_threshold=sec("protocol").get("rssi_threshold", -85.0),
                eviction_timeout=sec("protocol").get("eviction_timeout", 15.0),
                exchange_duration=sec("protocol").get("exchange_duration", 0.003),
                radio_radius=sec("noise").get("radio_radius", 60.0),
                sleep_timeout=sec("protocol").get("sleep_timeout", 15.0),
            ),
            filter=FilterConfig(
                m_display=sec("filter").get("m_display", 500),
                m_target=sec("filter").get("m_target", 300),
                vio_noise=VioNoiseParams(
                    sec("filter").get("sigma_xyz", 0.02),
                    sec("filter").get("sigma_theta", 0.008),
                ),
                range_noise=RangeNoiseParams(
                    sec("filter").get("sigma_r", 0.1),
                    sec("filter").get("p_nlos", 0.1),
                ),
                vertical_extent=sec("filter").get("vertical_extent", 6.0),
                display_sigma_xyz=sec("filter").get("display_sigma_xyz", 0.008),
                ess_fraction=sec("filter").get("ess_fraction", 0.5),
                recovery_fraction=sec("filter").get("recovery_fraction", 0.02),
                forced_resample_period=sec("filter").get("forced_resample_period", 5.0),
                coupling_subsample=sec("filter").get("coupling_subsample", 32),
            ),
            independent_mode=sec("scenario").get("independent_mode", False),
            message_rate_hz=sec("scenario").get("message_rate_hz", 10.0),
            estimate_rate_hz=sec("scenario").get("estimate_rate_hz", 2.0),
            truth_interval_s=sec("scenario").get("truth_interval_s", 5.0),
            auto_t_uwb=sec("protocol").get("auto_t_uwb", True),
            measure_cpu=sec("scenario").get("measure_cpu", False),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg


def load_scenario(source: str, seed: int | None = None) -> ScenarioConfig:
    """Load a scenario from a file path or a bundled scenario name."""
    from .scenarios import BUNDLED

    if os.path.exists(source):
        with open(source) as fh:
            cfg = parse_scenario_text(fh.read(), source=source)
    elif source in BUNDLED:
        cfg = parse_scenario_text(BUNDLED[source], source=f"bundled:{source}")
    else:
        raise ConfigError(f"no such config file or bundled scenario: {source!r}")
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg
