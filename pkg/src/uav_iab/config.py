"""Flat key-value configuration shared by every module and CLI command.

Config files are YAML mappings (JSON is accepted too, being a YAML subset).
Unknown keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration values."""


@dataclass(frozen=True)
class Config:
    # scenario
    isd_m: float = 1500.0
    carrier_ghz: float = 3.5
    bandwidth_mhz: float = 100.0
    disaster_radius_m: float = 350.0
    macro_height_m: float = 35.0
    macro_tilt_deg: float = 3.0
    n_mc_users: int = 20
    n_normal_users: int = 60
    arrival_light: float = 0.5
    arrival_heavy: float = 2.5
    packet_mbit: float = 2.0
    seed: int = 0
    # radio
    macro_tx_dbm: float = 46.0
    uav_tx_dbm: float = 40.0
    user_tx_dbm: float = 23.0
    pl_exp_aerial: float = 2.2
    pl_exp_terrestrial: float = 3.5
    shadowing_sigma_db: float = 0.0
    max_gain_dbi: float = 14.0
    h_beamwidth_deg: float = 65.0
    v_beamwidth_deg: float = 10.0
    front_back_db: float = 30.0
    sla_v_db: float = 30.0
    nf_user_db: float = 9.0
    nf_bs_db: float = 5.0
    sinr_min_db: float = -6.0
    se_cap: float = 7.8
    # simulator
    sim_duration_s: float = 2.0
    timeout_s: float = 2.0
    duty_split: str = "alternate"
    # reward
    w_drop: float = 0.5
    w_p5: float = 0.3
    w_p50: float = 0.2

    def __post_init__(self):
        positive = ("isd_m", "carrier_ghz", "bandwidth_mhz", "disaster_radius_m",
                    "arrival_light", "arrival_heavy", "packet_mbit", "h_beamwidth_deg",
                    "v_beamwidth_deg", "se_cap", "sim_duration_s", "timeout_s",
                    "pl_exp_aerial", "pl_exp_terrestrial")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.n_mc_users < 1 or self.n_normal_users < 0:
            raise ConfigError("n_mc_users must be >= 1 and n_normal_users >= 0")
        if self.arrival_heavy <= self.arrival_light:
            raise ConfigError("arrival_heavy must exceed arrival_light")
        if self.shadowing_sigma_db < 0:
            raise ConfigError("shadowing_sigma_db must be >= 0")
        if self.duty_split != "alternate":
            raise ConfigError(f"unknown duty_split {self.duty_split!r}")
        if self.disaster_radius_m >= self.isd_m:
            raise ConfigError("disaster circle must lie inside the damaged cell")

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def config_from_dict(data: dict[str, Any] | None) -> Config:
    data = dict(data or {})
    known = {f.name: f for f in fields(Config)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        kind = known[key].type
        try:
            if kind == "int":
                kwargs[key] = int(value)
            elif kind == "float":
                kwargs[key] = float(value)
            else:
                kwargs[key] = str(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return Config(**kwargs)


def load_yaml_mapping(path: str | Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a key-value mapping")
    return data


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    return config_from_dict(load_yaml_mapping(path))
