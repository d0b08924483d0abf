"""Deployment geometry and user populations.

Seven macro sites sit on a hexagonal grid; the centre one is damaged and a
three-sector UAV site is added once a UAV configuration is applied.
Sector ids are ``3 * site_id + k`` so the damaged site owns ids 0..2, the
functioning ring 3..20 and the UAV 21..23.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .config import Config, ConfigError

USER_HEIGHT_M = 1.5
SECTORS_PER_SITE = 3
MACRO_AZIMUTH_OFFSET_DEG = 30.0
UAV_AZIMUTH_OFFSET_DEG = 0.0
UAV_SITE_ID = 7


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite position {self}")
        if self.z < 0:
            raise ValueError(f"negative height {self.z}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


class SiteKind(enum.Enum):
    MACRO_FUNCTIONING = "MacroFunctioning"
    MACRO_DAMAGED = "MacroDamaged"
    UAV_IAB = "UavIab"


@dataclass(frozen=True)
class SectorConfig:
    azimuth: float
    electrical_tilt: float
    max_gain: float = 14.0
    h_beamwidth: float = 65.0
    v_beamwidth: float = 10.0
    front_back_ratio: float = 30.0
    sla_v: float = 30.0

    def __post_init__(self):
        if self.h_beamwidth <= 0 or self.v_beamwidth <= 0:
            raise ValueError("beamwidths must be positive")


@dataclass(frozen=True)
class Site:
    id: int
    kind: SiteKind
    position: Position
    sectors: tuple[SectorConfig, ...]
    max_tx_power: float

    def sector_ids(self) -> range:
        return range(SECTORS_PER_SITE * self.id, SECTORS_PER_SITE * (self.id + 1))


@dataclass(frozen=True)
class User:
    id: int
    position: Position
    is_mc: bool
    max_tx_power: float = 23.0


@dataclass(frozen=True)
class LoadProfile:
    name: str
    arrival_rate: float
    mean_packet_bits: float
    n_mc_users: int
    n_normal_users: int

    def __post_init__(self):
        if self.name not in ("Light", "Heavy"):
            raise ValueError(f"unknown load {self.name!r}")
        if min(self.arrival_rate, self.mean_packet_bits, self.n_mc_users) <= 0 or self.n_normal_users < 0:
            raise ValueError("load profile values must be positive")


def load_profile(config: Config, name: str) -> LoadProfile:
    """Light or Heavy profile from the config (name is case-insensitive)."""
    key = name.strip().lower()
    if key not in ("light", "heavy"):
        raise ConfigError(f"unknown load {name!r}; expected light or heavy")
    rate = config.arrival_light if key == "light" else config.arrival_heavy
    return LoadProfile(
        name=key.capitalize(),
        arrival_rate=rate,
        mean_packet_bits=config.packet_mbit * 1e6,
        n_mc_users=config.n_mc_users,
        n_normal_users=config.n_normal_users,
    )


@dataclass(frozen=True)
class Deployment:
    config: Config
    sites: tuple[Site, ...]
    uav_tilt: float | None = field(default=None)

    @property
    def uav_site(self) -> Site | None:
        for site in self.sites:
            if site.kind is SiteKind.UAV_IAB:
                return site
        return None

    def functioning_sites(self) -> list[Site]:
        return [s for s in self.sites if s.kind is SiteKind.MACRO_FUNCTIONING]

    def sector(self, sector_id: int) -> SectorConfig:
        site = self.site_of(sector_id)
        return site.sectors[sector_id % SECTORS_PER_SITE]

    def site_of(self, sector_id: int) -> Site:
        site_id = sector_id // SECTORS_PER_SITE
        for site in self.sites:
            if site.id == site_id:
                return site
        raise KeyError(f"no site for sector {sector_id}")

    def with_uav(self, tilt: float, x: float, y: float, z: float) -> "Deployment":
        """Copy of the deployment with the UAV site placed and tilted."""
        sites = tuple(s for s in self.sites if s.kind is not SiteKind.UAV_IAB)
        uav = Site(
            id=UAV_SITE_ID,
            kind=SiteKind.UAV_IAB,
            position=Position(float(x), float(y), float(z)),
            sectors=_sectors(self.config, UAV_AZIMUTH_OFFSET_DEG, float(tilt)),
            max_tx_power=self.config.uav_tx_dbm,
        )
        return Deployment(self.config, sites + (uav,), uav_tilt=float(tilt))


def _sectors(config: Config, offset: float, tilt: float) -> tuple[SectorConfig, ...]:
    return tuple(
        SectorConfig(
            azimuth=(offset + 120.0 * k) % 360.0,
            electrical_tilt=tilt,
            max_gain=config.max_gain_dbi,
            h_beamwidth=config.h_beamwidth_deg,
            v_beamwidth=config.v_beamwidth_deg,
            front_back_ratio=config.front_back_db,
            sla_v=config.sla_v_db,
        )
        for k in range(SECTORS_PER_SITE)
    )


def build_deployment(config: Config | None = None) -> Deployment:
    """Seven macro sites: damaged centre plus a functioning ring at distance ISD."""
    config = config or Config()
    if not config.isd_m > 0:
        raise ConfigError(f"isd_m must be positive, got {config.isd_m}")
    sites = [Site(0, SiteKind.MACRO_DAMAGED, Position(0.0, 0.0, config.macro_height_m),
                  _sectors(config, MACRO_AZIMUTH_OFFSET_DEG, config.macro_tilt_deg),
                  config.macro_tx_dbm)]
    for k in range(6):
        angle = math.radians(60.0 * k)
        pos = Position(config.isd_m * math.cos(angle), config.isd_m * math.sin(angle),
                       config.macro_height_m)
        sites.append(Site(k + 1, SiteKind.MACRO_FUNCTIONING, pos,
                          _sectors(config, MACRO_AZIMUTH_OFFSET_DEG, config.macro_tilt_deg),
                          config.macro_tx_dbm))
    return Deployment(config, tuple(sites))


def in_disaster_area(p: Position, radius: float = 350.0) -> bool:
    return math.hypot(p.x, p.y) <= radius


def _uniform_disc(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def drop_users(deployment: Deployment, load: LoadProfile, seed: int) -> list[User]:
    """MC users uniform in the disaster circle, normal users uniform in a disc of radius 2*ISD.

    Positions depend only on ``seed`` and the user counts, so light and heavy
    loads share a drop for the same seed.
    """
    config = deployment.config
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0x05E7]))
    mc = _uniform_disc(rng, load.n_mc_users, config.disaster_radius_m)
    normal = _uniform_disc(rng, load.n_normal_users, 2.0 * config.isd_m)
    users = []
    for i, (x, y) in enumerate(mc):
        users.append(User(i, Position(float(x), float(y), USER_HEIGHT_M), True, config.user_tx_dbm))
    for j, (x, y) in enumerate(normal):
        users.append(User(load.n_mc_users + j, Position(float(x), float(y), USER_HEIGHT_M), False,
                          config.user_tx_dbm))
    return users
