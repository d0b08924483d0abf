"""Slot-level traffic simulation of one deployment drop.

The TDD frame is DL, DL, UL, DL with 0.5 ms slots. The UAV is a half-duplex
in-band IAB node: DL slots alternate between backhaul reception and access
transmission (DL ordinal even -> backhaul), and the UL slot alternates by
period (even period -> backhaul). Sectors split their slot bandwidth equally
among their active flows; at the donor the UAV's backhaul traffic counts as
one aggregate flow.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernel, radio
from .config import Config, ConfigError
from .mdp import UavState
from .reward import MetricsVector
from .scenario import (SECTORS_PER_SITE, UAV_SITE_ID, Deployment, LoadProfile, SiteKind, User,
                       drop_users)

N_SECTORS = SECTORS_PER_SITE * (UAV_SITE_ID + 1)
UAV_SECTORS = tuple(range(SECTORS_PER_SITE * UAV_SITE_ID, N_SECTORS))
DL, UL = 0, 1
_EPS_BITS = 1e-6
_TIE_DB = 1e-9

# activity-trace bits
TX_ACCESS, RX_BACKHAUL, TX_BACKHAUL, RX_ACCESS = 1, 2, 4, 8


@dataclass(frozen=True)
class TddPattern:
    slots: tuple[str, ...] = ("DL", "DL", "UL", "DL")
    slot_duration: float = 0.5e-3

    @property
    def period(self) -> float:
        return self.slot_duration * len(self.slots)

    def direction(self, n: int) -> int:
        return DL if self.slots[n % 4] == "DL" else UL

    def is_backhaul(self, n: int) -> bool:
        """Whether the UAV spends slot ``n`` on its backhaul link."""
        period, pos = divmod(n, 4)
        if self.slots[pos] == "UL":
            return period % 2 == 0
        ordinal = 3 * period + (pos if pos < 2 else pos - 1)
        return ordinal % 2 == 0


TDD = TddPattern()


@dataclass(frozen=True)
class Association:
    serving: tuple[int, ...]          # per user: sector id, -1 if unservable
    uav_donor: int
    uav_backhaul_sector: int
    effective_se: tuple[float, ...]   # DL effective SE at association

    def via_uav(self, user_index: int) -> bool:
        return self.serving[user_index] in UAV_SECTORS


@dataclass(frozen=True)
class KpiSample:
    dl_throughputs: tuple[float, ...]      # MC users, completed flows, Mbit/s
    ul_throughputs: tuple[float, ...]
    dl_flows: int
    ul_flows: int
    dl_drops: int
    ul_drops: int
    backhaul_mean_se: float
    backhaul_peak_rate_mbps: float
    uav_throughputs: tuple[float, ...]     # every completed UAV-served flow, Mbit/s
    activity_trace: tuple[int, ...] | None = field(default=None, compare=True)

    @property
    def degenerate(self) -> tuple[bool, bool]:
        return (self.dl_flows == 0, self.ul_flows == 0)

    def to_bytes(self) -> bytes:
        return json.dumps(asdict(self), sort_keys=True).encode()


@dataclass
class LinkTable:
    """Received powers (mW) for every transmitter/receiver pair of a drop."""

    users: tuple[User, ...]
    dl_power: np.ndarray      # [N_SECTORS, U + 1]; column U is the UAV backhaul receiver
    ul_power: np.ndarray      # [U + 1, N_SECTORS]; row U is the UAV backhaul transmitter
    dl_noise: np.ndarray      # [U + 1]
    ul_noise: float
    donor: int
    uav_bh_sector: int

    @property
    def n_users(self) -> int:
        return len(self.users)


def _sector_layout(deployment: Deployment):
    positions = np.zeros((N_SECTORS, 3))
    present = np.zeros(N_SECTORS, dtype=bool)
    for site in deployment.sites:
        for k, sid in enumerate(site.sector_ids()):
            positions[sid] = site.position.as_array()
            present[sid] = site.kind is not SiteKind.MACRO_DAMAGED
    return positions, present


def _sector_gain(deployment: Deployment, sector_id: int, targets: np.ndarray) -> np.ndarray:
    site = deployment.site_of(sector_id)
    src = np.broadcast_to(site.position.as_array(), targets.shape)
    return radio.sector_gain_array(deployment.sector(sector_id), src, targets)


def _backhaul_powers_dbm(deployment: Deployment) -> tuple[np.ndarray, np.ndarray]:
    """Per macro sector: DL received power at the UAV and the best UAV sector toward it."""
    config = deployment.config
    uav = deployment.uav_site
    uav_pos = uav.position.as_array()
    power = np.full(N_SECTORS, -np.inf)
    best_uav_sector = np.full(N_SECTORS, -1)
    for site in deployment.functioning_sites():
        site_pos = site.position.as_array()
        d = float(np.linalg.norm(site_pos - uav_pos))
        pl = float(radio.path_loss_array(d, config.pl_exp_aerial, config.carrier_ghz))
        uav_gains = [float(_sector_gain(deployment, j, site_pos[None, :])[0]) for j in UAV_SECTORS]
        j_best = int(np.argmax(uav_gains))
        for sid in site.sector_ids():
            g_tx = float(_sector_gain(deployment, sid, uav_pos[None, :])[0])
            power[sid] = site.max_tx_power + g_tx + uav_gains[j_best] - pl
            best_uav_sector[sid] = UAV_SECTORS[j_best]
    return power, best_uav_sector


def _argmax_lowest(values: np.ndarray, tol: float) -> int:
    best = np.max(values)
    return int(np.flatnonzero(values >= best - tol)[0])


def _with_uav(deployment: Deployment, uav: UavState) -> Deployment:
    return deployment.with_uav(uav.tilt, uav.x, uav.y, uav.z)


def select_donor(deployment: Deployment, uav: UavState) -> int:
    """Functioning macro sector giving the strongest backhaul signal at the UAV."""
    dep = _with_uav(deployment, uav)
    power, _ = _backhaul_powers_dbm(dep)
    return _argmax_lowest(power, _TIE_DB)


def build_links(deployment: Deployment, uav: UavState, users, seed: int = 0) -> LinkTable:
    config = deployment.config
    dep = _with_uav(deployment, uav)
    users = tuple(users)
    n_users = len(users)
    sector_pos, present = _sector_layout(dep)
    user_pos = np.array([u.position.as_array() for u in users]).reshape(n_users, 3)
    uav_pos = dep.uav_site.position.as_array()

    bh_power, bh_uav_sector = _backhaul_powers_dbm(dep)
    donor = _argmax_lowest(bh_power, _TIE_DB)
    uav_bh_sector = int(bh_uav_sector[donor])

    shadow = np.zeros((UAV_SITE_ID + 1, n_users + 1))
    if config.shadowing_sigma_db > 0:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0x5AD0]))
        shadow = rng.normal(0.0, config.shadowing_sigma_db, size=shadow.shape)

    dl_db = np.full((N_SECTORS, n_users + 1), -np.inf)
    ul_db = np.full((n_users + 1, N_SECTORS), -np.inf)
    for sid in range(N_SECTORS):
        if not present[sid]:
            continue
        site = dep.site_of(sid)
        pos = sector_pos[sid]
        if n_users:
            d = np.linalg.norm(user_pos - pos, axis=1)
            pl = radio.path_loss_array(d, config.pl_exp_terrestrial, config.carrier_ghz)
            gain = _sector_gain(dep, sid, user_pos)
            loss = pl - gain - shadow[site.id, :n_users]
            dl_db[sid, :n_users] = site.max_tx_power - loss
            ul_db[:n_users, sid] = np.array([u.max_tx_power for u in users]) - loss
        if site.kind is SiteKind.MACRO_FUNCTIONING:
            d = float(np.linalg.norm(uav_pos - pos))
            pl = float(radio.path_loss_array(d, config.pl_exp_aerial, config.carrier_ghz))
            g_macro = float(_sector_gain(dep, sid, uav_pos[None, :])[0])
            g_uav = float(_sector_gain(dep, uav_bh_sector, pos[None, :])[0])
            loss = pl - g_macro - g_uav - shadow[site.id, n_users]
            dl_db[sid, n_users] = site.max_tx_power - loss
            ul_db[n_users, sid] = config.uav_tx_dbm - loss

    bw = config.bandwidth_mhz * 1e6
    n_user = radio.noise_dbm(bw, config.nf_user_db)
    n_bs = radio.noise_dbm(bw, config.nf_bs_db)
    dl_noise = np.full(n_users + 1, radio.db_to_linear(n_user))
    dl_noise[n_users] = radio.db_to_linear(n_bs)
    return LinkTable(users, radio.db_to_linear(dl_db), radio.db_to_linear(ul_db), dl_noise,
                     float(radio.db_to_linear(n_bs)), donor, uav_bh_sector)


def _se(config: Config, sinr_lin: np.ndarray) -> np.ndarray:
    return radio.spectral_efficiency_array(radio.linear_to_db(sinr_lin), config.sinr_min_db, config.se_cap)


def full_load_se(config: Config, links: LinkTable) -> tuple[np.ndarray, float]:
    """SE of every (sector, user) pair and of the backhaul with every other sector transmitting."""
    n = links.n_users
    p = links.dl_power[:, :n]
    total = p.sum(axis=0)
    sinr = p / (total[None, :] - p + links.dl_noise[None, :n])
    se = _se(config, sinr)
    col = links.dl_power[:, n]
    bh = col[links.donor] / (col.sum() - col[links.donor] + links.dl_noise[n])
    return se, float(_se(config, np.array(bh)))


def associate_links(config: Config, links: LinkTable) -> Association:
    se, bh_se = full_load_se(config, links)
    effective = se.copy()
    effective[list(UAV_SECTORS), :] = np.minimum(effective[list(UAV_SECTORS), :], bh_se)
    serving, best_se = [], []
    for u in range(links.n_users):
        column = effective[:, u]
        best = float(np.max(column))
        if best <= 0.0:
            serving.append(-1)
        else:
            serving.append(int(np.flatnonzero(column >= best - 1e-12)[0]))
        best_se.append(max(best, 0.0))
    return Association(tuple(serving), links.donor, links.uav_bh_sector, tuple(best_se))


def associate_users(deployment: Deployment, uav: UavState, users, seed: int = 0) -> Association:
    """Attach each user to the server with the best effective DL SE.

    Via the UAV the effective SE is min(access, backhaul); users whose best
    effective SE is zero are unservable (serving id -1).
    """
    links = build_links(deployment, uav, users, seed)
    return associate_links(deployment.config, links)


@lru_cache(maxsize=16)
def _arrivals(users, load: LoadProfile, duration: float, seed: int):
    """Poisson flow arrivals per (user, direction) as time-scaled unit-rate processes.

    A fixed seed yields the same unit-rate event sequence for every load, so a
    higher arrival rate compresses the same pattern in time.
    """
    root = np.random.SeedSequence([int(seed) & (2**64 - 1), 0xF10E])
    children = root.spawn(2 * len(users))
    horizon = duration * load.arrival_rate
    times, sizes, owners, dirs = [], [], [], []
    for i, user in enumerate(users):
        for d in (DL, UL):
            rng = np.random.default_rng(children[2 * i + d])
            gaps = rng.exponential(1.0, size=16)
            size = rng.exponential(load.mean_packet_bits, size=16)
            while gaps.sum() <= horizon:
                gaps = np.concatenate([gaps, rng.exponential(1.0, size=16)])
                size = np.concatenate([size, rng.exponential(load.mean_packet_bits, size=16)])
            t = np.cumsum(gaps)
            k = int(np.searchsorted(t, horizon, side="left"))
            times.append(t[:k] / load.arrival_rate)
            sizes.append(size[:k])
            owners.append(np.full(k, i))
            dirs.append(np.full(k, d))
    if not times:
        empty = np.zeros(0)
        return empty, empty, empty.astype(np.int64), empty.astype(np.int64)
    times = np.concatenate(times)
    order = np.lexsort((np.concatenate(dirs), np.concatenate(owners), times))
    out = (times[order], np.concatenate(sizes)[order], np.concatenate(owners)[order],
           np.concatenate(dirs)[order])
    for arr in out:
        arr.setflags(write=False)
    return out


def run_drop(deployment: Deployment, uav: UavState, load: LoadProfile, seed: int,
             sim_duration: float | None = None, users=None, trace: bool = False) -> KpiSample:
    """Simulate one drop and collect MC-user KPIs.

    Arrivals occur during ``sim_duration``; the run then drains until every
    flow has completed or timed out. UL SINR accounts for a transmitter
    concentrating its power on its share of the sector bandwidth.
    """
    config = deployment.config
    duration = config.sim_duration_s if sim_duration is None else float(sim_duration)
    periods = duration / TDD.period
    if not duration > 0 or abs(periods - round(periods)) > 1e-9:
        raise ConfigError(f"sim_duration must be a positive multiple of {TDD.period} s, got {duration}")
    n_nominal = 4 * int(round(periods))
    if users is None:
        users = drop_users(deployment, load, seed)
    users = tuple(users)
    links = build_links(deployment, uav, users, seed)
    assoc = associate_links(config, links)
    n_users = len(users)

    serving = np.array(assoc.serving, dtype=np.int64)
    via_uav = np.isin(serving, UAV_SECTORS)
    is_mc = np.array([u.is_mc for u in users], dtype=bool)

    arr_t, arr_size, arr_user, arr_dir = _arrivals(users, load, duration, seed)
    f_user = arr_user.astype(np.int64)
    f_dir = arr_dir.astype(np.int64)
    f_uav = via_uav[f_user]
    f_server = serving[f_user]
    dl_serving = np.concatenate([serving, [links.donor]]).astype(np.int64)

    status, throughput, bh_mean, bh_peak, codes = _kernel.simulate(
        links.dl_power, links.dl_noise, dl_serving, links.ul_power, links.ul_noise,
        arr_t.astype(float), arr_size.astype(float), f_user, f_dir, f_uav, f_server,
        links.donor, n_users, n_nominal, TDD.slot_duration, config.bandwidth_mhz * 1e6,
        config.timeout_s, config.sinr_min_db, config.se_cap, trace)

    mc = is_mc[f_user]
    dl_mc = mc & (f_dir == DL)
    ul_mc = mc & (f_dir == UL)
    completed = status == 2
    return KpiSample(
        dl_throughputs=tuple(float(v) for v in throughput[dl_mc & completed]),
        ul_throughputs=tuple(float(v) for v in throughput[ul_mc & completed]),
        dl_flows=int(dl_mc.sum()),
        ul_flows=int(ul_mc.sum()),
        dl_drops=int((dl_mc & (status == 3)).sum()),
        ul_drops=int((ul_mc & (status == 3)).sum()),
        backhaul_mean_se=float(bh_mean),
        backhaul_peak_rate_mbps=float(bh_peak),
        uav_throughputs=tuple(float(v) for v in throughput[f_uav & completed]),
        activity_trace=tuple(int(c) for c in codes) if trace else None,
    )


def nearest_rank(values, p: float) -> float:
    """The ceil(p*n)-th smallest value (1-based); 0 for an empty list."""
    ordered = sorted(values)
    if not ordered:
        return 0.0
    rank = max(1, math.ceil(p * len(ordered) - 1e-12))
    return float(ordered[rank - 1])


def kpis_to_metrics(sample: KpiSample) -> MetricsVector:
    """Drop rates and nearest-rank 50th/5th percentile throughputs of MC flows."""
    beta_dl = sample.dl_drops / sample.dl_flows if sample.dl_flows else 0.0
    beta_ul = sample.ul_drops / sample.ul_flows if sample.ul_flows else 0.0
    return MetricsVector(
        beta_dl=beta_dl,
        beta_ul=beta_ul,
        a_dl50=nearest_rank(sample.dl_throughputs, 0.50),
        a_ul50=nearest_rank(sample.ul_throughputs, 0.50),
        a_dl5=nearest_rank(sample.dl_throughputs, 0.05),
        a_ul5=nearest_rank(sample.ul_throughputs, 0.05),
    )
