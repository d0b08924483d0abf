"""Link budget: path loss, sectorised antenna pattern, SINR and spectral efficiency.

Scalar helpers take :class:`Position` objects; the ``*_array`` variants work
on broadcastable numpy arrays and are what the simulator uses.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .scenario import Position, SectorConfig

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0


class LinkClass(enum.Enum):
    TERRESTRIAL = "Terrestrial"
    AERIAL = "Aerial"


@dataclass(frozen=True)
class LinkBudget:
    path_loss: float
    tx_gain: float
    rx_gain: float
    rx_power: float
    sinr: float
    se: float


def free_space_intercept_db(carrier_ghz: float = 3.5) -> float:
    """Path loss at 1 m: 20*log10(4*pi/lambda)."""
    wavelength = SPEED_OF_LIGHT / (carrier_ghz * 1e9)
    return 20.0 * math.log10(4.0 * math.pi / wavelength)


def path_loss_array(distance, exponent: float, carrier_ghz: float = 3.5) -> np.ndarray:
    d = np.asarray(distance, dtype=float)
    if np.any(d < 1.0):
        raise ValueError("path loss undefined below 1 m")
    return free_space_intercept_db(carrier_ghz) + 10.0 * exponent * np.log10(d)


def path_loss_db(tx: Position, rx: Position, link_class: LinkClass,
                 exponents: tuple[float, float] = (3.5, 2.2), carrier_ghz: float = 3.5) -> float:
    """Log-distance loss; ``exponents`` is (terrestrial, aerial)."""
    d = math.dist((tx.x, tx.y, tx.z), (rx.x, rx.y, rx.z))
    if d < 1.0:
        raise ValueError(f"path loss undefined below 1 m (d={d:.3f})")
    n = exponents[1] if link_class is LinkClass.AERIAL else exponents[0]
    return float(path_loss_array(d, n, carrier_ghz))


def pattern_gain_array(azimuth_off, elevation, *, tilt, max_gain, h_beamwidth, v_beamwidth,
                       front_back_ratio, sla_v) -> np.ndarray:
    """Parametric 3-sector pattern.

    ``azimuth_off`` is the offset from boresight in degrees, ``elevation`` the
    depression angle below horizontal toward the target (down positive).
    """
    phi = (np.asarray(azimuth_off, dtype=float) + 180.0) % 360.0 - 180.0
    a_h = -np.minimum(12.0 * (phi / h_beamwidth) ** 2, front_back_ratio)
    a_v = -np.minimum(12.0 * ((np.asarray(elevation, dtype=float) - tilt) / v_beamwidth) ** 2, sla_v)
    return max_gain - np.minimum(-(a_h + a_v), front_back_ratio)


def bearing_and_depression(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Azimuth (deg, CCW from east) and depression angle from ``src`` toward ``dst``."""
    delta = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    horiz = np.hypot(delta[..., 0], delta[..., 1])
    azimuth = np.degrees(np.arctan2(delta[..., 1], delta[..., 0]))
    depression = np.degrees(np.arctan2(-delta[..., 2], horiz))
    return azimuth, depression


def sector_gain_array(sector: SectorConfig, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    azimuth, depression = bearing_and_depression(src, dst)
    return pattern_gain_array(
        azimuth - sector.azimuth, depression,
        tilt=sector.electrical_tilt, max_gain=sector.max_gain,
        h_beamwidth=sector.h_beamwidth, v_beamwidth=sector.v_beamwidth,
        front_back_ratio=sector.front_back_ratio, sla_v=sector.sla_v,
    )


def antenna_gain_db(sector: SectorConfig, src: Position, dst: Position) -> float:
    if src == dst:
        raise ValueError("gain undefined toward own position")
    return float(sector_gain_array(sector, src.as_array(), dst.as_array()))


def db_to_linear(db):
    return np.power(10.0, np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(lin, dtype=float))


def noise_dbm(bandwidth_hz: float, noise_figure_db: float) -> float:
    return THERMAL_NOISE_DBM_HZ + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


def sinr_db(signal_dbm: float, interferers_dbm, noise_dbm: float) -> float:
    if not math.isfinite(noise_dbm):
        raise ValueError("noise power must be finite")
    total = float(np.sum(db_to_linear(list(interferers_dbm)))) + float(db_to_linear(noise_dbm))
    return float(signal_dbm - 10.0 * math.log10(total))


def spectral_efficiency_array(sinr, sinr_min_db: float = -6.0, se_cap: float = 7.8) -> np.ndarray:
    s = np.asarray(sinr, dtype=float)
    se = np.minimum(np.log2(1.0 + db_to_linear(s)), se_cap)
    return np.where(s < sinr_min_db, 0.0, se)


def spectral_efficiency(sinr: float, sinr_min_db: float = -6.0, se_cap: float = 7.8) -> float:
    """Shannon SE capped at ``se_cap``; zero below the usability threshold."""
    return float(spectral_efficiency_array(sinr, sinr_min_db, se_cap))
