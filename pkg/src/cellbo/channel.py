"""Large-scale propagation and small-scale fading for ground and aerial links.

Ground links follow the urban-macro dual-slope path-loss model with a
distance-dependent line-of-sight probability and 4 dB / 6 dB lognormal
shadowing (LoS / NLoS). Aerial links between 100 m and 300 m are always
line-of-sight, with a height-dependent shadowing spread and unit
small-scale power; ground links see Rayleigh (unit-mean exponential)
small-scale power.

Sector antennas use the parabolic element pattern parameterized by its
vertical/horizontal half-power beamwidths, steered in elevation by an
electrical tilt (negative = downtilt). Angles are in degrees and are
expected pre-wrapped to (-180, 180] by the caller. All functions
broadcast over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GUE = "gue"
UAV = "uav"

SPEED_OF_LIGHT_M_S = 3.0e8

# Parabolic element pattern: side-lobe floors, both 30 dB.
PATTERN_FLOOR_DB = 30.0
VERTICAL_SLA_DB = 30.0

# Validity window for the aerial large-scale model.
AERIAL_HEIGHT_RANGE_M = (100.0, 300.0)
GROUND_MAX_D2D_M = 5000.0
MIN_D2D_M = 10.0


@dataclass(frozen=True)
class LinkGeometry:
    """Wrap-corrected geometry of one BS-UE link."""

    d2d_m: float
    d3d_m: float
    azimuth_off_deg: float
    elevation_deg: float
    ue_kind: str
    ue_height_m: float

    def __post_init__(self) -> None:
        if self.ue_kind not in (GUE, UAV):
            raise ValueError(f"unknown ue_kind {self.ue_kind!r}")
        if self.d3d_m < self.d2d_m or self.d2d_m < 0:
            raise ValueError("require d3d_m >= d2d_m >= 0")
        if not -90.0 <= self.elevation_deg <= 90.0:
            raise ValueError("elevation_deg outside [-90, 90]")


@dataclass(frozen=True)
class LinkRealization:
    """Stochastic draw for one link plus the composed large-scale gain.

    ``shadow_db`` is the zero-mean lognormal term as it enters the gain
    (positive values help the link); ``large_scale_gain_db`` is
    -pathloss + shadow + antenna gain with the 0 dBi UE antenna implied.
    """

    los: bool
    pathloss_db: float
    shadow_db: float
    antenna_gain_db: float
    large_scale_gain_db: float
    small_scale_power: float


def wrap_angle_deg(angle_deg):
    """Wrap angles to (-180, 180]."""
    a = np.asarray(angle_deg, dtype=float)
    return -((-a + 180.0) % 360.0 - 180.0)


def antenna_gain_db(
    azimuth_off_deg,
    elevation_deg,
    tilt_deg,
    *,
    hpbw_vert_deg: float = 10.0,
    hpbw_horiz_deg: float = 65.0,
    max_gain_dbi: float = 8.0,
):
    """Directional sector gain in dB for the given tilt.

    Parabolic pattern in both planes, each plane floored at 30 dB
    attenuation and the combined attenuation floored at 30 dB below the
    peak. The electrical tilt shifts the vertical pattern, so the peak
    sits at (azimuth 0, elevation == tilt).
    """
    az = np.asarray(azimuth_off_deg, dtype=float)
    el = np.asarray(elevation_deg, dtype=float)
    a_v = -np.minimum(12.0 * ((el - tilt_deg) / hpbw_vert_deg) ** 2, VERTICAL_SLA_DB)
    a_h = -np.minimum(12.0 * (az / hpbw_horiz_deg) ** 2, PATTERN_FLOOR_DB)
    return max_gain_dbi - np.minimum(-(a_v + a_h), PATTERN_FLOOR_DB)


def los_probability_ground(d2d_m):
    """Urban-macro LoS probability for ground links vs. 2-D distance."""
    d = np.asarray(d2d_m, dtype=float)
    p = np.ones_like(d)
    far = d > 18.0
    df = np.where(far, d, np.inf)
    p = np.where(far, 18.0 / df + np.exp(-df / 63.0) * (1.0 - 18.0 / df), p)
    return p


def _check_ue_height(ue_kind: str, ue_height_m) -> None:
    h = np.asarray(ue_height_m, dtype=float)
    if ue_kind == GUE:
        if np.any(h != 1.5):
            raise ValueError("ground links are modeled at 1.5 m only")
    elif ue_kind == UAV:
        lo, hi = AERIAL_HEIGHT_RANGE_M
        if np.any((h < lo) | (h > hi)):
            raise ValueError("aerial links are modeled for heights in [100, 300] m")
    else:
        raise ValueError(f"unknown ue_kind {ue_kind!r}")


def draw_los(ue_kind: str, d2d_m, ue_height_m, rng: np.random.Generator) -> np.ndarray:
    """Line-of-sight states for an array of links of one UE kind."""
    _check_ue_height(ue_kind, ue_height_m)
    d = np.asarray(d2d_m, dtype=float)
    if ue_kind == UAV:
        return np.ones(d.shape, dtype=bool)
    return rng.random(d.shape) < los_probability_ground(d)


def los_state(geom: LinkGeometry, rng: np.random.Generator) -> bool:
    """Draw the LoS state of a single link."""
    return bool(draw_los(geom.ue_kind, geom.d2d_m, geom.ue_height_m, rng))


def ground_pathloss_db(
    d2d_m,
    d3d_m,
    los,
    *,
    fc_ghz: float = 2.0,
    bs_height_m: float = 25.0,
    ue_height_m: float = 1.5,
):
    """Urban-macro dual-slope path loss for ground links, in dB.

    The LoS branch switches slope at the breakpoint distance computed
    from effective antenna heights (1 m environment height); the NLoS
    branch is the maximum of the LoS value and the NLoS formula.
    Links closer than 10 m horizontally are evaluated at the 10 m
    validity boundary.
    """
    d2d = np.maximum(np.asarray(d2d_m, dtype=float), MIN_D2D_M)
    d3d_floor = np.hypot(MIN_D2D_M, bs_height_m - ue_height_m)
    d3d = np.maximum(np.asarray(d3d_m, dtype=float), d3d_floor)
    if np.any(d2d > GROUND_MAX_D2D_M):
        raise ValueError("ground model valid up to 5 km")

    fc_hz = fc_ghz * 1e9
    d_bp = 4.0 * (bs_height_m - 1.0) * (ue_height_m - 1.0) * fc_hz / SPEED_OF_LIGHT_M_S
    log_d3d = np.log10(d3d)
    log_fc = np.log10(fc_ghz)

    pl1 = 28.0 + 22.0 * log_d3d + 20.0 * log_fc
    pl2 = (
        28.0
        + 40.0 * log_d3d
        + 20.0 * log_fc
        - 9.0 * np.log10(d_bp**2 + (bs_height_m - ue_height_m) ** 2)
    )
    pl_los = np.where(d2d <= d_bp, pl1, pl2)

    pl_nlos = (
        13.54 + 39.08 * log_d3d + 20.0 * log_fc - 0.6 * (ue_height_m - 1.5)
    )
    pl_nlos = np.maximum(pl_los, pl_nlos)
    return np.where(los, pl_los, pl_nlos)


def aerial_pathloss_db(d3d_m, ue_height_m, *, fc_ghz: float = 2.0):
    """Urban-macro aerial LoS path loss for UAV heights in [100, 300] m."""
    _check_ue_height(UAV, ue_height_m)
    d3d = np.maximum(np.asarray(d3d_m, dtype=float), MIN_D2D_M)
    h = np.asarray(ue_height_m, dtype=float)
    return 30.9 + (22.25 - 0.5 * np.log10(h)) * np.log10(d3d) + 20.0 * np.log10(fc_ghz)


def path_loss_db(
    geom: LinkGeometry,
    los: bool,
    *,
    fc_ghz: float = 2.0,
    bs_height_m: float = 25.0,
):
    """Path loss of a single link, dispatching on the UE kind."""
    if geom.ue_kind == UAV:
        if not los:
            raise ValueError("aerial links are line-of-sight by model")
        return float(aerial_pathloss_db(geom.d3d_m, geom.ue_height_m, fc_ghz=fc_ghz))
    return float(
        ground_pathloss_db(
            geom.d2d_m,
            geom.d3d_m,
            los,
            fc_ghz=fc_ghz,
            bs_height_m=bs_height_m,
            ue_height_m=geom.ue_height_m,
        )
    )


def shadow_sigma_db(los, ue_kind: str, ue_height_m):
    """Lognormal shadowing standard deviation in dB."""
    _check_ue_height(ue_kind, ue_height_m)
    if ue_kind == UAV:
        if not np.all(los):
            raise ValueError("aerial links are line-of-sight by model")
        h = np.asarray(ue_height_m, dtype=float)
        return 4.64 * np.exp(-0.0066 * h)
    return np.where(np.asarray(los, bool), 4.0, 6.0)


def shadow_fading_db(los, ue_kind: str, ue_height_m, rng: np.random.Generator):
    """Zero-mean Gaussian shadowing draw in dB, independent per link."""
    sigma = shadow_sigma_db(los, ue_kind, ue_height_m)
    shape = np.broadcast(np.asarray(los), np.asarray(sigma)).shape
    return rng.standard_normal(shape) * sigma


def small_scale_power(ue_kind: str, rng: np.random.Generator, size=None):
    """Small-scale power |h|^2: unit-mean exponential for GUEs, 1 for UAVs."""
    if ue_kind == UAV:
        return np.ones(size) if size is not None else 1.0
    if ue_kind != GUE:
        raise ValueError(f"unknown ue_kind {ue_kind!r}")
    return rng.exponential(1.0, size=size)


def large_scale_gain_db(
    geom: LinkGeometry,
    tilt_deg: float,
    los: bool,
    shadow_db: float,
    *,
    fc_ghz: float = 2.0,
    bs_height_m: float = 25.0,
    hpbw_vert_deg: float = 10.0,
    hpbw_horiz_deg: float = 65.0,
    max_gain_dbi: float = 8.0,
) -> float:
    """Compose path loss, shadowing, and tilt-dependent antenna gain.

    The UE antenna is omnidirectional at 0 dBi, so it contributes
    nothing to the sum. Only the antenna term depends on the tilt.
    """
    pl = path_loss_db(geom, los, fc_ghz=fc_ghz, bs_height_m=bs_height_m)
    ag = float(
        antenna_gain_db(
            geom.azimuth_off_deg,
            geom.elevation_deg,
            tilt_deg,
            hpbw_vert_deg=hpbw_vert_deg,
            hpbw_horiz_deg=hpbw_horiz_deg,
            max_gain_dbi=max_gain_dbi,
        )
    )
    return -pl + float(shadow_db) + ag


def realize_link(
    geom: LinkGeometry,
    tilt_deg: float,
    rng: np.random.Generator,
    **model_kwargs,
) -> LinkRealization:
    """Draw one full link realization (LoS, shadowing, small-scale)."""
    los = los_state(geom, rng)
    shadow = float(shadow_fading_db(los, geom.ue_kind, geom.ue_height_m, rng))
    pl = path_loss_db(
        geom,
        los,
        fc_ghz=model_kwargs.get("fc_ghz", 2.0),
        bs_height_m=model_kwargs.get("bs_height_m", 25.0),
    )
    gain = large_scale_gain_db(geom, tilt_deg, los, shadow, **model_kwargs)
    return LinkRealization(
        los=los,
        pathloss_db=pl,
        shadow_db=shadow,
        antenna_gain_db=gain + pl - shadow,
        large_scale_gain_db=gain,
        small_scale_power=float(small_scale_power(geom.ue_kind, rng)),
    )
