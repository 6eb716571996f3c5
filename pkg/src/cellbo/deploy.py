"""Hexagonal cellular deployment and stochastic user drops.

The service area is the classic 19-site hexagonal cluster with three
120-degree sectors per site (57 cells) and toroidal wrap-around: the
cluster tiles the plane under a period-19 translation lattice, so every
link is measured against the nearest of seven cluster images.

Ground users (GUEs) are dropped uniformly over the union of the 19 site
hexagons at 1.5 m; UAVs are dropped uniformly inside four fixed corridor
boxes at 120 m / 150 m altitude. Counts are fixed at the configured
per-sector / per-corridor means so that repeated drops differ only in
positions, not population size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Corridor box: ((x_lo, x_hi), (y_lo, y_hi), height_m)
Corridor = tuple[tuple[float, float], tuple[float, float], float]

DEFAULT_CORRIDORS: tuple[Corridor, ...] = (
    ((-650.0, -610.0), (-780.0, 780.0), 150.0),
    ((-780.0, 780.0), (-650.0, -610.0), 120.0),
    ((-780.0, 780.0), (610.0, 650.0), 120.0),
    ((610.0, 650.0), (-780.0, 780.0), 150.0),
)

SECTOR_BORESIGHTS_DEG = (30.0, 150.0, 270.0)

# Edge normals of a flat-topped hexagon (vertices at 0, 60, ... degrees).
_HEX_NORMALS = np.array(
    [
        [np.sqrt(3.0) / 2.0, 0.5],
        [0.0, 1.0],
        [-np.sqrt(3.0) / 2.0, 0.5],
    ]
)


def canonical_seed(seed: int) -> int:
    """Map any integer seed onto the nonnegative range numpy accepts."""
    return int(seed) % 2**63


@dataclass(frozen=True)
class ScenarioConfig:
    """Deployment, channel, user-population, and noise parameters."""

    isd_m: float = 500.0
    n_sites: int = 19
    bs_height_m: float = 25.0
    sectors_per_site: int = 3
    carrier_ghz: float = 2.0
    bandwidth_hz: float = 1.0e7
    max_power_dbm: float = 46.0
    min_power_dbm: float = 6.0
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    gue_height_m: float = 1.5
    mean_gues_per_sector: int = 15
    mean_uavs_per_corridor: int = 50
    corridors: tuple[Corridor, ...] = DEFAULT_CORRIDORS
    hpbw_vert_deg: float = 10.0
    hpbw_horiz_deg: float = 65.0
    max_antenna_gain_dbi: float = 8.0
    tilt_range_deg: tuple[float, float] = (-90.0, 90.0)

    def __post_init__(self) -> None:
        if self.isd_m <= 0:
            raise ValueError("isd_m must be positive")
        if self.n_sites != 19:
            raise ValueError("only the canonical 19-site layout is supported")
        if self.sectors_per_site != 3:
            raise ValueError("three sectors per site are required")
        if not self.min_power_dbm < self.max_power_dbm:
            raise ValueError("min_power_dbm must be below max_power_dbm")
        lo, hi = self.tilt_range_deg
        if not (lo < 0.0 < hi and lo == -hi):
            raise ValueError("tilt range must be symmetric about 0")
        if len(self.corridors) != 4:
            raise ValueError("exactly 4 corridors are required")
        for (x_lo, x_hi), (y_lo, y_hi), height in self.corridors:
            if not (x_lo < x_hi and y_lo < y_hi):
                raise ValueError("corridor box bounds must be ordered")
            if height not in (120.0, 150.0):
                raise ValueError("corridor heights must be 120 m or 150 m")

    @property
    def n_bs(self) -> int:
        return self.n_sites * self.sectors_per_site

    @property
    def n_gues(self) -> int:
        return self.n_bs * self.mean_gues_per_sector

    @property
    def n_uavs(self) -> int:
        return len(self.corridors) * self.mean_uavs_per_corridor

    @property
    def noise_power_dbm(self) -> float:
        """Thermal noise over the full band, noise figure included."""
        return (
            self.noise_psd_dbm_hz
            + 10.0 * np.log10(self.bandwidth_hz)
            + self.noise_figure_db
        )

    @property
    def hex_circumradius_m(self) -> float:
        """Circumradius of one site hexagon (flat-topped)."""
        return self.isd_m / np.sqrt(3.0)


@dataclass(frozen=True)
class Layout:
    """Deterministic BS geometry: 19 sites, 57 sectors, wrap translations."""

    site_xy: np.ndarray            # (19, 2) m
    bs_site: np.ndarray            # (57,) site index per BS
    bs_sector: np.ndarray          # (57,) sector index 0..2
    bs_boresight_deg: np.ndarray   # (57,)
    bs_xy: np.ndarray              # (57, 2) m
    bs_height_m: np.ndarray        # (57,) m
    wrap_shifts: np.ndarray        # (7, 2) m, zero vector first
    hex_circumradius_m: float

    def __post_init__(self) -> None:
        for arr in (
            self.site_xy,
            self.bs_site,
            self.bs_sector,
            self.bs_boresight_deg,
            self.bs_xy,
            self.bs_height_m,
            self.wrap_shifts,
        ):
            arr.setflags(write=False)

    @property
    def n_sites(self) -> int:
        return self.site_xy.shape[0]

    @property
    def n_bs(self) -> int:
        return self.bs_xy.shape[0]


def build_layout(cfg: ScenarioConfig) -> Layout:
    """Construct the wrapped-around 19-site hexagonal deployment.

    Sites sit on the triangular lattice spanned by ``a1`` (30 degrees) and
    ``a2`` (90 degrees) with nearest-neighbor spacing ``isd_m``; the
    cluster is the hexagonal ball of radius two around the origin. The
    wrap translations are the six period-19 lattice vectors (3*a1 + 2*a2
    and its 60-degree rotations), all of magnitude sqrt(19)*ISD.
    """
    if cfg.n_sites != 19:
        raise ValueError("only the canonical 19-site layout is supported")
    isd = float(cfg.isd_m)
    a1 = isd * np.array([np.sqrt(3.0) / 2.0, 0.5])
    a2 = isd * np.array([0.0, 1.0])

    coords = [(i, j) for i in range(-2, 3) for j in range(-2, 3) if abs(i + j) <= 2]
    pos = np.array([i * a1 + j * a2 for i, j in coords])
    radius = np.hypot(pos[:, 0], pos[:, 1])
    angle = np.degrees(np.arctan2(pos[:, 1], pos[:, 0])) % 360.0
    order = np.lexsort((np.round(angle, 6), np.round(radius, 6)))
    site_xy = pos[order]

    n_bs = cfg.n_bs
    bs_site = np.repeat(np.arange(cfg.n_sites), cfg.sectors_per_site)
    bs_sector = np.tile(np.arange(cfg.sectors_per_site), cfg.n_sites)
    bs_boresight = np.tile(np.asarray(SECTOR_BORESIGHTS_DEG), cfg.n_sites)
    bs_xy = site_xy[bs_site]
    bs_height = np.full(n_bs, float(cfg.bs_height_m))

    t1 = 3.0 * a1 + 2.0 * a2
    t2 = -2.0 * a1 + 5.0 * a2
    t3 = -5.0 * a1 + 3.0 * a2
    wrap_shifts = np.array([[0.0, 0.0], t1, -t1, t2, -t2, t3, -t3])

    return Layout(
        site_xy=site_xy,
        bs_site=bs_site,
        bs_sector=bs_sector,
        bs_boresight_deg=bs_boresight,
        bs_xy=bs_xy,
        bs_height_m=bs_height,
        wrap_shifts=wrap_shifts,
        hex_circumradius_m=cfg.hex_circumradius_m,
    )


def wrap_displacement(
    a: np.ndarray, b: np.ndarray, layout: Layout
) -> tuple[np.ndarray, np.ndarray]:
    """Displacement b' - a over the seven wrap images of b.

    Picks the image minimizing horizontal distance (first image wins ties;
    the zero shift is first, so coincident points give a zero vector).
    Returns the 3-D displacement vector and its 3-D norm. Broadcasts over
    leading dimensions of ``a`` and ``b``; the trailing axis holds x, y, z.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    shifts = np.zeros((layout.wrap_shifts.shape[0], 3))
    shifts[:, :2] = layout.wrap_shifts

    disp = b[..., None, :] + shifts - a[..., None, :]      # (..., 7, 3)
    d2sq = disp[..., 0] ** 2 + disp[..., 1] ** 2           # (..., 7)
    best = np.argmin(d2sq, axis=-1)

    chosen = np.take_along_axis(disp, best[..., None, None], axis=-2)
    chosen = np.squeeze(chosen, axis=-2)
    d2sq_sel = np.take_along_axis(d2sq, best[..., None], axis=-1)[..., 0]
    dist = np.sqrt(d2sq_sel + chosen[..., 2] ** 2)
    return chosen, dist


def in_flat_hexagon(
    points_xy: np.ndarray, center_xy: np.ndarray, circumradius_m: float, tol: float = 1e-9
) -> np.ndarray:
    """Membership test for a flat-topped hexagon of the given circumradius."""
    d = np.asarray(points_xy, dtype=float) - np.asarray(center_xy, dtype=float)
    proj = np.abs(d @ _HEX_NORMALS.T)
    apothem = circumradius_m * np.sqrt(3.0) / 2.0
    return np.all(proj <= apothem + tol, axis=-1)


def service_region_contains(layout: Layout, points_xy: np.ndarray) -> np.ndarray:
    """True where a point lies in the union of the 19 site hexagons."""
    points_xy = np.atleast_2d(np.asarray(points_xy, dtype=float))
    inside = np.zeros(points_xy.shape[0], dtype=bool)
    for center in layout.site_xy:
        inside |= in_flat_hexagon(points_xy, center, layout.hex_circumradius_m)
    return inside


def _sample_hexagon(rng: np.random.Generator, n: int, circumradius_m: float) -> np.ndarray:
    """Uniform points in a flat-topped hexagon centered at the origin."""
    apothem = circumradius_m * np.sqrt(3.0) / 2.0
    out = np.empty((0, 2))
    while out.shape[0] < n:
        m = int(1.5 * (n - out.shape[0])) + 16
        cand = rng.uniform(
            low=(-circumradius_m, -apothem), high=(circumradius_m, apothem), size=(m, 2)
        )
        keep = in_flat_hexagon(cand, np.zeros(2), circumradius_m, tol=0.0)
        out = np.vstack([out, cand[keep]])
    return out[:n]


@dataclass(frozen=True)
class UserDrop:
    """One stochastic draw of user positions."""

    gue_xyz: np.ndarray       # (n_gues, 3) m
    uav_xyz: np.ndarray       # (n_uavs, 3) m
    uav_corridor: np.ndarray  # (n_uavs,) corridor index per UAV
    seed: int

    def __post_init__(self) -> None:
        self.gue_xyz.setflags(write=False)
        self.uav_xyz.setflags(write=False)
        self.uav_corridor.setflags(write=False)


def drop_users(cfg: ScenarioConfig, seed: int) -> UserDrop:
    """Draw one user drop, deterministic in ``seed``.

    A single generator seeded with ``seed`` drives all draws in fixed
    order: GUE site choices, GUE in-hexagon positions, then per-corridor
    UAV positions in the configured corridor order.
    """
    layout = build_layout(cfg)
    rng = np.random.default_rng(canonical_seed(seed))

    n_gue = cfg.n_gues
    site_idx = rng.integers(0, cfg.n_sites, size=n_gue)
    local = _sample_hexagon(rng, n_gue, cfg.hex_circumradius_m)
    gue_xyz = np.column_stack(
        [layout.site_xy[site_idx] + local, np.full(n_gue, cfg.gue_height_m)]
    )

    uav_blocks = []
    corridor_idx = []
    for c, ((x_lo, x_hi), (y_lo, y_hi), height) in enumerate(cfg.corridors):
        n = cfg.mean_uavs_per_corridor
        x = rng.uniform(x_lo, x_hi, size=n)
        y = rng.uniform(y_lo, y_hi, size=n)
        uav_blocks.append(np.column_stack([x, y, np.full(n, height)]))
        corridor_idx.append(np.full(n, c, dtype=int))

    return UserDrop(
        gue_xyz=gue_xyz,
        uav_xyz=np.vstack(uav_blocks),
        uav_corridor=np.concatenate(corridor_idx),
        seed=int(seed),
    )
