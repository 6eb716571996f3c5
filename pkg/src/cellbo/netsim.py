"""Downlink SINR evaluation and the mixing-ratio mean-SINR objective.

One evaluation draws a user drop plus a full channel realization from a
seed, associates every UE to the strongest large-scale RSS cell, computes
per-UE SINR over the full band, and combines the two population means:

    objective = lam * mean(UAV SINR dB) + (1 - lam) * mean(GUE SINR dB)

Averages are taken in the dB domain. Each call uses a single realization;
repeat calls with fresh seeds are noisy samples of the same setting.

Seed scheme: ``SeedSequence(seed)`` yields four sub-seeds consumed in
fixed order by the user drop, LoS draws, shadowing draws, and small-scale
draws, so a realization is bit-reproducible from its integer seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import channel
from .channel import GUE, UAV
from .deploy import (
    Layout,
    ScenarioConfig,
    build_layout,
    canonical_seed,
    drop_users,
    wrap_displacement,
)

TILT_BOUNDS_DEG = (-90.0, 90.0)
POWER_BOUNDS_DBM = (6.0, 46.0)

ROLE_GROUND = "ground"
ROLE_AERIAL = "aerial"
ROLE_OFF = "off"


@dataclass(frozen=True)
class NetworkSetting:
    """Decision vector: per-BS electrical tilt and transmit power."""

    tilts_deg: np.ndarray
    powers_dbm: np.ndarray

    def __post_init__(self) -> None:
        tilts = np.array(self.tilts_deg, dtype=float)
        powers = np.array(self.powers_dbm, dtype=float)
        if tilts.ndim != 1 or tilts.shape != powers.shape:
            raise ValueError("tilts and powers must be equal-length vectors")
        if np.any(tilts < TILT_BOUNDS_DEG[0]) or np.any(tilts > TILT_BOUNDS_DEG[1]):
            raise ValueError("tilts outside [-90, 90] degrees")
        if np.any(powers < POWER_BOUNDS_DBM[0]) or np.any(powers > POWER_BOUNDS_DBM[1]):
            raise ValueError("powers outside [6, 46] dBm")
        tilts.setflags(write=False)
        powers.setflags(write=False)
        object.__setattr__(self, "tilts_deg", tilts)
        object.__setattr__(self, "powers_dbm", powers)

    @property
    def n_bs(self) -> int:
        return self.tilts_deg.shape[0]

    def as_vector(self) -> np.ndarray:
        """Stacked [tilts, powers] vector (length 2 * n_bs)."""
        return np.concatenate([self.tilts_deg, self.powers_dbm])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "NetworkSetting":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 2:
            raise ValueError("expected a flat [tilts, powers] vector")
        n = x.size // 2
        return cls(tilts_deg=x[:n], powers_dbm=x[n:])

    @classmethod
    def uniform(cls, n_bs: int, tilt_deg: float, power_dbm: float) -> "NetworkSetting":
        return cls(
            tilts_deg=np.full(n_bs, float(tilt_deg)),
            powers_dbm=np.full(n_bs, float(power_dbm)),
        )


@dataclass(frozen=True)
class DropRealization:
    """Everything random about one evaluation, independent of the setting.

    Per-link arrays are (n_bs, n_ue) with GUE columns first. The
    tilt-dependent antenna gain is the only missing term; ``gain_db``
    adds it for a given tilt vector.
    """

    ue_xyz: np.ndarray
    is_uav: np.ndarray
    az_off_deg: np.ndarray
    elev_deg: np.ndarray
    d2d_m: np.ndarray
    d3d_m: np.ndarray
    los: np.ndarray
    pathloss_db: np.ndarray
    shadow_db: np.ndarray
    small_scale: np.ndarray
    hpbw_vert_deg: float
    hpbw_horiz_deg: float
    max_gain_dbi: float
    seed: int

    def __post_init__(self) -> None:
        for arr in (
            self.ue_xyz,
            self.is_uav,
            self.az_off_deg,
            self.elev_deg,
            self.d2d_m,
            self.d3d_m,
            self.los,
            self.pathloss_db,
            self.shadow_db,
            self.small_scale,
        ):
            arr.setflags(write=False)

    @property
    def n_ue(self) -> int:
        return self.ue_xyz.shape[0]

    @property
    def base_gain_db(self) -> np.ndarray:
        """Large-scale gain without the antenna term: -PL + shadow."""
        return -self.pathloss_db + self.shadow_db

    def gain_db(self, tilts_deg: np.ndarray) -> np.ndarray:
        """Full large-scale gain matrix for the given per-BS tilts."""
        ag = channel.antenna_gain_db(
            self.az_off_deg,
            self.elev_deg,
            np.asarray(tilts_deg, dtype=float)[:, None],
            hpbw_vert_deg=self.hpbw_vert_deg,
            hpbw_horiz_deg=self.hpbw_horiz_deg,
            max_gain_dbi=self.max_gain_dbi,
        )
        return self.base_gain_db + ag


@dataclass(frozen=True)
class EvalReport:
    """Per-UE SINRs, association, cell roles, and the combined objective."""

    sinr_db_gue: np.ndarray
    sinr_db_uav: np.ndarray
    serving_bs: np.ndarray
    objective_db: float
    cell_roles: tuple[str, ...]
    mixed_cells: tuple[bool, ...]
    lam: float
    seed: int
    ue_xyz: np.ndarray = field(repr=False)
    is_uav: np.ndarray = field(repr=False)

    @property
    def mean_sinr_gue_db(self) -> float:
        return float(np.mean(self.sinr_db_gue))

    @property
    def mean_sinr_uav_db(self) -> float:
        return float(np.mean(self.sinr_db_uav))

    def summary_dict(self) -> dict:
        roles = list(self.cell_roles)
        return {
            "lambda": self.lam,
            "seed": self.seed,
            "objective_db": self.objective_db,
            "gue_mean_sinr_db": self.mean_sinr_gue_db,
            "uav_mean_sinr_db": self.mean_sinr_uav_db,
            "n_cells_ground": roles.count(ROLE_GROUND),
            "n_cells_aerial": roles.count(ROLE_AERIAL),
            "n_cells_off": roles.count(ROLE_OFF),
        }

    def write_csv(self, path) -> None:
        """One row per UE: kind, position, serving BS, SINR."""
        sinr = np.concatenate([self.sinr_db_gue, self.sinr_db_uav])
        with open(path, "w") as f:
            f.write("kind,x_m,y_m,z_m,serving_bs,sinr_db\n")
            for k in range(self.ue_xyz.shape[0]):
                kind = UAV if self.is_uav[k] else GUE
                x, y, z = (float(v) for v in self.ue_xyz[k])
                f.write(
                    f"{kind},{x!r},{y!r},{z!r},"
                    f"{int(self.serving_bs[k])},{float(sinr[k])!r}\n"
                )

    def write_summary_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.summary_dict(), f, indent=2, sort_keys=True)
            f.write("\n")


def associate(gain_db: np.ndarray, powers_dbm: np.ndarray) -> np.ndarray:
    """Serving BS per UE by largest large-scale RSS (power + gain, dB).

    Small-scale fading is excluded by contract; ties go to the lowest
    BS index.
    """
    rss = np.asarray(powers_dbm, dtype=float)[:, None] + np.asarray(gain_db, dtype=float)
    return np.argmax(rss, axis=0)


def sinr_db(
    gain_db: np.ndarray,
    small_scale: np.ndarray,
    powers_dbm: np.ndarray,
    serving: np.ndarray,
    noise_dbm: float,
) -> np.ndarray:
    """Per-UE downlink SINR in dB over the full band.

    Received powers are formed in linear milliwatts; everything not
    coming from the serving BS is interference.
    """
    p_lin = 10.0 ** (np.asarray(powers_dbm, dtype=float) / 10.0)
    rx = p_lin[:, None] * 10.0 ** (np.asarray(gain_db, dtype=float) / 10.0) * small_scale
    signal = np.take_along_axis(rx, serving[None, :], axis=0)[0]
    interference = rx.sum(axis=0) - signal
    noise = 10.0 ** (noise_dbm / 10.0)
    return 10.0 * np.log10(signal / (interference + noise))


def classify_cells(
    serving: np.ndarray, is_uav: np.ndarray, n_bs: int
) -> tuple[tuple[str, ...], tuple[bool, ...]]:
    """Label each cell ground / aerial / off from its served users.

    A cell serving at least one UAV is aerial even if it also serves
    GUEs; such mixed-service cells are flagged separately.
    """
    serving = np.asarray(serving)
    uav_counts = np.bincount(serving[is_uav], minlength=n_bs)
    gue_counts = np.bincount(serving[~is_uav], minlength=n_bs)
    roles = []
    mixed = []
    for b in range(n_bs):
        if uav_counts[b] > 0:
            roles.append(ROLE_AERIAL)
        elif gue_counts[b] > 0:
            roles.append(ROLE_GROUND)
        else:
            roles.append(ROLE_OFF)
        mixed.append(bool(uav_counts[b] > 0 and gue_counts[b] > 0))
    return tuple(roles), tuple(mixed)


class NetworkSimulator:
    """Evaluates network settings on stochastic drops of one scenario."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.layout: Layout = build_layout(cfg)
        self.noise_dbm = float(cfg.noise_power_dbm)

    def realization(self, seed: int) -> DropRealization:
        """Draw one drop plus channel realization, deterministic in seed."""
        cfg = self.cfg
        layout = self.layout
        ss = np.random.SeedSequence(canonical_seed(seed))
        drop_seed, los_seed, shadow_seed, small_seed = (
            int(s) for s in ss.generate_state(4, np.uint64)
        )

        drop = drop_users(cfg, drop_seed)
        ue_xyz = np.vstack([drop.gue_xyz, drop.uav_xyz])
        n_gue = drop.gue_xyz.shape[0]
        n_ue = ue_xyz.shape[0]
        is_uav = np.zeros(n_ue, dtype=bool)
        is_uav[n_gue:] = True

        # Site-level wrap-corrected geometry, shared by co-located sectors.
        site_pos = np.column_stack(
            [layout.site_xy, np.full(layout.n_sites, cfg.bs_height_m)]
        )
        disp, d3d_site = wrap_displacement(
            site_pos[:, None, :], ue_xyz[None, :, :], layout
        )
        d2d_site = np.hypot(disp[..., 0], disp[..., 1])
        az_site = np.degrees(np.arctan2(disp[..., 1], disp[..., 0]))
        elev_site = np.degrees(np.arctan2(disp[..., 2], d2d_site))

        site_of_bs = layout.bs_site
        d2d = d2d_site[site_of_bs]
        d3d = d3d_site[site_of_bs]
        elev = elev_site[site_of_bs]
        az_off = channel.wrap_angle_deg(
            az_site[site_of_bs] - layout.bs_boresight_deg[:, None]
        )

        # Stochastic link states, one stream per draw family.
        rng_los = np.random.default_rng(los_seed)
        rng_shadow = np.random.default_rng(shadow_seed)
        rng_small = np.random.default_rng(small_seed)

        los = np.ones((cfg.n_bs, n_ue), dtype=bool)
        los[:, :n_gue] = channel.draw_los(
            GUE, d2d[:, :n_gue], cfg.gue_height_m, rng_los
        )

        pathloss = np.empty((cfg.n_bs, n_ue))
        pathloss[:, :n_gue] = channel.ground_pathloss_db(
            d2d[:, :n_gue],
            d3d[:, :n_gue],
            los[:, :n_gue],
            fc_ghz=cfg.carrier_ghz,
            bs_height_m=cfg.bs_height_m,
            ue_height_m=cfg.gue_height_m,
        )
        pathloss[:, n_gue:] = channel.aerial_pathloss_db(
            d3d[:, n_gue:], ue_xyz[None, n_gue:, 2], fc_ghz=cfg.carrier_ghz
        )

        sigma = np.empty((cfg.n_bs, n_ue))
        sigma[:, :n_gue] = channel.shadow_sigma_db(los[:, :n_gue], GUE, cfg.gue_height_m)
        sigma[:, n_gue:] = channel.shadow_sigma_db(
            los[:, n_gue:], UAV, ue_xyz[None, n_gue:, 2]
        )
        shadow = rng_shadow.standard_normal((cfg.n_bs, n_ue)) * sigma

        small = np.ones((cfg.n_bs, n_ue))
        small[:, :n_gue] = channel.small_scale_power(
            GUE, rng_small, size=(cfg.n_bs, n_gue)
        )

        return DropRealization(
            ue_xyz=ue_xyz,
            is_uav=is_uav,
            az_off_deg=az_off,
            elev_deg=elev,
            d2d_m=d2d,
            d3d_m=d3d,
            los=los,
            pathloss_db=pathloss,
            shadow_db=shadow,
            small_scale=small,
            hpbw_vert_deg=cfg.hpbw_vert_deg,
            hpbw_horiz_deg=cfg.hpbw_horiz_deg,
            max_gain_dbi=cfg.max_antenna_gain_dbi,
            seed=int(seed),
        )

    def _check_setting(self, x: NetworkSetting) -> None:
        cfg = self.cfg
        if x.n_bs != cfg.n_bs:
            raise ValueError(f"expected {cfg.n_bs} BS entries")
        lo, hi = cfg.tilt_range_deg
        if np.any(x.tilts_deg < lo) or np.any(x.tilts_deg > hi):
            raise ValueError("tilts outside the scenario tilt range")
        if np.any(x.powers_dbm < cfg.min_power_dbm) or np.any(
            x.powers_dbm > cfg.max_power_dbm
        ):
            raise ValueError("powers outside the scenario power range")

    def evaluate_on(
        self, realization: DropRealization, x: NetworkSetting, lam: float
    ) -> EvalReport:
        """Deterministic evaluation of a setting on a fixed realization."""
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        self._check_setting(x)

        gains = realization.gain_db(x.tilts_deg)
        serving = associate(gains, x.powers_dbm)
        sinr = sinr_db(
            gains, realization.small_scale, x.powers_dbm, serving, self.noise_dbm
        )
        is_uav = realization.is_uav
        sinr_gue = sinr[~is_uav]
        sinr_uav = sinr[is_uav]
        objective = lam * float(np.mean(sinr_uav)) + (1.0 - lam) * float(
            np.mean(sinr_gue)
        )
        roles, mixed = classify_cells(serving, is_uav, self.cfg.n_bs)
        return EvalReport(
            sinr_db_gue=sinr_gue,
            sinr_db_uav=sinr_uav,
            serving_bs=serving,
            objective_db=objective,
            cell_roles=roles,
            mixed_cells=mixed,
            lam=float(lam),
            seed=realization.seed,
            ue_xyz=realization.ue_xyz,
            is_uav=is_uav,
        )

    def evaluate(self, x: NetworkSetting, lam: float, seed: int) -> EvalReport:
        """One noisy objective sample: fresh realization, then evaluate."""
        return self.evaluate_on(self.realization(seed), x, lam)
