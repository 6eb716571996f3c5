"""Layout geometry, wrap-around, and user-drop tests."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from cellbo.deploy import (
    ScenarioConfig,
    UserDrop,
    build_layout,
    drop_users,
    in_flat_hexagon,
    service_region_contains,
    wrap_displacement,
)

CFG = ScenarioConfig()
LAYOUT = build_layout(CFG)


class TestScenarioConfig:
    def test_defaults_match_deployment_table(self):
        assert CFG.n_bs == 57
        assert CFG.n_gues == 855
        assert CFG.n_uavs == 200
        assert CFG.noise_power_dbm == pytest.approx(-95.0)

    def test_rejects_bad_configs(self):
        with pytest.raises(ValueError):
            ScenarioConfig(n_sites=7)
        with pytest.raises(ValueError):
            ScenarioConfig(isd_m=-1.0)
        with pytest.raises(ValueError):
            ScenarioConfig(min_power_dbm=50.0)
        with pytest.raises(ValueError):
            ScenarioConfig(tilt_range_deg=(-60.0, 90.0))
        with pytest.raises(ValueError):
            ScenarioConfig(corridors=CFG.corridors[:3])
        bad_height = (((0.0, 1.0), (0.0, 1.0), 90.0),) + CFG.corridors[1:]
        with pytest.raises(ValueError):
            ScenarioConfig(corridors=bad_height)


class TestLayout:
    def test_counts_and_heights(self):
        assert LAYOUT.site_xy.shape == (19, 2)
        assert LAYOUT.n_bs == 57
        assert_array_equal(LAYOUT.bs_height_m, np.full(57, 25.0))

    def test_center_site_at_origin(self):
        assert_allclose(LAYOUT.site_xy[0], [0.0, 0.0], atol=1e-9)

    def test_min_site_distance_is_isd(self):
        # brute force over all 171 distinct site pairs
        dists = [
            np.hypot(*(LAYOUT.site_xy[i] - LAYOUT.site_xy[j]))
            for i in range(19)
            for j in range(i + 1, 19)
        ]
        assert len(dists) == 171
        assert min(dists) == pytest.approx(500.0, rel=1e-12)

    def test_six_sites_on_first_ring(self):
        d = np.hypot(*(LAYOUT.site_xy - LAYOUT.site_xy[0]).T)
        assert np.sum(np.isclose(d, CFG.isd_m)) == 6

    def test_sector_boresights_120_apart(self):
        for s in range(19):
            az = np.sort(LAYOUT.bs_boresight_deg[LAYOUT.bs_site == s])
            assert_allclose(np.diff(az), [120.0, 120.0])

    def test_wrap_shifts(self):
        shifts = LAYOUT.wrap_shifts
        assert shifts.shape == (7, 2)
        assert len({tuple(s) for s in np.round(shifts, 9)}) == 7
        assert_allclose(shifts[0], [0.0, 0.0])
        mags = np.hypot(shifts[1:, 0], shifts[1:, 1])
        assert_allclose(mags, mags[0])
        assert mags[0] == pytest.approx(np.sqrt(19.0) * 500.0)

    def test_rejects_nonstandard_site_count(self):
        with pytest.raises(ValueError):
            ScenarioConfig(n_sites=7)

    def test_deterministic(self):
        again = build_layout(CFG)
        assert_array_equal(again.site_xy, LAYOUT.site_xy)
        assert_array_equal(again.bs_boresight_deg, LAYOUT.bs_boresight_deg)


def _wrap_oracle(a, b, shifts):
    """Independent 7-image enumeration for a single point pair."""
    best_vec, best_d2sq = None, np.inf
    for s in shifts:
        dx = (b[0] + s[0]) - a[0]
        dy = (b[1] + s[1]) - a[1]
        d2sq = dx * dx + dy * dy
        if d2sq < best_d2sq:
            best_d2sq = d2sq
            best_vec = (dx, dy, b[2] - a[2])
    dist = np.sqrt(best_d2sq + best_vec[2] * best_vec[2])
    return np.array(best_vec), dist


class TestWrapDisplacement:
    def test_identical_points(self):
        p = np.array([120.0, -340.0, 1.5])
        vec, dist = wrap_displacement(p, p, LAYOUT)
        assert dist == 0.0
        assert_array_equal(vec, np.zeros(3))

    def test_full_wrap_vector_is_periodic(self):
        a = np.array([0.0, 0.0, 25.0])
        shift = LAYOUT.wrap_shifts[3]
        b = np.array([shift[0], shift[1], 25.0])
        _, dist = wrap_displacement(a, b, LAYOUT)
        assert dist == pytest.approx(0.0, abs=1e-9)

    def test_matches_brute_force_enumeration_exactly(self):
        rng = np.random.default_rng(7)
        n = 10_000
        a = np.column_stack(
            [rng.uniform(-1500, 1500, (n, 2)), rng.uniform(0, 160, n)]
        )
        b = np.column_stack(
            [rng.uniform(-1500, 1500, (n, 2)), rng.uniform(0, 160, n)]
        )
        vec, dist = wrap_displacement(a, b, LAYOUT)
        for k in range(0, n, 97):
            ovec, odist = _wrap_oracle(a[k], b[k], LAYOUT.wrap_shifts)
            assert dist[k] == odist
            assert_array_equal(vec[k], ovec)

    def test_distance_symmetry(self):
        rng = np.random.default_rng(8)
        a = np.column_stack([rng.uniform(-1200, 1200, (500, 2)), np.zeros(500)])
        b = np.column_stack([rng.uniform(-1200, 1200, (500, 2)), np.zeros(500)])
        _, d_ab = wrap_displacement(a, b, LAYOUT)
        _, d_ba = wrap_displacement(b, a, LAYOUT)
        assert_allclose(d_ab, d_ba, rtol=1e-12)

    def test_never_longer_than_unwrapped(self):
        rng = np.random.default_rng(9)
        a = np.column_stack([rng.uniform(-1500, 1500, (2000, 2)), np.zeros(2000)])
        b = np.column_stack([rng.uniform(-1500, 1500, (2000, 2)), np.zeros(2000)])
        _, d_wrap = wrap_displacement(a, b, LAYOUT)
        d_plain = np.linalg.norm(b - a, axis=1)
        assert np.all(d_wrap <= d_plain + 1e-9)


class TestDropUsers:
    def test_deterministic_in_seed(self):
        d1 = drop_users(CFG, 42)
        d2 = drop_users(CFG, 42)
        assert_array_equal(d1.gue_xyz, d2.gue_xyz)
        assert_array_equal(d1.uav_xyz, d2.uav_xyz)
        d3 = drop_users(CFG, 43)
        assert not np.array_equal(d1.gue_xyz, d3.gue_xyz)

    def test_counts(self):
        d = drop_users(CFG, 0)
        assert d.gue_xyz.shape == (855, 3)
        assert d.uav_xyz.shape == (200, 3)
        assert np.all(np.bincount(d.uav_corridor, minlength=4) == 50)

    def test_gue_heights_and_region(self):
        d = drop_users(CFG, 5)
        assert_array_equal(d.gue_xyz[:, 2], np.full(855, 1.5))
        assert np.all(service_region_contains(LAYOUT, d.gue_xyz[:, :2]))

    def test_uavs_inside_exactly_one_corridor(self):
        d = drop_users(CFG, 6)
        for xyz in d.uav_xyz[::7]:
            hits = 0
            for (x_lo, x_hi), (y_lo, y_hi), h in CFG.corridors:
                if x_lo <= xyz[0] <= x_hi and y_lo <= xyz[1] <= y_hi and xyz[2] == h:
                    hits += 1
            assert hits == 1

    def test_low_corridor_uavs_in_y_bands(self):
        # UAVs at 120 m with |x| <= 610 must sit in one of the two y bands
        d = drop_users(CFG, 11)
        low = d.uav_xyz[d.uav_xyz[:, 2] == 120.0]
        sel = low[np.abs(low[:, 0]) <= 610.0]
        assert sel.size > 0
        in_band = ((-650.0 <= sel[:, 1]) & (sel[:, 1] <= -610.0)) | (
            (610.0 <= sel[:, 1]) & (sel[:, 1] <= 650.0)
        )
        assert np.all(in_band)

    def test_gue_mean_near_region_centroid(self):
        # centroid of the 19-hexagon union is the origin by symmetry
        pts = np.vstack([drop_users(CFG, s).gue_xyz[:, :2] for s in range(12)])
        assert pts.shape[0] >= 10_000
        se = pts.std(axis=0) / np.sqrt(pts.shape[0])
        assert np.all(np.abs(pts.mean(axis=0)) <= 3.0 * se)


class TestHexagonHelpers:
    def test_flat_top_hexagon_membership(self):
        r = CFG.hex_circumradius_m
        apothem = r * np.sqrt(3.0) / 2.0
        center = np.zeros(2)
        assert in_flat_hexagon(np.array([[r, 0.0]]), center, r)[0]
        assert in_flat_hexagon(np.array([[0.0, apothem]]), center, r)[0]
        assert not in_flat_hexagon(np.array([[0.0, apothem + 1.0]]), center, r)[0]
        assert not in_flat_hexagon(np.array([[r + 1.0, 0.0]]), center, r)[0]
