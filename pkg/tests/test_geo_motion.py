#    Copyright traj-exit contributors
#
#    This file is part of traj-exit.
#
#    traj-exit is free software: you can redistribute it and/or modify it
#    under the terms of the GNU General Public License as published by the Free
#    Software Foundation, either version 3 of the License, or (at your option)
#    any later version.
#
#    traj-exit is distributed in the hope that it will be useful, but WITHOUT
#    ANY WARRANTY; without even the implied warranty of MERCHANTABILITY or
#    FITNESS FOR A PARTICULAR PURPOSE. See the GNU General Public License for
#    more details.
#
#    You should have received a copy of the GNU General Public License along
#    with this program. If not, see <https://www.gnu.org/licenses/>.


import math

import numpy as np
import pytest

from traj_exit.errors import (
    DegenerateOverlapError,
    InputError,
    InvalidCoordinateError,
    NoOverlapError,
    OutOfCoverageError,
)
from traj_exit.geo_motion import (
    EARTH_RADIUS_M,
    GeoFix,
    Trajectory,
    build_motion_windows,
    closure_rate,
    haversine_m,
    pairwise_distance_at,
    position_at,
)


def great_circle_oracle(lat1, lon1, lat2, lon2):
    """Vincenty's spherical formula, well conditioned at every separation."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    y = math.hypot(
        math.cos(phi2) * math.sin(dl),
        math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dl),
    )
    x = math.sin(phi1) * math.sin(phi2) + math.cos(phi1) * math.cos(phi2) * math.cos(dl)
    return EARTH_RADIUS_M * math.atan2(y, x)


def trajectory(vessel_id, points, t0=0.0):
    """Trajectory from (lat, lon) points sampled at 1 Hz, or (t, lat, lon) triples."""
    fixes = []
    for k, point in enumerate(points):
        t, lat, lon = point if len(point) == 3 else (t0 + k, *point)
        fixes.append(GeoFix(vessel_id, float(t), lat, lon))
    return Trajectory(vessel_id, fixes)


def test_haversine_matches_oracle():
    rng = np.random.default_rng(1)
    lats = rng.uniform(-90, 90, size=(1000, 2))
    lons = rng.uniform(-180, 180, size=(1000, 2))
    for (lat1, lat2), (lon1, lon2) in zip(lats.tolist(), lons.tolist()):
        expected = great_circle_oracle(lat1, lon1, lat2, lon2)
        assert haversine_m((lat1, lon1), (lat2, lon2)) == pytest.approx(expected, abs=0.01)


def test_haversine_symmetric_and_zero_on_self():
    rng = np.random.default_rng(2)
    for lat1, lon1, lat2, lon2 in zip(
        rng.uniform(-90, 90, 200), rng.uniform(-180, 180, 200),
        rng.uniform(-90, 90, 200), rng.uniform(-180, 180, 200),
    ):
        a, b = (float(lat1), float(lon1)), (float(lat2), float(lon2))
        assert haversine_m(a, b) == haversine_m(b, a)
        assert haversine_m(a, a) == 0.0


def test_haversine_known_values():
    # one degree of latitude
    assert haversine_m((0.0, 0.0), (1.0, 0.0)) == pytest.approx(111194.93, abs=0.01)
    assert haversine_m((0.0, 0.0), (0.0, 180.0)) == pytest.approx(math.pi * EARTH_RADIUS_M)
    assert haversine_m((90.0, 0.0), (-90.0, 0.0)) <= math.pi * EARTH_RADIUS_M


def test_haversine_accepts_fixes():
    a = GeoFix("a", 0.0, 37.45, 24.94)
    b = GeoFix("b", 0.0, 37.46, 24.94)
    assert haversine_m(a, b) == haversine_m((37.45, 24.94), (37.46, 24.94))


@pytest.mark.parametrize("lat, lon", [(91.0, 0.0), (0.0, 181.0), (float("nan"), 0.0)])
def test_invalid_coordinates(lat, lon):
    with pytest.raises(InvalidCoordinateError):
        haversine_m((lat, lon), (0.0, 0.0))
    with pytest.raises(InvalidCoordinateError):
        GeoFix("a", 0.0, lat, lon)


def test_closure_rate():
    assert closure_rate(100.0, 98.0, 1.0) == 2.0
    assert closure_rate(98.0, 100.0, 2.0) == -1.0
    with pytest.raises(InputError):
        closure_rate(10.0, 9.0, 0.0)
    with pytest.raises(InputError):
        closure_rate(-1.0, 9.0, 1.0)


def test_stationary_identical_vessels():
    points = [(37.45, 24.94)] * 5
    windows = build_motion_windows(trajectory("a", points), trajectory("b", points))
    assert len(windows) == 5
    assert all(w.d_t == 0.0 and w.v_t == 0.0 for w in windows)


def test_meridian_approach():
    start = 37.45 + math.degrees(100.0 / EARTH_RADIUS_M)
    a = trajectory("a", [(37.45, 24.94)] * 10)
    b = trajectory("b", [(start - k * 0.00001, 24.94) for k in range(10)])
    windows = build_motion_windows(a, b)

    assert windows[0].d_t == pytest.approx(100.0, abs=1e-6)
    assert windows[0].valid_v is False
    assert windows[0].v_t == 0.0
    for prev, w in zip(windows, windows[1:]):
        assert prev.d_t - w.d_t == pytest.approx(1.112, abs=0.01)
        assert w.v_t == pytest.approx(1.112, abs=0.01)
        assert w.valid_v


def test_window_count_follows_fix_coverage():
    a = trajectory("a", [(37.45, 24.94)] * 125, t0=1000.0)
    b = trajectory("b", [(37.46, 24.94)] * 125, t0=1000.0)
    windows = build_motion_windows(a, b)
    assert len(windows) == 125
    assert [w.window_index for w in windows] == list(range(125))
    assert windows[0].t_start == 1000.0
    assert windows[-1].t_end == 1125.0


def test_partial_overlap():
    a = trajectory("a", [(37.45, 24.94)] * 10)
    b = trajectory("b", [(37.46, 24.94)] * 10, t0=4.0)
    windows = build_motion_windows(a, b)
    assert len(windows) == 6
    assert windows[0].t_start == 4.0


def test_no_overlap():
    a = trajectory("a", [(37.45, 24.94)] * 3)
    b = trajectory("b", [(37.46, 24.94)] * 3, t0=10.0)
    with pytest.raises(NoOverlapError):
        build_motion_windows(a, b)


def test_overlap_shorter_than_a_window():
    a = trajectory("a", [(37.45, 24.94)] * 5)
    b = trajectory("b", [(4.5, 37.46, 24.94)])
    with pytest.raises(DegenerateOverlapError):
        build_motion_windows(a, b)


def test_gap_windows_are_invalid():
    times = [0, 1, 2, 6, 7, 8]
    a = trajectory("a", [(t, 37.45, 24.94) for t in times])
    b = trajectory("b", [(t, 37.46, 24.94) for t in times])
    assert a.gaps() == [(2.0, 6.0)]
    windows = build_motion_windows(a, b)
    assert len(windows) == 9
    assert [w.window_index for w in windows if not w.valid] == [3, 4, 5]


def test_position_at_nearest_and_interpolated():
    traj = trajectory("a", [(0.0, 0.0, 0.0), (10.0, 1.0, 2.0)])
    assert position_at(traj, 0.4) == (0.0, 0.0)
    assert position_at(traj, 9.6) == (1.0, 2.0)
    lat, lon = position_at(traj, 5.0)
    assert lat == pytest.approx(0.5)
    assert lon == pytest.approx(1.0)
    with pytest.raises(OutOfCoverageError):
        position_at(traj, 11.0)
    with pytest.raises(OutOfCoverageError):
        position_at(traj, -1.0)


def test_trajectory_rejects_unordered_fixes():
    with pytest.raises(InputError):
        Trajectory("a", [GeoFix("a", 1.0, 0.0, 0.0), GeoFix("a", 0.0, 0.0, 0.0)])
    with pytest.raises(InputError):
        Trajectory("a", [GeoFix("a", 1.0, 0.0, 0.0), GeoFix("a", 1.0, 0.0, 0.0)])


def test_pairwise_distance_interpolates_both_vessels():
    a = trajectory("a", [(0.0, 0.0, 0.0), (10.0, 0.0, 0.0)])
    b = trajectory("b", [(0.0, 0.0, 0.0), (10.0, 0.002, 0.0)])
    assert pairwise_distance_at(a, b, 0.0) == 0.0
    assert pairwise_distance_at(a, b, 5.0) == pytest.approx(
        great_circle_oracle(0.0, 0.0, 0.001, 0.0)
    )
    assert pairwise_distance_at(a, b, 5.0) == pairwise_distance_at(b, a, 5.0)
    with pytest.raises(OutOfCoverageError):
        pairwise_distance_at(a, b, 12.0)
