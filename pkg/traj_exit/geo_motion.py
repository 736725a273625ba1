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

"""Great-circle geometry and per-second motion windows for vessel pairs.

Distances use the haversine formula on a sphere of mean Earth radius. A fix
stands for its one-second sample period, so a trajectory sampled at 1 Hz with
fixes at t0 .. t0+124 covers [t0, t0+125) and yields 125 motion windows when
paired with a trajectory of the same span.
"""

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    DegenerateOverlapError,
    DuplicateTimestampError,
    InputError,
    InvalidCoordinateError,
    NoOverlapError,
    OutOfCoverageError,
)
from .logging import TE_Log

EARTH_RADIUS_M = 6_371_000.0
WINDOW_S = 1.0
NEAREST_FIX_S = 0.5
MAX_FIX_GAP_S = 2.0
# timestamps are at least 1 s resolution, anything finer is rounding noise
TIME_EPSILON_S = 1e-6


def check_coordinates(lat, lon, line=None):
    for name, value, bound in (("lat", lat, 90.0), ("lon", lon, 180.0)):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidCoordinateError(f"{name} is not a number: {value!r}", line)
        if math.isnan(value) or not -bound <= value <= bound:
            raise InvalidCoordinateError(
                f"{name} {value} outside [-{bound:g}, {bound:g}]", line
            )


@dataclass(frozen=True)
class GeoFix:
    vessel_id: str
    t: float
    lat: float
    lon: float

    def __post_init__(self):
        check_coordinates(self.lat, self.lon)
        if not math.isfinite(self.t):
            raise InputError(f"Timestamp must be finite, got {self.t}")


@dataclass(frozen=True)
class Trajectory:
    vessel_id: str
    fixes: tuple

    def __post_init__(self):
        object.__setattr__(self, "fixes", tuple(self.fixes))
        for fix in self.fixes:
            if fix.vessel_id != self.vessel_id:
                raise InputError(
                    f"Fix of vessel {fix.vessel_id!r} in trajectory {self.vessel_id!r}"
                )
        for prev, curr in zip(self.fixes, self.fixes[1:]):
            if curr.t == prev.t:
                raise DuplicateTimestampError(
                    f"Duplicate timestamp {curr.t} for vessel {self.vessel_id!r}"
                )
            if curr.t < prev.t:
                raise InputError(
                    f"Fixes of vessel {self.vessel_id!r} not increasing at t={curr.t}"
                )

    def __len__(self):
        return len(self.fixes)

    @cached_property
    def times(self):
        return np.array([f.t for f in self.fixes], dtype=float)

    @cached_property
    def lats(self):
        return np.array([f.lat for f in self.fixes], dtype=float)

    @cached_property
    def lons(self):
        return np.array([f.lon for f in self.fixes], dtype=float)

    @property
    def start(self):
        return self.fixes[0].t

    @property
    def end(self):
        """End of coverage, one sample period after the last fix."""
        return self.fixes[-1].t + WINDOW_S

    def gaps(self):
        """(t_before, t_after) pairs of consecutive fixes further apart than MAX_FIX_GAP_S."""
        ts = self.times
        if len(ts) < 2:
            return []
        idx = np.nonzero(np.diff(ts) > MAX_FIX_GAP_S)[0]
        return [(float(ts[i]), float(ts[i + 1])) for i in idx]

    def in_gap(self, t):
        ts = self.times
        i = int(np.searchsorted(ts, t, side="right"))
        if i <= 0 or i >= len(ts):
            return False
        return ts[i - 1] < t < ts[i] and ts[i] - ts[i - 1] > MAX_FIX_GAP_S


@dataclass(frozen=True)
class MotionWindow:
    window_index: int
    t_start: float
    t_end: float
    d_t: float
    v_t: float
    valid_v: bool
    # False when either trajectory has a sampling gap over the window start
    valid: bool = True


def _coordinates(point):
    if hasattr(point, "lat"):
        return point.lat, point.lon
    lat, lon = point
    return lat, lon


def haversine_m(a, b):
    """Great-circle distance in meters between two (lat, lon) points or fixes."""
    lat1, lon1 = _coordinates(a)
    lat2, lon2 = _coordinates(b)
    check_coordinates(lat1, lon1)
    check_coordinates(lat2, lon2)

    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    delta_phi = math.radians(lat2 - lat1)
    delta_lambda = math.radians(lon2 - lon1)

    h = (
        math.sin(delta_phi / 2) ** 2
        + math.cos(phi1) * math.cos(phi2) * math.sin(delta_lambda / 2) ** 2
    )
    # rounding can push h a hair above 1 for antipodal points
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(min(1.0, h)))


def closure_rate(d_prev, d_curr, dt):
    """Rate of distance decrease in m/s, positive while the vessels converge."""
    for name, value in (("d_prev", d_prev), ("d_curr", d_curr)):
        if math.isnan(value) or value < 0:
            raise InputError(f"{name} must be a non-negative distance, got {value}")
    if math.isnan(dt) or dt <= 0:
        raise InputError(f"dt must be positive, got {dt}")
    return (d_prev - d_curr) / dt


def position_at(traj, t):
    """(lat, lon) of a vessel at time t.

    The nearest fix is used when it lies within NEAREST_FIX_S of t, otherwise
    latitude and longitude are interpolated linearly between the bracketing fixes.
    """
    if not math.isfinite(t):
        raise InputError(f"Query time must be finite, got {t}")
    ts = traj.times
    i = int(np.searchsorted(ts, t))
    candidates = [j for j in (i - 1, i) if 0 <= j < len(ts)]
    nearest = min(candidates, key=lambda j: (abs(ts[j] - t), j))
    if abs(ts[nearest] - t) <= NEAREST_FIX_S:
        fix = traj.fixes[nearest]
        return fix.lat, fix.lon
    if t < ts[0] or t > ts[-1]:
        raise OutOfCoverageError(
            f"t={t} outside coverage [{ts[0]}, {ts[-1]}] of vessel {traj.vessel_id!r}"
        )
    return float(np.interp(t, ts, traj.lats)), float(np.interp(t, ts, traj.lons))


def pairwise_distance_at(traj_a, traj_b, t):
    return haversine_m(position_at(traj_a, t), position_at(traj_b, t))


def overlap_windows(trajectories):
    """(start, count) of the whole one-second windows shared by all trajectories."""
    if not trajectories:
        raise NoOverlapError("No trajectories to overlap")
    if any(len(traj) == 0 for traj in trajectories):
        raise NoOverlapError("Empty trajectory has no coverage")
    start = max(traj.start for traj in trajectories)
    end = min(traj.end for traj in trajectories)
    overlap = end - start
    if overlap <= 0:
        raise NoOverlapError(
            f"Trajectories do not overlap (latest start {start}, earliest end {end})"
        )
    count = math.floor(overlap + TIME_EPSILON_S)
    if count < 1:
        raise DegenerateOverlapError(f"Overlap of {overlap:.3f} s is shorter than 1 s")
    return start, count


def window_is_valid(trajectories, t):
    return not any(traj.in_gap(t) for traj in trajectories)


def build_motion_windows(traj_a, traj_b):
    start, count = overlap_windows((traj_a, traj_b))
    TE_Log.log.debug(
        f"Building {count} windows for {traj_a.vessel_id!r}/{traj_b.vessel_id!r} from t={start}"
    )
    windows = []
    d_prev = None
    for k in range(count):
        t_start = start + k * WINDOW_S
        d = pairwise_distance_at(traj_a, traj_b, t_start)
        if d_prev is None:
            v, valid_v = 0.0, False
        else:
            v, valid_v = closure_rate(d_prev, d, WINDOW_S), True
        valid = window_is_valid((traj_a, traj_b), t_start)
        windows.append(
            MotionWindow(k, t_start, t_start + WINDOW_S, d, v, valid_v, valid)
        )
        d_prev = d

    invalid = sum(1 for w in windows if not w.valid)
    if invalid:
        TE_Log.log.warning(f"{invalid} windows fall inside GPS sampling gaps")
    return windows
