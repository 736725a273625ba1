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

"""Seeded synthetic inputs for simulations and learning-rate planning.

Fixtures are constructed backwards from a target head-selection layout. Two
vessels sit on the same meridian and drift east together, which makes their
great-circle separation exactly the designed distance. Hard windows close in
faster than tau2 or sit inside tau1, easy windows open out beyond tau1, and
the frames landing in hard windows add up to a requested full-set count.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FixtureSpecError
from .geo_motion import EARTH_RADIUS_M, WINDOW_S, GeoFix, MotionWindow, Trajectory
from .heads import HEAD_ORDER, Head
from .ingest import (
    KNOWN_CLASSES,
    BBoxRecord,
    DetectionRecord,
    FrameStreamMeta,
    dump_bbox_corpus,
    dump_detections,
    dump_frame_meta,
    dump_trajectories,
    map_frames_to_windows,
)
from .logging import TE_Log
from .lr_planner import CATEGORY_ORDER, ScaleCategory, ScaleThresholds, categorize

BASE_LAT = 37.45
BASE_LON = 24.94
DRIFT_DEG_PER_S = 0.00002
DEFAULT_T0 = 1717243200.0
VESSEL_IDS = ("ASV-1", "ASV-2")
REFERENCE_CORPUS = (316, 767, 427)
IMAGE_SIZE = (1920, 1080)
BOXES_PER_IMAGE = 4
# mean detections per frame for each head when the head runs
DETECTION_RATES = {Head.P3: 0.5, Head.P4: 0.8, Head.P5: 0.3}
MAX_LAYOUT_CELLS = 20_000_000

FIXTURE_FILES = {
    "trajectories": "trajectories.csv",
    "frames": "frames.json",
    "detections": "detections.jsonl",
    "bboxes": "bboxes.csv",
}

LAYOUTS = ("random", "all-easy", "all-hard", "hard-frames")


@dataclass(frozen=True)
class FixtureSpec:
    # number of one-second windows
    duration: int
    fps: float
    layout: str = "random"
    hard_frames: int = None
    t0: float = DEFAULT_T0
    tau1: float = 30.0
    tau2: float = 0.5
    corpus: tuple = REFERENCE_CORPUS
    detections: bool = True

    def __post_init__(self):
        if isinstance(self.duration, bool) or not isinstance(self.duration, int):
            raise FixtureSpecError(f"duration must be a whole number of seconds, got {self.duration!r}")
        if self.duration < 1:
            raise FixtureSpecError(f"duration must be at least 1 s, got {self.duration}")
        if not math.isfinite(self.fps) or self.fps <= 0:
            raise FixtureSpecError(f"fps must be positive, got {self.fps}")
        if self.frame_count < 1:
            raise FixtureSpecError(f"{self.duration} s at {self.fps} fps gives no frames")
        if self.layout not in LAYOUTS:
            raise FixtureSpecError(f"Unknown layout {self.layout!r}, expected one of {LAYOUTS}")
        if self.layout == "hard-frames":
            if self.hard_frames is None or not 0 <= self.hard_frames <= self.frame_count:
                raise FixtureSpecError(
                    f"hard_frames must be in [0, {self.frame_count}], got {self.hard_frames}"
                )
        elif self.hard_frames is not None:
            raise FixtureSpecError("hard_frames only applies to the hard-frames layout")
        if not self.tau1 > 2.0 or not self.tau2 > 0.0:
            raise FixtureSpecError(f"Fixture thresholds need tau1 > 2 m and tau2 > 0, got {self.tau1}, {self.tau2}")
        if len(self.corpus) != len(CATEGORY_ORDER) or any(n < 0 for n in self.corpus):
            raise FixtureSpecError(f"corpus needs three non-negative counts, got {self.corpus}")

    @property
    def frame_count(self):
        return round(self.duration * self.fps)


PRESETS = {
    "reference": FixtureSpec(duration=125, fps=3686 / 125, layout="hard-frames", hard_frames=659),
}


PRESET_ALIASES = {"paper": "reference"}


def preset(name):
    try:
        return PRESETS[PRESET_ALIASES.get(name, name)]
    except KeyError:
        raise FixtureSpecError(f"Unknown preset {name!r}, expected one of {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class Fixture:
    spec: FixtureSpec
    seed: int
    trajectories: tuple
    meta: FrameStreamMeta
    # True for windows built to select the full set
    hard_windows: tuple
    frames_per_window: tuple
    detections: tuple = field(default=())
    corpus: tuple = field(default=())

    @property
    def expected_full_frames(self):
        return sum(n for n, hard in zip(self.frames_per_window, self.hard_windows) if hard)

    @property
    def expected_low_frames(self):
        return self.meta.frame_count - self.expected_full_frames


def frames_per_window(meta, duration):
    """Frame count of each window, using the same assignment the simulation uses."""
    placeholders = [
        MotionWindow(k, meta.t0 + k * WINDOW_S, meta.t0 + (k + 1) * WINDOW_S, 0.0, 0.0, False)
        for k in range(duration)
    ]
    counts = map_frames_to_windows(meta, placeholders).counts_per_window()
    return tuple(counts.get(k, 0) for k in range(duration))


def hard_layout(counts, target):
    """Mark windows hard so their frames add up to target, using the fewest episodes.

    Dynamic programme over (frames so far, previous window hard); ties keep
    episodes growing rather than opening new ones.
    """
    if target == 0:
        return (False,) * len(counts)
    if len(counts) * (target + 1) > MAX_LAYOUT_CELLS:
        raise FixtureSpecError(f"Layout search for {target} hard frames over {len(counts)} windows is too large")
    inf = np.iinfo(np.int64).max // 4
    easy = np.full(target + 1, inf, dtype=np.int64)
    hard = np.full(target + 1, inf, dtype=np.int64)
    easy[0] = 0
    easy_from_hard = []
    hard_from_hard = []
    for c in counts:
        from_hard_e = hard < easy
        new_easy = np.minimum(easy, hard)
        new_hard = np.full(target + 1, inf, dtype=np.int64)
        from_hard_h = np.zeros(target + 1, dtype=bool)
        if 0 < c <= target:
            extend = hard[: target + 1 - c]
            start = easy[: target + 1 - c] + 1
            from_hard_h[c:] = extend <= start
            new_hard[c:] = np.minimum(extend, start)
        easy_from_hard.append(from_hard_e)
        hard_from_hard.append(from_hard_h)
        easy, hard = new_easy, new_hard

    if min(easy[target], hard[target]) >= inf:
        raise FixtureSpecError(f"No window layout puts exactly {target} frames in hard windows")
    in_hard = bool(hard[target] < easy[target])
    s = target
    layout = []
    for k in range(len(counts) - 1, -1, -1):
        layout.append(in_hard)
        if in_hard:
            in_hard = bool(hard_from_hard[k][s])
            s -= counts[k]
        else:
            in_hard = bool(easy_from_hard[k][s])
    layout.reverse()
    return tuple(layout)


def random_layout(duration, rng, switch=0.15):
    layout = []
    hard = bool(rng.random() < 0.2)
    for _ in range(duration):
        layout.append(hard)
        if rng.random() < switch:
            hard = not hard
    return tuple(layout)


def distance_profile(layout, rng, tau1, tau2):
    """Separation in meters at each window start for a hard/easy layout."""
    d = []
    for k, is_hard in enumerate(layout):
        if k == 0:
            # the first window has no closure rate, only distance can make it hard
            d.append(tau1 * rng.uniform(0.3, 0.6) if is_hard else tau1 + rng.uniform(20.0, 40.0))
            continue
        previous = d[-1]
        if is_hard:
            closer = previous - (tau2 + rng.uniform(0.3, 1.0))
            d.append(closer if closer >= 1.0 else tau1 * rng.uniform(0.25, 0.5))
        else:
            d.append(max(previous + rng.uniform(0.05, 0.4), tau1 + rng.uniform(10.0, 20.0)))
    return d


def vessel_trajectories(distances, t0):
    fixes_a = []
    fixes_b = []
    for k, d in enumerate(distances):
        t = t0 + k * WINDOW_S
        lon = BASE_LON + k * DRIFT_DEG_PER_S
        fixes_a.append(GeoFix(VESSEL_IDS[0], t, BASE_LAT, lon))
        fixes_b.append(GeoFix(VESSEL_IDS[1], t, BASE_LAT + math.degrees(d / EARTH_RADIUS_M), lon))
    return (Trajectory(VESSEL_IDS[0], fixes_a), Trajectory(VESSEL_IDS[1], fixes_b))


def _box_size(rng, low, high):
    metric = rng.uniform(low, high)
    aspect = math.sqrt(rng.uniform(0.5, 2.0))
    return float(round(metric * aspect, 1)), float(round(metric / aspect, 1))


HEAD_SIZE_RANGES = {Head.P3: (8.0, 32.0), Head.P4: (32.0, 96.0), Head.P5: (96.0, 320.0)}


def replay_detections(meta, rng):
    records = []
    for frame in range(meta.frame_count):
        for head in HEAD_ORDER:
            for _ in range(int(rng.poisson(DETECTION_RATES[head]))):
                w, h = _box_size(rng, *HEAD_SIZE_RANGES[head])
                x = float(round(rng.uniform(0, IMAGE_SIZE[0] - w), 1))
                y = float(round(rng.uniform(0, IMAGE_SIZE[1] - h), 1))
                records.append(
                    DetectionRecord(
                        frame,
                        head,
                        KNOWN_CLASSES[int(rng.integers(len(KNOWN_CLASSES)))],
                        round(float(rng.uniform(0.25, 0.99)), 4),
                        (x, y, w, h),
                    )
                )
    return records


def bbox_corpus(counts, rng, th=ScaleThresholds()):
    """Boxes whose scale composition is exactly counts (small, medium, large)."""
    ranges = {
        ScaleCategory.SMALL: (4.0, th.small_max),
        ScaleCategory.MEDIUM: (th.small_max, th.medium_max),
        ScaleCategory.LARGE: (th.medium_max, th.medium_max * 4),
    }
    boxes = []
    for category, count in zip(CATEGORY_ORDER, counts):
        made = 0
        while made < count:
            w, h = _box_size(rng, *ranges[category])
            box = BBoxRecord("", KNOWN_CLASSES[int(rng.integers(len(KNOWN_CLASSES)))], w, h)
            # rounding can move a box across a threshold
            if w > 0 and h > 0 and categorize(box, th) is category:
                boxes.append(box)
                made += 1
    order = rng.permutation(len(boxes))
    return [
        BBoxRecord(f"img_{i // BOXES_PER_IMAGE:05d}", boxes[j].class_label, boxes[j].width, boxes[j].height)
        for i, j in enumerate(order.tolist())
    ]


def generate(spec, seed=0):
    try:
        rng = np.random.default_rng(seed)
    except (TypeError, ValueError) as e:
        raise FixtureSpecError(f"Invalid seed {seed!r}: {e}") from None
    meta = FrameStreamMeta(spec.frame_count, spec.fps, spec.t0)
    counts = frames_per_window(meta, spec.duration)

    if spec.layout == "all-easy":
        layout = (False,) * spec.duration
    elif spec.layout == "all-hard":
        layout = (True,) * spec.duration
    elif spec.layout == "hard-frames":
        layout = hard_layout(counts, spec.hard_frames)
    else:
        layout = random_layout(spec.duration, rng)

    distances = distance_profile(layout, rng, spec.tau1, spec.tau2)
    trajectories = vessel_trajectories(distances, spec.t0)
    detections = tuple(replay_detections(meta, rng)) if spec.detections else ()
    corpus = tuple(bbox_corpus(spec.corpus, rng)) if sum(spec.corpus) else ()

    fixture = Fixture(spec, seed, trajectories, meta, layout, counts, detections, corpus)
    TE_Log.log.info(
        f"Fixture seed={seed}: {spec.duration} windows, {meta.frame_count} frames, "
        f"{sum(layout)} hard windows holding {fixture.expected_full_frames} frames"
    )
    return fixture


def fixture_texts(fixture):
    """File name to content for every fixture file."""
    texts = {
        FIXTURE_FILES["trajectories"]: dump_trajectories(fixture.trajectories),
        FIXTURE_FILES["frames"]: dump_frame_meta(fixture.meta),
    }
    if fixture.spec.detections:
        texts[FIXTURE_FILES["detections"]] = dump_detections(fixture.detections)
    if fixture.corpus:
        texts[FIXTURE_FILES["bboxes"]] = dump_bbox_corpus(fixture.corpus)
    return texts
