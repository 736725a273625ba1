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

"""Adaptive-inference replay over a frame stream.

Motion windows drive the head policy, every frame is charged the latency of
its selection under a detector profile, and a backend supplies the detections
the selected heads would have produced.
"""

import csv
import io
import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from itertools import combinations

from .cost_model import flops_savings_for, latency_for
from .errors import CoverageError, InputError, NotEnoughVesselsError
from .geo_motion import (
    TIME_EPSILON_S,
    WINDOW_S,
    MotionWindow,
    build_motion_windows,
    closure_rate,
    overlap_windows,
    pairwise_distance_at,
    window_is_valid,
)
from .heads import HEAD_ORDER
from .ingest import _write, group_by_frame, map_frames_to_windows
from .logging import TE_Log
from .policy import selection_timeline, window_decisions

TIMELINE_FIELDS = ["window", "t_start", "d_m", "v_mps", "heads"]


@dataclass(frozen=True)
class FrameDecision:
    frame_index: int
    window_index: int
    selection: object
    latency_ms: float
    d_t: float
    v_t: float
    detections: tuple = ()

    def to_dict(self):
        return {
            "frame": self.frame_index,
            "window": self.window_index,
            "heads": self.selection.render(),
            "latency_ms": self.latency_ms,
            "d_m": self.d_t,
            "v_mps": self.v_t,
            "detections": [d.to_dict() for d in self.detections],
        }


@dataclass(frozen=True)
class TimelineEntry:
    window_index: int
    t_start: float
    d_t: float
    v_t: float
    selection: object
    valid: bool = True


@dataclass(frozen=True)
class SimulationReport:
    frame_count: int
    frames_low: int
    frames_full: int
    total_latency_ms: float
    full_model_baseline_ms: float
    latency_saving_pct: float
    per_window_timeline: tuple
    model: str = ""
    low_set: str = "P3"
    low_latency_ms: float = 0.0
    full_latency_ms: float = 0.0
    mean_flops_savings_pct: float = 0.0
    detections_per_head: dict = None

    def to_dict(self):
        return {
            "frame_count": self.frame_count,
            "frames_low": self.frames_low,
            "frames_full": self.frames_full,
            "total_latency_ms": self.total_latency_ms,
            "full_model_baseline_ms": self.full_model_baseline_ms,
            "latency_saving_pct": self.latency_saving_pct,
            "model": self.model,
            "low_set": self.low_set,
            "low_latency_ms": self.low_latency_ms,
            "full_latency_ms": self.full_latency_ms,
            "mean_flops_savings_pct": self.mean_flops_savings_pct,
            "detections_per_head": dict(self.detections_per_head or {}),
            "per_window_timeline": [
                {
                    "window": e.window_index,
                    "t_start": e.t_start,
                    "d_m": e.d_t,
                    "v_mps": e.v_t,
                    "heads": e.selection.render(),
                    "valid": e.valid,
                }
                for e in self.per_window_timeline
            ],
        }

    def summary(self):
        return (
            f"Processed {self.frame_count} frames: {self.frames_low} with {{{self.low_set.replace('|', ',')}}}, "
            f"{self.frames_full} with the full head set. "
            f"Total latency {self.total_latency_ms / 1000:.2f} s against a projected "
            f"{self.full_model_baseline_ms / 1000:.2f} s for the full model "
            f"({self.latency_saving_pct:.2f}% saving)."
        )


class DetectorBackend(ABC):
    @abstractmethod
    def detect(self, frame_index, selection):
        """Detections attributable to the selected heads for one frame."""


class CostOnlyBackend(DetectorBackend):
    def detect(self, frame_index, selection):
        return ()


class ReplayBackend(DetectorBackend):
    """Replays precomputed detections, keeping those from the selected heads."""

    def __init__(self, records):
        self.frames = group_by_frame(records)

    @property
    def frame_range(self):
        if not self.frames:
            return None
        return min(self.frames), max(self.frames)

    def detect(self, frame_index, selection):
        return tuple(d for d in self.frames.get(frame_index, ()) if d.head in selection)


@dataclass(frozen=True)
class PairAggregate:
    d_t: float
    v_t: float
    pair: tuple
    valid_v: bool


def aggregate_pairs(trajectories, t, t_prev=None):
    """Closest vessel pair at t and its closure rate since t_prev.

    Ties on distance go to the lexicographically smallest (vessel_id, vessel_id) pair.
    """
    if len(trajectories) < 2:
        raise NotEnoughVesselsError("need at least two vessels")
    ordered = sorted(trajectories, key=lambda traj: traj.vessel_id)
    best = None
    for a, b in combinations(ordered, 2):
        d = pairwise_distance_at(a, b, t)
        key = (d, (a.vessel_id, b.vessel_id))
        if best is None or key < best[0]:
            best = (key, a, b)
    (d, pair), a, b = best
    if t_prev is None:
        return PairAggregate(d, 0.0, pair, False)
    v = closure_rate(pairwise_distance_at(a, b, t_prev), d, t - t_prev)
    return PairAggregate(d, v, pair, True)


def build_windows(trajectories):
    trajectories = list(trajectories)
    if len(trajectories) < 2:
        raise NotEnoughVesselsError("need at least two vessels")
    if len(trajectories) == 2:
        return build_motion_windows(*trajectories)

    TE_Log.log.info(f"Aggregating {len(trajectories)} vessels by closest pair")
    start, count = overlap_windows(trajectories)
    windows = []
    for k in range(count):
        t_start = start + k * WINDOW_S
        t_prev = t_start - WINDOW_S if k else None
        agg = aggregate_pairs(trajectories, t_start, t_prev)
        windows.append(
            MotionWindow(
                k,
                t_start,
                t_start + WINDOW_S,
                agg.d_t,
                agg.v_t,
                agg.valid_v,
                window_is_valid(trajectories, t_start),
            )
        )
    return windows


def check_coverage(meta, windows):
    lead = windows[0].t_start - meta.t0
    if lead > TIME_EPSILON_S:
        raise CoverageError(
            f"Coverage gap: frame stream starts at t={meta.t0:.3f}, {lead:.2f} s before "
            f"trajectory coverage begins at t={windows[0].t_start:.3f}"
        )
    tail = meta.t_end - windows[-1].t_end
    if tail >= WINDOW_S - TIME_EPSILON_S:
        raise CoverageError(
            f"Coverage gap: frame stream ends at t={meta.t_end:.3f}, {tail:.2f} s after "
            f"trajectory coverage ends at t={windows[-1].t_end:.3f} "
            f"({len(windows)} windows for {meta.duration:.2f} s of video)"
        )


def run(trajectories, meta, cfg, profile, backend=None):
    """Replay a frame stream; returns (SimulationReport, list of FrameDecision)."""
    backend = backend or CostOnlyBackend()
    windows = build_windows(trajectories)
    check_coverage(meta, windows)
    frame_map = map_frames_to_windows(meta, windows)
    timeline = selection_timeline(windows, frame_map, cfg)

    if isinstance(backend, ReplayBackend) and backend.frame_range is not None:
        first, last = backend.frame_range
        if first < 0 or last >= meta.frame_count:
            raise InputError(
                f"Detections reference frames {first}..{last}, stream has {meta.frame_count}"
            )

    latency = {}
    savings = {}
    decisions = []
    window_of = {w.window_index: w for w in windows}
    for (frame_index, window_index), selection in zip(
        frame_map.assignments, timeline.per_frame
    ):
        if selection not in latency:
            latency[selection] = latency_for(selection, profile)
            savings[selection] = flops_savings_for(selection, profile)
        window = window_of[window_index]
        decisions.append(
            FrameDecision(
                frame_index,
                window_index,
                selection,
                latency[selection],
                window.d_t,
                window.v_t,
                tuple(backend.detect(frame_index, selection)),
            )
        )

    frames_low, frames_full = timeline.frame_counts()
    total = math.fsum(d.latency_ms for d in decisions)
    baseline = meta.frame_count * profile.full_latency_ms
    detections_per_head = {h.value: 0 for h in HEAD_ORDER}
    for d in decisions:
        for det in d.detections:
            detections_per_head[det.head.value] += 1

    report = SimulationReport(
        frame_count=meta.frame_count,
        frames_low=frames_low,
        frames_full=frames_full,
        total_latency_ms=total,
        full_model_baseline_ms=baseline,
        latency_saving_pct=(1.0 - total / baseline) * 100.0,
        per_window_timeline=timeline_entries(*zip(*timeline.per_window)),
        model=profile.model_name,
        low_set=cfg.low_set.render(),
        low_latency_ms=latency_for(cfg.low_set, profile),
        full_latency_ms=profile.full_latency_ms,
        mean_flops_savings_pct=math.fsum(savings[d.selection] for d in decisions)
        / meta.frame_count,
        detections_per_head=detections_per_head,
    )
    TE_Log.log.info(report.summary())
    return report, decisions


def timeline_entries(windows, decisions):
    return tuple(
        TimelineEntry(w.window_index, w.t_start, w.d_t, w.v_t, s, w.valid)
        for w, s in zip(windows, decisions)
    )


def evaluate_policy(trajectories, cfg):
    """Per-window decisions without frame metadata or a detector profile."""
    windows = build_windows(trajectories)
    _, decisions = window_decisions(windows, cfg)
    return timeline_entries(windows, decisions)


def dump_timeline(entries):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TIMELINE_FIELDS)
    for e in entries:
        writer.writerow(
            [e.window_index, f"{e.t_start:.3f}", f"{e.d_t:.3f}", f"{e.v_t:.3f}", e.selection.render()]
        )
    return out.getvalue()


def export_timeline(report, sink):
    _write(sink, dump_timeline(report.per_window_timeline))


def dump_report(report):
    return json.dumps(report.to_dict(), indent=2) + "\n"


def dump_decisions(decisions):
    return "".join(json.dumps(d.to_dict()) + "\n" for d in decisions)
