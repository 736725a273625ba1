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


import csv
import io
import json
import math

import numpy as np
import pytest

from traj_exit.cost_model import load_profile
from traj_exit.errors import CoverageError, InputError, NotEnoughVesselsError
from traj_exit.fixtures import FixtureSpec, distance_profile, generate, preset, vessel_trajectories
from traj_exit.geo_motion import GeoFix, Trajectory, haversine_m
from traj_exit.heads import FULL_SET, P3_ONLY, Head
from traj_exit.ingest import DetectionRecord, FrameStreamMeta
from traj_exit.policy import PolicyConfig, TE_Policies
from traj_exit.sim import (
    ReplayBackend,
    aggregate_pairs,
    build_windows,
    dump_decisions,
    dump_report,
    evaluate_policy,
    export_timeline,
    run,
)

DEPLOYMENT = load_profile("deployment")
CFG = PolicyConfig()


def custom(duration, fps, layout="random", **kwargs):
    return FixtureSpec(duration, fps, layout, corpus=(0, 0, 0), detections=False, **kwargs)


def brute_force(fixture, cfg, profile):
    """Independent per-frame evaluation straight from the fixes."""
    a, b = fixture.trajectories
    distances = [haversine_m(fa, fb) for fa, fb in zip(a.fixes, b.fixes)]
    t0 = a.fixes[0].t
    low = profile.head(Head.P3).latency_ms
    latencies = []
    for i in range(fixture.meta.frame_count):
        t = fixture.meta.frame_time(i)
        k = 0
        while k + 1 < len(distances) and t0 + (k + 1) <= t + 1e-6:
            k += 1
        v = distances[k - 1] - distances[k] if k else 0.0
        easy = distances[k] > cfg.tau1 and v < cfg.tau2
        latencies.append(low if easy else profile.full_latency_ms)
    frames_low = sum(1 for x in latencies if x == low)
    return frames_low, math.fsum(latencies)


def test_reference_run():
    fixture = generate(preset("reference"), seed=7)
    report, decisions = run(fixture.trajectories, fixture.meta, TE_Policies.read(), DEPLOYMENT)

    assert report.frame_count == 3686
    assert report.frames_low == 3027
    assert report.frames_full == 659
    assert len(report.per_window_timeline) == 125
    assert report.total_latency_ms == pytest.approx(3027 * 6.686 + 659 * 10.097, abs=1e-6)
    assert report.total_latency_ms == pytest.approx(26890.0, abs=20.0)
    assert report.full_model_baseline_ms == pytest.approx(37220.0, abs=20.0)
    assert f"{report.total_latency_ms / 1000:.2f}" == "26.89"
    assert f"{report.full_model_baseline_ms / 1000:.2f}" == "37.22"
    assert len(decisions) == 3686
    assert report.low_latency_ms == 6.686
    assert report.full_latency_ms == 10.097


def test_all_easy_run():
    fixture = generate(custom(10, 10.0, "all-easy"), seed=1)
    report, _ = run(fixture.trajectories, fixture.meta, CFG, DEPLOYMENT)
    assert report.frame_count == 100
    assert report.frames_full == 0
    assert report.total_latency_ms == math.fsum([6.686] * 100)
    assert report.latency_saving_pct == pytest.approx((1 - 6.686 / 10.097) * 100)
    assert report.mean_flops_savings_pct == pytest.approx(25.08)


def test_all_hard_run():
    fixture = generate(custom(20, 12.5, "all-hard"), seed=3)
    report, _ = run(fixture.trajectories, fixture.meta, CFG, DEPLOYMENT)
    assert report.frames_low == 0
    assert report.total_latency_ms == report.full_model_baseline_ms
    assert report.latency_saving_pct == 0.0
    assert report.mean_flops_savings_pct == 0.0


@pytest.mark.parametrize("layout", ["all-easy", "all-hard"])
def test_low_branch_counted_when_sets_coincide(layout):
    fixture = generate(custom(5, 10.0, layout), seed=4)
    cfg = PolicyConfig(low_set=FULL_SET)
    report, _ = run(fixture.trajectories, fixture.meta, cfg, DEPLOYMENT)
    assert report.frames_low == fixture.expected_low_frames
    assert report.frames_full == fixture.expected_full_frames
    assert report.total_latency_ms == report.full_model_baseline_ms


def test_saving_stays_within_low_set_bound():
    rng = np.random.default_rng(17)
    bound = (1.0 - DEPLOYMENT.head(Head.P3).latency_ms / DEPLOYMENT.full_latency_ms) * 100.0
    for _ in range(50):
        spec = custom(int(rng.integers(2, 30)), float(rng.uniform(1.0, 30.0)))
        fixture = generate(spec, seed=int(rng.integers(1 << 30)))
        report, _ = run(fixture.trajectories, fixture.meta, CFG, DEPLOYMENT)
        assert -1e-9 <= report.latency_saving_pct <= bound + 1e-9


def test_random_fixtures_match_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(100):
        spec = custom(int(rng.integers(2, 40)), float(rng.uniform(1.0, 30.0)))
        fixture = generate(spec, seed=int(rng.integers(1 << 30)))
        report, decisions = run(fixture.trajectories, fixture.meta, CFG, DEPLOYMENT)

        frames_low, total = brute_force(fixture, CFG, DEPLOYMENT)
        assert report.frames_low + report.frames_full == report.frame_count
        assert report.frames_low == frames_low == fixture.expected_low_frames
        assert report.total_latency_ms == total
        assert math.fsum(d.latency_ms for d in decisions) == total


def test_decisions_switch_at_window_boundaries():
    layout = (False, True) * 5
    distances = distance_profile(layout, np.random.default_rng(0), CFG.tau1, CFG.tau2)
    trajectories = vessel_trajectories(distances, 0.0)
    _, decisions = run(trajectories, FrameStreamMeta(100, 10.0), CFG, DEPLOYMENT)
    for d in decisions:
        assert d.window_index == d.frame_index // 10
        assert d.selection == (FULL_SET if layout[d.window_index] else P3_ONLY)
    switches = [b.frame_index for a, b in zip(decisions, decisions[1:]) if a.selection != b.selection]
    assert switches == list(range(10, 100, 10))


def test_min_dwell_reduces_low_frames():
    fixture = generate(custom(30, 10.0), seed=4)
    plain, _ = run(fixture.trajectories, fixture.meta, CFG, DEPLOYMENT)
    held, _ = run(fixture.trajectories, fixture.meta, PolicyConfig(min_dwell=3), DEPLOYMENT)
    assert held.frames_low <= plain.frames_low


def test_frames_past_trajectories():
    fixture = generate(custom(10, 10.0, "all-easy"), seed=1)
    meta = FrameStreamMeta(200, 10.0, fixture.meta.t0)
    with pytest.raises(CoverageError, match="Coverage gap") as e:
        run(fixture.trajectories, meta, CFG, DEPLOYMENT)
    assert e.value.exit_code == 3


def test_frames_before_trajectories():
    fixture = generate(custom(10, 10.0, "all-easy"), seed=1)
    meta = FrameStreamMeta(50, 10.0, fixture.meta.t0 - 3.0)
    with pytest.raises(CoverageError):
        run(fixture.trajectories, meta, CFG, DEPLOYMENT)


def test_short_video_is_fine():
    fixture = generate(custom(10, 10.0, "all-easy"), seed=1)
    meta = FrameStreamMeta(35, 10.0, fixture.meta.t0)
    report, _ = run(fixture.trajectories, meta, CFG, DEPLOYMENT)
    assert report.frame_count == 35


def test_replay_backend_filters_heads():
    layout = (False, True)
    trajectories = vessel_trajectories(
        distance_profile(layout, np.random.default_rng(0), CFG.tau1, CFG.tau2), 0.0
    )
    records = [
        DetectionRecord(0, Head.P3, "ASV", 0.9, (0, 0, 10, 10)),
        DetectionRecord(0, Head.P4, "Boat", 0.8, (0, 0, 40, 40)),
        DetectionRecord(15, Head.P4, "Boat", 0.8, (0, 0, 40, 40)),
        DetectionRecord(15, Head.P5, "Boat", 0.7, (0, 0, 120, 120)),
    ]
    report, decisions = run(
        trajectories, FrameStreamMeta(20, 10.0), CFG, DEPLOYMENT, ReplayBackend(records)
    )
    assert [d.head for d in decisions[0].detections] == [Head.P3]
    assert [d.head for d in decisions[15].detections] == [Head.P4, Head.P5]
    assert decisions[5].detections == ()
    assert report.detections_per_head == {"P3": 1, "P4": 1, "P5": 1}


def test_replay_frames_out_of_range():
    fixture = generate(custom(5, 10.0, "all-easy"), seed=1)
    backend = ReplayBackend([DetectionRecord(70, Head.P3, "ASV", 0.9, (0, 0, 10, 10))])
    with pytest.raises(InputError):
        run(fixture.trajectories, fixture.meta, CFG, DEPLOYMENT, backend)


def fixed(vessel_id, lat, count=5):
    return Trajectory(vessel_id, [GeoFix(vessel_id, float(t), lat, 24.94) for t in range(count)])


def test_closest_pair_drives_multi_vessel_windows():
    trajectories = [fixed("c", 37.4510), fixed("a", 37.4500), fixed("b", 37.4502)]
    agg = aggregate_pairs(trajectories, 1.0, 0.0)
    assert agg.pair == ("a", "b")
    assert agg.d_t == pytest.approx(22.24, abs=0.01)
    assert agg.v_t == pytest.approx(0.0, abs=1e-9)
    windows = build_windows(trajectories)
    assert len(windows) == 5
    assert all(w.d_t == pytest.approx(22.24, abs=0.01) for w in windows)


def test_tied_pairs_break_lexicographically():
    trajectories = [fixed("z", 1.0), fixed("y", 0.5), fixed("x", 0.0)]
    assert aggregate_pairs(trajectories, 0.0).pair == ("x", "y")


def test_single_vessel():
    with pytest.raises(NotEnoughVesselsError, match="need at least two vessels"):
        build_windows([fixed("a", 37.45)])


def test_outputs():
    fixture = generate(custom(6, 5.0, "all-easy"), seed=2)
    report, decisions = run(fixture.trajectories, fixture.meta, CFG, DEPLOYMENT)

    out = io.StringIO()
    export_timeline(report, out)
    rows = list(csv.reader(io.StringIO(out.getvalue())))
    assert rows[0] == ["window", "t_start", "d_m", "v_mps", "heads"]
    assert len(rows) == 7
    assert all(row[4] == "P3" for row in rows[1:])

    data = json.loads(dump_report(report))
    assert list(data)[:7] == [
        "frame_count",
        "frames_low",
        "frames_full",
        "total_latency_ms",
        "full_model_baseline_ms",
        "latency_saving_pct",
        "model",
    ]
    assert data["frame_count"] == 30
    assert len(data["per_window_timeline"]) == 6

    lines = dump_decisions(decisions).splitlines()
    assert len(lines) == 30
    assert json.loads(lines[0])["heads"] == "P3"


def test_policy_evaluation_without_frames():
    fixture = generate(preset("reference"), seed=7)
    entries = evaluate_policy(fixture.trajectories, CFG)
    assert len(entries) == 125
    assert [e.selection.is_full for e in entries] == list(fixture.hard_windows)
