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


import numpy as np
import pytest

from traj_exit.errors import EmptyCorpusError, InputError, RangeError
from traj_exit.heads import Head
from traj_exit.ingest import BBoxRecord
from traj_exit.lr_planner import (
    ScaleCategory,
    ScaleThresholds,
    categorize,
    compose,
    compose_counts,
    parse_weights,
    render_table,
    schedule,
    schedule_to_dict,
    size_metric,
)

SMALL, MEDIUM, LARGE = ScaleCategory.SMALL, ScaleCategory.MEDIUM, ScaleCategory.LARGE


def corpus(small, medium, large):
    boxes = [BBoxRecord("s", "ASV", 16, 16)] * small
    boxes += [BBoxRecord("m", "Boat", 48, 75)] * medium
    boxes += [BBoxRecord("l", "Boat", 200, 120)] * large
    return boxes


def test_size_metric_and_categories():
    assert size_metric(BBoxRecord("a", "ASV", 16, 64)) == 32.0
    assert categorize(31.99) is SMALL
    assert categorize(32.0) is MEDIUM
    assert categorize(95.99) is MEDIUM
    assert categorize(96.0) is LARGE
    assert categorize(BBoxRecord("a", "ASV", 16, 64)) is MEDIUM
    assert categorize(40.0, ScaleThresholds(48, 128)) is SMALL


def test_reference_composition():
    comp = compose(corpus(316, 767, 427))
    assert comp.total == 1510
    assert comp[SMALL].f * 100 == pytest.approx(20.93, abs=0.01)
    assert comp[MEDIUM].f * 100 == pytest.approx(50.79, abs=0.01)
    assert comp[LARGE].f * 100 == pytest.approx(28.28, abs=0.01)
    assert comp[SMALL].r == pytest.approx(0.618, abs=0.001)
    assert comp[MEDIUM].r == 1.0
    assert comp[LARGE].r == pytest.approx(0.390, abs=0.001)

    sched = schedule(comp)
    assert sched.eta_p3 == pytest.approx(6.18e-4, abs=1e-6)
    assert sched.eta_p4 == pytest.approx(1.00e-3, abs=1e-6)
    assert sched.eta_p5 == pytest.approx(3.90e-4, abs=1e-6)
    assert sched.eta_neck == 0.8 * 1e-3
    assert sched.for_head(Head.P3) == sched.eta_p3
    assert sched.floored == ()


def test_rates_scale_with_base_rate():
    comp = compose_counts({SMALL: 316, MEDIUM: 767, LARGE: 427})
    base = schedule(comp, 1e-3)
    doubled = schedule(comp, 2e-3)
    for head in Head:
        assert doubled.for_head(head) == pytest.approx(2 * base.for_head(head))
    assert doubled.eta_neck == pytest.approx(2 * base.eta_neck)


def test_dominant_head_gets_base_rate():
    comp = compose_counts({SMALL: 100, MEDIUM: 10, LARGE: 10})
    assert comp[SMALL].r == 1.0
    assert schedule(comp).eta_p3 == 1e-3


def test_custom_weights():
    comp = compose_counts({SMALL: 10, MEDIUM: 10, LARGE: 10}, weights=parse_weights("1,1,2"))
    assert comp[LARGE].r == 1.0
    assert comp[SMALL].r == 0.5


def test_missing_category_is_floored():
    comp = compose(corpus(10, 20, 0))
    sched = schedule(comp)
    assert sched.eta_p5 == pytest.approx(1e-5)
    assert sched.floored == (Head.P5,)
    assert schedule_to_dict(comp, sched)["floored_heads"] == ["P5"]


def test_input_errors():
    with pytest.raises(EmptyCorpusError):
        compose([])
    with pytest.raises(InputError):
        schedule(compose(corpus(1, 1, 1)), eta0=0.0)
    with pytest.raises(InputError):
        parse_weights("1,2")
    with pytest.raises(InputError):
        parse_weights("1,-2,1")
    with pytest.raises(InputError):
        ScaleThresholds.parse("96,32")
    with pytest.raises(RangeError):
        BBoxRecord("a", "ASV", 0, 10)


def test_schedule_export():
    comp = compose(corpus(316, 767, 427))
    data = schedule_to_dict(comp, schedule(comp))
    assert data["backbone"] == "unspecified"
    assert data["eta_neck"] == pytest.approx(8e-4)
    assert data["categories"]["medium"] == {
        "head": "P4",
        "count": 767,
        "f": comp[MEDIUM].f,
        "omega": 1.0,
        "r": 1.0,
    }
    assert data["thresholds"] == {"small_max": 32.0, "medium_max": 96.0}


def test_table():
    comp = compose(corpus(316, 767, 427))
    table = render_table(comp, schedule(comp))
    lines = table.splitlines()
    assert len(lines) == 8
    small = next(line for line in lines if "(P3)" in line)
    for cell in ("316", "20.93", "1.5", "0.618", "6.18e-04"):
        assert cell in small
    large = next(line for line in lines if "(P5)" in line)
    for cell in ("427", "28.28", "0.7", "0.390", "3.90e-04"):
        assert cell in large
    neck = next(line for line in lines if "Neck" in line)
    assert "0.800 (fixed)" in neck
    assert "8.00e-04" in neck


def test_ratios_unchanged_by_scaling_counts():
    rng = np.random.default_rng(13)
    for _ in range(200):
        counts = {c: int(n) for c, n in zip((SMALL, MEDIUM, LARGE), rng.integers(0, 1000, size=3))}
        if not sum(counts.values()):
            continue
        k = int(rng.integers(2, 50))
        base = compose_counts(counts)
        scaled = compose_counts({c: n * k for c, n in counts.items()})
        for c in (SMALL, MEDIUM, LARGE):
            assert scaled[c].r == pytest.approx(base[c].r, rel=1e-12)
            assert 0.0 <= base[c].r <= 1.0
        assert max(base[c].r for c in (SMALL, MEDIUM, LARGE)) == 1.0
