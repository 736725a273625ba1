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

"""Scale-aware learning rates for the detection heads of a fine-tuned detector.

Boxes are sorted into small/medium/large by the geometric mean of their side
lengths. Each category's frequency is weighted, the weighted scores are
normalized by their maximum, and the normalized factor scales the base learning
rate of the head serving that category. The neck trains at a fixed 0.8 of the
base rate; the backbone rate is not derived here.
"""

import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum

from .errors import EmptyCorpusError, InputError, RangeError
from .heads import Head
from .logging import TE_Log

NECK_FACTOR = 0.8
ZERO_RATE_FLOOR = 0.01


class ScaleCategory(str, Enum):
    SMALL = "small"
    MEDIUM = "medium"
    LARGE = "large"


CATEGORY_ORDER = (ScaleCategory.SMALL, ScaleCategory.MEDIUM, ScaleCategory.LARGE)
CATEGORY_HEADS = {
    ScaleCategory.SMALL: Head.P3,
    ScaleCategory.MEDIUM: Head.P4,
    ScaleCategory.LARGE: Head.P5,
}
DEFAULT_WEIGHTS = {
    ScaleCategory.SMALL: 1.5,
    ScaleCategory.MEDIUM: 1.0,
    ScaleCategory.LARGE: 0.7,
}


@dataclass(frozen=True)
class ScaleThresholds:
    small_max: float = 32.0
    medium_max: float = 96.0

    def __post_init__(self):
        if not (0 < self.small_max < self.medium_max) or not math.isfinite(self.medium_max):
            raise InputError(
                f"Thresholds need 0 < small_max < medium_max, got {self.small_max}, {self.medium_max}"
            )

    @staticmethod
    def parse(text):
        values = _floats(text, 2, "thresholds")
        return ScaleThresholds(*values)

    def size_range(self, category):
        if category is ScaleCategory.SMALL:
            return f"s < {self.small_max:g}px"
        if category is ScaleCategory.MEDIUM:
            return f"{self.small_max:g} <= s < {self.medium_max:g}px"
        return f"s >= {self.medium_max:g}px"


@dataclass(frozen=True)
class CategoryStats:
    count: int
    f: float
    omega: float
    r: float


@dataclass(frozen=True)
class ScaleComposition:
    # ScaleCategory -> CategoryStats, in CATEGORY_ORDER
    categories: dict
    thresholds: ScaleThresholds

    def __getitem__(self, category):
        return self.categories[ScaleCategory(category)]

    @property
    def total(self):
        return sum(s.count for s in self.categories.values())


@dataclass(frozen=True)
class LrSchedule:
    eta0: float
    eta_p3: float
    eta_p4: float
    eta_p5: float
    eta_neck: float
    # heads whose zero factor was raised to the floor rate
    floored: tuple = ()

    def for_head(self, head):
        return {Head.P3: self.eta_p3, Head.P4: self.eta_p4, Head.P5: self.eta_p5}[
            Head.parse(head)
        ]


def _floats(text, n, name):
    try:
        values = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise InputError(f"Cannot parse {name} {text!r}") from None
    if len(values) != n:
        raise InputError(f"Expected {n} comma separated {name}, got {text!r}")
    return values


def parse_weights(text):
    return _weights(dict(zip(CATEGORY_ORDER, _floats(text, 3, "weights"))))


def _weights(weights):
    if weights is None:
        weights = DEFAULT_WEIGHTS
    if not isinstance(weights, dict):
        weights = dict(zip(CATEGORY_ORDER, weights))
    weights = {ScaleCategory(k): float(v) for k, v in weights.items()}
    missing = [c.value for c in CATEGORY_ORDER if c not in weights]
    if missing:
        raise InputError(f"Missing weights for {missing}")
    for category, omega in weights.items():
        if not math.isfinite(omega) or omega <= 0:
            raise InputError(f"Weight for {category.value} must be positive, got {omega}")
    return weights


def size_metric(box):
    """Geometric mean of the box sides in pixels."""
    if not box.width > 0 or not box.height > 0:
        raise RangeError(f"Non-positive box dimension {box.width}x{box.height}")
    return math.sqrt(box.width * box.height)


def categorize(box, th=ScaleThresholds()):
    """Scale category of a box, or of an already computed size metric."""
    m = box if isinstance(box, (int, float)) else size_metric(box)
    if m < th.small_max:
        return ScaleCategory.SMALL
    if m < th.medium_max:
        return ScaleCategory.MEDIUM
    return ScaleCategory.LARGE


def compose_counts(counts, th=ScaleThresholds(), weights=None):
    weights = _weights(weights)
    counts = {ScaleCategory(k): int(v) for k, v in dict(counts).items()}
    total = sum(counts.values())
    if total <= 0:
        raise EmptyCorpusError("Scale composition needs at least one box")
    f = {c: counts.get(c, 0) / total for c in CATEGORY_ORDER}
    scores = {c: weights[c] * f[c] for c in CATEGORY_ORDER}
    top = max(scores.values())
    categories = {
        c: CategoryStats(counts.get(c, 0), f[c], weights[c], scores[c] / top)
        for c in CATEGORY_ORDER
    }
    return ScaleComposition(categories, th)


def compose(corpus, th=ScaleThresholds(), weights=None):
    if not corpus:
        raise EmptyCorpusError("Scale composition needs at least one box")
    counts = Counter(categorize(box, th) for box in corpus)
    TE_Log.log.info(
        f"Scale composition of {len(corpus)} boxes: "
        + ", ".join(f"{c.value}={counts.get(c, 0)}" for c in CATEGORY_ORDER)
    )
    return compose_counts(counts, th, weights)


def schedule(comp, eta0=1e-3):
    if not math.isfinite(eta0) or eta0 <= 0:
        raise InputError(f"eta0 must be positive, got {eta0}")
    rates = {}
    floored = []
    for category in CATEGORY_ORDER:
        head = CATEGORY_HEADS[category]
        r = comp[category].r
        if r > 0:
            rates[head] = r * eta0
        else:
            rates[head] = ZERO_RATE_FLOOR * eta0
            floored.append(head)
            TE_Log.log.warning(
                f"No {category.value} boxes, {head.value} learning rate floored to {rates[head]:.2e}"
            )
    return LrSchedule(
        eta0=eta0,
        eta_p3=rates[Head.P3],
        eta_p4=rates[Head.P4],
        eta_p5=rates[Head.P5],
        eta_neck=NECK_FACTOR * eta0,
        floored=tuple(floored),
    )


def schedule_to_dict(comp, sched):
    return {
        "eta0": sched.eta0,
        "eta_p3": sched.eta_p3,
        "eta_p4": sched.eta_p4,
        "eta_p5": sched.eta_p5,
        "eta_neck": sched.eta_neck,
        "backbone": "unspecified",
        "floored_heads": [h.value for h in sched.floored],
        "thresholds": {
            "small_max": comp.thresholds.small_max,
            "medium_max": comp.thresholds.medium_max,
        },
        "categories": {
            c.value: {
                "head": CATEGORY_HEADS[c].value,
                "count": comp[c].count,
                "f": comp[c].f,
                "omega": comp[c].omega,
                "r": comp[c].r,
            }
            for c in CATEGORY_ORDER
        },
    }


def render_table(comp, sched):
    """Plain text table with one row per component, neck last."""
    header = ("Component", "Size range", "Instances", "f_k (%)", "w_k", "r_k", "eta")
    rows = []
    for c in CATEGORY_ORDER:
        stats = comp[c]
        head = CATEGORY_HEADS[c]
        rows.append(
            (
                f"{c.value.capitalize()} ({head.value})",
                comp.thresholds.size_range(c),
                str(stats.count),
                f"{stats.f * 100:.2f}",
                f"{stats.omega:.1f}",
                f"{stats.r:.3f}",
                f"{sched.for_head(head):.2e}",
            )
        )
    rows.append(
        ("Neck", "---", "---", "---", "---", f"{NECK_FACTOR:.3f} (fixed)", f"{sched.eta_neck:.2e}")
    )
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]

    def line(cells):
        return "| " + " | ".join(cell.ljust(w) for cell, w in zip(cells, widths)) + " |"

    rule = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    out = [rule, line(header), rule]
    out.extend(line(r) for r in rows)
    out.append(rule)
    return "\n".join(out) + "\n"
