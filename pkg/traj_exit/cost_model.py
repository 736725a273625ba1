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

"""Per-head cost and quality profiles of detector variants.

Only isolated single-head runs and the full path are measured. Two-head
selections are modeled conservatively: the slowest member's latency and the
smallest member's FLOPs savings.
"""

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

from .errors import SchemaError, UnknownHeadError
from .heads import HEAD_ORDER, Head, HeadSelection
from .logging import TE_Log

SPEEDUP_TOLERANCE = 0.05
BUNDLED_PROFILES = ("nano", "small", "medium", "deployment")


@dataclass(frozen=True)
class HeadProfile:
    head: Head
    speedup_vs_full: float
    flops_savings_pct: float
    detections: int
    latency_ms: float = None
    map50: float = None
    precision: float = None
    recall: float = None


@dataclass(frozen=True)
class DetectorProfile:
    model_name: str
    full_latency_ms: float
    total_detections: int
    # HeadProfile per head, in file order
    heads: tuple

    def head(self, head):
        head = Head.parse(head)
        for profile in self.heads:
            if profile.head is head:
                return profile
        raise UnknownHeadError(f"Profile {self.model_name!r} has no head {head.value}")


@dataclass(frozen=True)
class ValidationReport:
    model_name: str
    violations: tuple

    @property
    def consistent(self):
        return not self.violations


def head_latency(profile, head):
    """Measured isolated latency, or the full latency divided by the speedup."""
    hp = profile.head(head)
    if hp.latency_ms is not None:
        return hp.latency_ms
    return profile.full_latency_ms / hp.speedup_vs_full


def _members(selection, profile):
    selection = HeadSelection.parse(selection)
    # raises for heads the profile does not carry
    return selection, [profile.head(h) for h in selection]


def latency_for(selection, profile):
    selection, members = _members(selection, profile)
    if selection.is_full:
        return profile.full_latency_ms
    if len(members) > 1:
        TE_Log.log.debug(f"Modeled latency for {selection.render()} on {profile.model_name}")
    return max(head_latency(profile, m.head) for m in members)


def flops_savings_for(selection, profile):
    selection, members = _members(selection, profile)
    if selection.is_full:
        return 0.0
    return min(m.flops_savings_pct for m in members)


def validate_profile(profile):
    problems = []
    seen = [hp.head for hp in profile.heads]
    missing = [h.value for h in HEAD_ORDER if h not in seen]
    if missing:
        problems.append(f"missing heads {missing}")
    if len(seen) != len(set(seen)):
        problems.append("duplicate head entries")
    if not profile.full_latency_ms > 0:
        problems.append(f"full_latency_ms {profile.full_latency_ms} is not positive")

    detections = sum(hp.detections for hp in profile.heads)
    if detections != profile.total_detections:
        problems.append(
            f"per-head detections sum to {detections}, total is {profile.total_detections}"
        )

    for hp in profile.heads:
        name = hp.head.value
        if hp.detections < 0:
            problems.append(f"{name}: negative detections {hp.detections}")
        if not hp.speedup_vs_full > 0:
            problems.append(f"{name}: speedup {hp.speedup_vs_full} is not positive")
        if not 0 <= hp.flops_savings_pct < 100:
            problems.append(f"{name}: FLOPs savings {hp.flops_savings_pct}% outside [0, 100)")
        for metric in ("map50", "precision", "recall"):
            value = getattr(hp, metric)
            if value is not None and not 0 <= value <= 1:
                problems.append(f"{name}: {metric} {value} outside [0, 1]")
        if hp.latency_ms is not None:
            if not hp.latency_ms > 0:
                problems.append(f"{name}: latency {hp.latency_ms} ms is not positive")
            elif profile.full_latency_ms > 0:
                ratio = profile.full_latency_ms / hp.latency_ms
                if abs(ratio - hp.speedup_vs_full) > SPEEDUP_TOLERANCE:
                    problems.append(
                        f"{name}: speedup {hp.speedup_vs_full} disagrees with latency ratio {ratio:.3f}"
                    )

    for problem in problems:
        TE_Log.log.warning(f"Profile {profile.model_name!r}: {problem}")
    return ValidationReport(profile.model_name, tuple(problems))


# serialization


def _field(entry, key, kind, required=True):
    if key not in entry or entry[key] is None:
        if required:
            raise SchemaError(f"Head entry missing {key!r}")
        return None
    value = entry[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{key} must be a number, got {value!r}")
    if kind is int:
        if not float(value).is_integer():
            raise SchemaError(f"{key} must be an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise SchemaError(f"{key} must be finite, got {value!r}")
    return float(value)


def profile_from_dict(data):
    try:
        heads = tuple(
            HeadProfile(
                head=Head.parse(entry["head"]),
                speedup_vs_full=_field(entry, "speedup", float),
                flops_savings_pct=_field(entry, "flops_savings_pct", float),
                detections=_field(entry, "detections", int),
                latency_ms=_field(entry, "latency_ms", float, required=False),
                map50=_field(entry, "map50", float, required=False),
                precision=_field(entry, "precision", float, required=False),
                recall=_field(entry, "recall", float, required=False),
            )
            for entry in data["heads"]
        )
        return DetectorProfile(
            model_name=str(data["model"]),
            full_latency_ms=_field(data, "full_latency_ms", float),
            total_detections=_field(data, "total_detections", int),
            heads=heads,
        )
    except (KeyError, TypeError) as e:
        raise SchemaError(f"Invalid detector profile: missing {e}") from None


def profile_to_dict(profile):
    heads = []
    for hp in profile.heads:
        entry = {"head": hp.head.value}
        if hp.latency_ms is not None:
            entry["latency_ms"] = hp.latency_ms
        entry["speedup"] = hp.speedup_vs_full
        entry["flops_savings_pct"] = hp.flops_savings_pct
        entry["detections"] = hp.detections
        for metric in ("map50", "precision", "recall"):
            entry[metric] = getattr(hp, metric)
        heads.append(entry)
    return {
        "model": profile.model_name,
        "full_latency_ms": profile.full_latency_ms,
        "total_detections": profile.total_detections,
        "heads": heads,
    }


def dump_profile(profile):
    return json.dumps(profile_to_dict(profile), indent=2) + "\n"


def load_profile(source):
    """Load a profile from a bundled name or a JSON file path."""
    if str(source).lower() in BUNDLED_PROFILES:
        return TE_Profiles.read(str(source).lower())
    path = Path(source)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"Cannot parse profile {path}: {e.msg}", e.lineno) from None
    return profile_from_dict(data)


class TE_Profiles:
    """Bundled detector profiles, read once and cached by name."""

    data = {}

    @staticmethod
    def path(name):
        ADDON_PATH = os.path.dirname(os.path.abspath(__file__))
        return os.path.join(ADDON_PATH, "assets", "profiles", f"{name}.json")

    @staticmethod
    def read(name="deployment"):
        if name not in TE_Profiles.data:
            TE_Log.log.debug(f"reading profile {name}")
            with open(TE_Profiles.path(name), "r", encoding="utf-8") as f:
                TE_Profiles.data[name] = json.loads(f.read())
        return profile_from_dict(TE_Profiles.data[name])

    @staticmethod
    def all():
        return [TE_Profiles.read(name) for name in BUNDLED_PROFILES]


def head_table(profiles):
    """Per-variant comparison of detections, speedup, FLOPs savings and quality."""

    def fmt(value, spec):
        return "-" if value is None else format(value, spec)

    header = ["Model", "Total"]
    for group in ("Det", "Speedup", "FLOPs%", "mAP50", "Prec", "Rec"):
        header.extend(f"{group} {h.value}" for h in HEAD_ORDER)
    rows = []
    for profile in profiles:
        row = [profile.model_name, str(profile.total_detections)]
        by_head = [profile.head(h) for h in HEAD_ORDER]
        row += [str(hp.detections) for hp in by_head]
        row += [f"x{hp.speedup_vs_full:.2f}" for hp in by_head]
        row += [f"{hp.flops_savings_pct:.2f}" for hp in by_head]
        for metric in ("map50", "precision", "recall"):
            row += [fmt(getattr(hp, metric), ".4f") for hp in by_head]
        rows.append(row)
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in [header, *rows]]
    return "\n".join(lines) + "\n"
