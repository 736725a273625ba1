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

"""Trajectory-aware exiting criterion.

A window is easy when the vessels are further apart than tau1 and not
converging at tau2 or faster; easy windows run only the low head set, every
other window runs the full detector. Thresholds are strict, so boundary values
take the full set.
"""

import json
import math
import os
from dataclasses import dataclass, replace
from pathlib import Path

import toml

from .errors import InputError, SchemaError, WindowIndexError
from .heads import FULL_SET, P3_ONLY, HeadSelection
from .logging import TE_Log

POLICY_KEYS = ("tau1_m", "tau2_mps", "low_set", "full_set", "use_abs_v", "min_dwell")


@dataclass(frozen=True)
class PolicyConfig:
    tau1: float = 30.0
    tau2: float = 0.5
    low_set: HeadSelection = P3_ONLY
    full_set: HeadSelection = FULL_SET
    use_abs_v: bool = False
    # consecutive easy windows required before dropping to low_set, 1 disables it
    min_dwell: int = 1

    def __post_init__(self):
        object.__setattr__(self, "low_set", HeadSelection.parse(self.low_set))
        object.__setattr__(self, "full_set", HeadSelection.parse(self.full_set))
        if not _is_number(self.tau1) or not math.isfinite(self.tau1) or self.tau1 <= 0:
            raise InputError(f"tau1 must be a positive distance, got {self.tau1!r}")
        if not _is_number(self.tau2) or not math.isfinite(self.tau2):
            raise InputError(f"tau2 must be a finite rate, got {self.tau2!r}")
        if not self.low_set.issubset(self.full_set):
            raise InputError(f"low_set {self.low_set} is not a subset of full_set {self.full_set}")
        if not isinstance(self.use_abs_v, bool):
            raise InputError(f"use_abs_v must be a boolean, got {self.use_abs_v!r}")
        if isinstance(self.min_dwell, bool) or not isinstance(self.min_dwell, int) or self.min_dwell < 0:
            raise InputError(f"min_dwell must be a non-negative integer, got {self.min_dwell!r}")

    def with_overrides(self, tau1=None, tau2=None):
        changes = {}
        if tau1 is not None:
            changes["tau1"] = tau1
        if tau2 is not None:
            changes["tau2"] = tau2
        return replace(self, **changes) if changes else self

    def to_dict(self):
        return {
            "tau1_m": self.tau1,
            "tau2_mps": self.tau2,
            "low_set": self.low_set.to_list(),
            "full_set": self.full_set.to_list(),
            "use_abs_v": self.use_abs_v,
            "min_dwell": self.min_dwell,
        }

    @staticmethod
    def from_dict(data):
        if not isinstance(data, dict):
            raise SchemaError("Policy configuration must be a mapping")
        unknown = sorted(set(data) - set(POLICY_KEYS))
        if unknown:
            raise SchemaError(f"Unknown policy keys {unknown}")
        defaults = PolicyConfig()
        return PolicyConfig(
            tau1=data.get("tau1_m", defaults.tau1),
            tau2=data.get("tau2_mps", defaults.tau2),
            low_set=data.get("low_set", defaults.low_set),
            full_set=data.get("full_set", defaults.full_set),
            use_abs_v=data.get("use_abs_v", defaults.use_abs_v),
            min_dwell=data.get("min_dwell", defaults.min_dwell),
        )


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def load_policy(path):
    """Read a policy from a .json or .toml file."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".toml":
            data = toml.load(path)
        else:
            data = json.loads(path.read_text(encoding="utf-8"))
    except (toml.TomlDecodeError, json.JSONDecodeError) as e:
        raise SchemaError(f"Cannot parse policy {path}: {e}") from None
    TE_Log.log.debug(f"Loaded policy {path}: {data}")
    return PolicyConfig.from_dict(data)


def dump_policy(cfg):
    return json.dumps(cfg.to_dict(), indent=2) + "\n"


class TE_Policies:
    """Bundled policy documents, read once and cached by name."""

    data = {}

    @staticmethod
    def read(template_name="default.json"):
        if template_name not in TE_Policies.data:
            TE_Log.log.debug(f"reading policy {template_name}")
            ADDON_PATH = os.path.dirname(os.path.abspath(__file__))
            policy_path = os.path.join(ADDON_PATH, "assets", "policies", template_name)
            with open(policy_path, "r", encoding="utf-8") as f:
                TE_Policies.data[template_name] = json.loads(f.read())
        return PolicyConfig.from_dict(TE_Policies.data[template_name])


def is_easy(window, cfg):
    """True when the window takes the low branch: far apart and not closing fast."""
    if not math.isfinite(window.d_t) or math.isnan(window.v_t):
        raise InputError(
            f"Window {window.window_index} has non-finite motion cues d={window.d_t}, v={window.v_t}"
        )
    v = abs(window.v_t) if cfg.use_abs_v else window.v_t
    return window.valid and window.d_t > cfg.tau1 and v < cfg.tau2


def select_heads(window, cfg):
    return cfg.low_set if is_easy(window, cfg) else cfg.full_set


def apply_dwell(easy, cfg):
    """Hold the full branch until the easy branch has held for min_dwell windows.

    Escalation to the full branch is never delayed.
    """
    if cfg.min_dwell <= 1:
        return list(easy)
    held = []
    streak = 0
    for flag in easy:
        streak = streak + 1 if flag else 0
        held.append(streak >= cfg.min_dwell)
    return held


def window_decisions(windows, cfg):
    """Branch flags after dwell and the head selection each one implies."""
    easy = apply_dwell([is_easy(w, cfg) for w in windows], cfg)
    return easy, [cfg.low_set if flag else cfg.full_set for flag in easy]


@dataclass(frozen=True)
class SelectionTimeline:
    # (MotionWindow, HeadSelection) per window
    per_window: tuple
    per_frame: tuple
    # low branch taken, per frame
    easy_frames: tuple

    def frame_counts(self):
        low = sum(self.easy_frames)
        return low, len(self.per_frame) - low


def selection_timeline(windows, frame_map, cfg):
    easy, decisions = window_decisions(windows, cfg)
    position = {w.window_index: i for i, w in enumerate(windows)}
    per_frame = []
    easy_frames = []
    for frame_index, window_index in frame_map.assignments:
        i = position.get(window_index)
        if i is None:
            raise WindowIndexError(
                f"Frame {frame_index} refers to window {window_index}, "
                f"windows cover {windows[0].window_index if windows else '-'}.."
                f"{windows[-1].window_index if windows else '-'}"
            )
        per_frame.append(decisions[i])
        easy_frames.append(easy[i])
    switches = sum(1 for a, b in zip(easy, easy[1:]) if a != b)
    TE_Log.log.debug(f"{len(decisions)} window decisions, {switches} branch switches")
    return SelectionTimeline(tuple(zip(windows, decisions)), tuple(per_frame), tuple(easy_frames))
