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

"""traj-exit command line.

Every command computes all of its outputs before touching the output
directory, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Sequence

from . import __version__
from .cost_model import TE_Profiles, head_table, load_profile, validate_profile
from .errors import InputError, NotEnoughVesselsError, ProfileError, TrajExitError
from .fixtures import PRESET_ALIASES, PRESETS, FixtureSpec, fixture_texts, generate, preset
from .geo_motion import overlap_windows
from .ingest import (
    KNOWN_CLASSES,
    FrameStreamMeta,
    check_classes,
    load_frame_meta,
    parse_bbox_corpus,
    parse_detections,
    parse_trajectories,
)
from .logging import LEVELS, TE_Log
from .lr_planner import ScaleThresholds, compose, parse_weights, render_table, schedule, schedule_to_dict
from .policy import TE_Policies, load_policy
from .sim import (
    CostOnlyBackend,
    ReplayBackend,
    dump_decisions,
    dump_report,
    dump_timeline,
    export_timeline,
    evaluate_policy,
    run,
)


@dataclass
class RunManifest:
    command: str
    inputs: dict
    config: str | None
    out_dir: str
    seed: int | None = None
    version: str = __version__
    created: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )

    def to_dict(self):
        return {
            "command": self.command,
            "inputs": self.inputs,
            "config": self.config,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "version": self.version,
            "created": self.created,
        }


def _read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def _write_outputs(out_dir, texts, manifest):
    os.makedirs(out_dir, exist_ok=True)
    texts = dict(texts)
    texts["manifest.json"] = json.dumps(manifest.to_dict(), indent=2) + "\n"
    for name, text in texts.items():
        with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="") as f:
            f.write(text)
    TE_Log.log.info(f"Wrote {sorted(texts)} to {out_dir}")


def _policy(args):
    cfg = load_policy(args.policy) if args.policy else TE_Policies.read()
    return cfg.with_overrides(tau1=args.tau1, tau2=args.tau2)


def _trajectories(args):
    return parse_trajectories(_read_bytes(args.trajectories), args.format)


def _frame_start(args, trajectories):
    if args.t0 is not None:
        return args.t0
    # frames start with the shared trajectory coverage
    t0, _ = overlap_windows(trajectories)
    return t0


def _frame_meta(args, trajectories):
    try:
        frame_count = int(args.frames)
    except ValueError:
        text = _read_bytes(args.frames)
        meta = load_frame_meta(text, default_t0=_frame_start(args, trajectories))
        return FrameStreamMeta(
            meta.frame_count,
            args.fps if args.fps is not None else meta.fps,
            args.t0 if args.t0 is not None else meta.t0,
        )
    if args.fps is None:
        raise InputError("--fps is required when --frames is a frame count")
    return FrameStreamMeta(frame_count, args.fps, _frame_start(args, trajectories))


def cmd_plan_lr(args):
    th = ScaleThresholds.parse(args.thresholds)
    weights = parse_weights(args.weights)
    corpus = parse_bbox_corpus(_read_bytes(args.corpus))
    allowed = [c.strip() for c in args.classes.split(",") if c.strip()] if args.classes else KNOWN_CLASSES
    check_classes(corpus, allowed)
    comp = compose(corpus, th, weights)
    sched = schedule(comp, args.eta0)
    table = render_table(comp, sched)
    if args.out:
        texts = {
            "schedule.json": json.dumps(schedule_to_dict(comp, sched), indent=2) + "\n",
            "lr_table.txt": table,
        }
        manifest = RunManifest("plan-lr", {"corpus": args.corpus}, None, args.out)
        _write_outputs(args.out, texts, manifest)
    sys.stdout.write(table)
    return 0


def cmd_simulate(args):
    cfg = _policy(args)
    profile = load_profile(args.profile)
    if not validate_profile(profile).consistent:
        TE_Log.log.warning(f"Simulating with inconsistent profile {profile.model_name!r}")
    trajectories = _trajectories(args)
    if len(trajectories) < 2:
        raise NotEnoughVesselsError("need at least two vessels")
    meta = _frame_meta(args, trajectories)

    inputs = {"trajectories": args.trajectories, "frames": args.frames, "profile": args.profile}
    if args.backend == "replay":
        if not args.detections:
            raise InputError("--backend replay needs --detections")
        backend = ReplayBackend(parse_detections(_read_bytes(args.detections)))
        inputs["detections"] = args.detections
    else:
        backend = CostOnlyBackend()

    report, decisions = run(trajectories, meta, cfg, profile, backend)
    timeline = io.StringIO()
    export_timeline(report, timeline)
    texts = {
        "report.json": dump_report(report),
        "timeline.csv": timeline.getvalue(),
        "decisions.jsonl": dump_decisions(decisions),
    }
    manifest = RunManifest("simulate", inputs, args.policy, args.out)
    _write_outputs(args.out, texts, manifest)
    sys.stdout.write(report.summary() + "\n")
    return 0


def cmd_policy_eval(args):
    cfg = _policy(args)
    entries = evaluate_policy(_trajectories(args), cfg)
    table = dump_timeline(entries)
    if args.out:
        manifest = RunManifest("policy-eval", {"trajectories": args.trajectories}, args.policy, args.out)
        _write_outputs(args.out, {"timeline.csv": table}, manifest)
    sys.stdout.write(table)
    return 0


def _fixture_spec(args):
    custom = {
        "duration": args.duration,
        "fps": args.fps,
        "hard_frames": args.hard_frames,
        "t0": args.t0,
        "tau1": args.tau1,
        "tau2": args.tau2,
    }
    given = {k: v for k, v in custom.items() if v is not None}
    if args.all_easy or args.all_hard:
        given["layout"] = "all-easy" if args.all_easy else "all-hard"
    if args.preset:
        if given:
            raise InputError(f"--preset cannot be combined with {sorted(given)}")
        return preset(args.preset)
    if args.duration is None or args.fps is None:
        raise InputError("make-fixture needs --preset or both --duration and --fps")
    if args.all_easy and args.all_hard:
        raise InputError("--all-easy and --all-hard are exclusive")
    if args.hard_frames is not None:
        if "layout" in given:
            raise InputError("--hard-frames cannot be combined with --all-easy or --all-hard")
        given["layout"] = "hard-frames"
    return FixtureSpec(**given)


def cmd_make_fixture(args):
    spec = _fixture_spec(args)
    fixture = generate(spec, args.seed)
    inputs = {
        "preset": args.preset,
        "duration": spec.duration,
        "fps": spec.fps,
        "layout": spec.layout,
        "hard_frames": spec.hard_frames,
    }
    manifest = RunManifest("make-fixture", inputs, None, args.out, seed=args.seed)
    _write_outputs(args.out, fixture_texts(fixture), manifest)
    sys.stdout.write(
        f"Fixture with {fixture.meta.frame_count} frames over {spec.duration} windows: "
        f"{fixture.expected_low_frames} low, {fixture.expected_full_frames} full\n"
    )
    return 0


def cmd_profiles(args):
    profiles = [load_profile(name) for name in args.profile] if args.profile else TE_Profiles.all()
    sys.stdout.write(head_table(profiles))
    problems = []
    for profile in profiles:
        report = validate_profile(profile)
        status = "consistent" if report.consistent else "INCONSISTENT"
        sys.stdout.write(f"{profile.model_name}: {status}\n")
        for violation in report.violations:
            sys.stdout.write(f"  - {violation}\n")
        if not report.consistent:
            problems.append(profile.model_name)
    if problems:
        raise ProfileError(f"Inconsistent profiles: {', '.join(problems)}")
    return 0


def _add_trajectory_args(parser):
    parser.add_argument("--trajectories", required=True, help="GPS fixes, CSV or JSONL")
    parser.add_argument("--format", choices=["csv", "jsonl"], default="csv")


def _add_policy_args(parser):
    parser.add_argument("--policy", help="Policy file (.json or .toml)")
    parser.add_argument("--tau1", type=float, help="Distance threshold in meters")
    parser.add_argument("--tau2", type=float, help="Closure rate threshold in m/s")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="traj-exit", description="Trajectory-aware detection head selection"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", type=str.upper, choices=list(LEVELS), help="Override TRAJ_EXIT_LOG")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan-lr", help="Per-head learning rates from a box corpus")
    p.add_argument("corpus", help="Bounding box CSV")
    p.add_argument("--thresholds", default="32,96", help="Small and medium upper bounds in px")
    p.add_argument("--weights", default="1.5,1.0,0.7", help="Small, medium and large weights")
    p.add_argument("--eta0", type=float, default=1e-3, help="Base learning rate")
    p.add_argument("--classes", help="Comma separated class labels, default ASV,Boat")
    p.add_argument("--out", help="Directory for schedule.json and lr_table.txt")
    p.set_defaults(func=cmd_plan_lr)

    p = sub.add_parser("simulate", help="Replay a video against trajectories")
    _add_trajectory_args(p)
    p.add_argument("--frames", required=True, help="Frame metadata JSON or a frame count")
    p.add_argument("--fps", type=float)
    p.add_argument("--t0", type=float)
    _add_policy_args(p)
    p.add_argument("--profile", default="deployment", help="Bundled profile name or JSON path")
    p.add_argument("--backend", choices=["cost", "replay"], default="cost")
    p.add_argument("--detections", help="Replay detections JSONL")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("policy-eval", help="Per-window head decisions")
    _add_trajectory_args(p)
    _add_policy_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_policy_eval)

    p = sub.add_parser("make-fixture", help="Write seeded synthetic inputs")
    p.add_argument("--preset", choices=sorted([*PRESETS, *PRESET_ALIASES]))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=int, help="Seconds of video and trajectory")
    p.add_argument("--fps", type=float)
    p.add_argument("--t0", type=float)
    p.add_argument("--all-easy", action="store_true")
    p.add_argument("--all-hard", action="store_true")
    p.add_argument("--hard-frames", type=int, help="Frames that must select the full set")
    p.add_argument("--tau1", type=float)
    p.add_argument("--tau2", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_fixture)

    p = sub.add_parser("profiles", help="Compare and validate detector profiles")
    p.add_argument("--profile", action="append", help="Profile name or path, repeatable")
    p.set_defaults(func=cmd_profiles)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    TE_Log.enable()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    if args.log_level:
        TE_Log.set_level(LEVELS[args.log_level])

    TE_Log.log.debug(f"traj-exit {__version__} {args.command}")
    try:
        return args.func(args)
    except TrajExitError as e:
        sys.stderr.write(f"traj-exit: error: {e}\n")
        return e.exit_code
    except (OSError, UnicodeDecodeError) as e:
        sys.stderr.write(f"traj-exit: error: {e}\n")
        return 2
    except Exception:
        TE_Log.log.exception(f"Unhandled error in {args.command}")
        return 1


def run_cli():
    raise SystemExit(main())


if __name__ == "__main__":
    run_cli()
