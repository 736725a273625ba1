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

"""Readers and writers for trajectory logs, frame metadata, bbox corpora and
replayed detections, plus the frame to motion-window alignment.

All numbers are parsed with ``float``/``int`` so decimal points never depend on
the locale. Writers emit the shortest repr of every float, so reading back a
written file reproduces the values bit for bit.
"""

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import (
    DuplicateTimestampError,
    InputError,
    RangeError,
    SchemaError,
)
from .geo_motion import TIME_EPSILON_S, GeoFix, Trajectory, check_coordinates
from .heads import Head
from .logging import TE_Log

TRAJECTORY_FIELDS = ["vessel_id", "t", "lat", "lon"]
BBOX_FIELDS = ["image_id", "class", "width", "height"]
DETECTION_FIELDS = ["frame", "head", "class", "conf", "x", "y", "w", "h"]
KNOWN_CLASSES = ("ASV", "Boat")


@dataclass(frozen=True)
class FrameStreamMeta:
    frame_count: int
    fps: float
    t0: float = 0.0

    def __post_init__(self):
        if isinstance(self.frame_count, bool) or not isinstance(self.frame_count, int):
            raise InputError(f"frame_count must be an integer, got {self.frame_count!r}")
        if self.frame_count <= 0:
            raise InputError(f"frame_count must be positive, got {self.frame_count}")
        if not math.isfinite(self.fps) or self.fps <= 0:
            raise InputError(f"fps must be positive, got {self.fps}")
        if not math.isfinite(self.t0):
            raise InputError(f"t0 must be finite, got {self.t0}")
        if not math.isfinite(self.duration):
            raise InputError("Stream duration is not finite")

    @property
    def duration(self):
        return self.frame_count / self.fps

    @property
    def t_end(self):
        return self.t0 + self.duration

    def frame_time(self, frame_index):
        return self.t0 + frame_index / self.fps

    def to_dict(self):
        return {"frame_count": self.frame_count, "fps": self.fps, "t0": self.t0}


@dataclass(frozen=True)
class FrameWindowMap:
    # (frame_index, window_index), ordered by frame_index
    assignments: tuple

    @property
    def frame_count(self):
        return len(self.assignments)

    def window_of(self, frame_index):
        return self.assignments[frame_index][1]

    def counts_per_window(self):
        return Counter(w for _, w in self.assignments)


@dataclass(frozen=True)
class BBoxRecord:
    image_id: str
    class_label: str
    width: float
    height: float

    def __post_init__(self):
        for name in ("width", "height"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise RangeError(f"Box {name} must be positive, got {value}")


@dataclass(frozen=True)
class DetectionRecord:
    frame_index: int
    head: Head
    class_label: str
    confidence: float
    box: tuple

    def __post_init__(self):
        object.__setattr__(self, "head", Head.parse(self.head))
        object.__setattr__(self, "box", tuple(self.box))
        if math.isnan(self.confidence) or not 0.0 <= self.confidence <= 1.0:
            raise RangeError(f"Confidence {self.confidence} outside [0, 1]")
        if len(self.box) != 4:
            raise SchemaError(f"Box needs x, y, w, h, got {self.box!r}")

    def to_dict(self):
        x, y, w, h = self.box
        return {
            "frame": self.frame_index,
            "head": self.head.value,
            "class": self.class_label,
            "conf": self.confidence,
            "x": x,
            "y": y,
            "w": w,
            "h": h,
        }


def _text(source):
    """Decode bytes, a binary stream or a text stream into a str."""
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, (bytes, bytearray)):
        try:
            source = bytes(source).decode("utf-8")
        except UnicodeDecodeError as e:
            raise SchemaError(f"Input is not valid UTF-8: {e}") from None
    if source.startswith("\ufeff"):
        source = source[1:]
    return source


def _write(sink, text):
    if isinstance(sink, io.TextIOBase):
        sink.write(text)
    else:
        sink.write(text.encode("utf-8"))


def _number(value, name, line):
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise SchemaError(f"{name} is not a number: {value!r}", line) from None
    if not math.isfinite(number):
        raise SchemaError(f"{name} must be finite, got {value!r}", line)
    return number


def _integer(value, name, line):
    if isinstance(value, bool):
        raise SchemaError(f"{name} is not an integer: {value!r}", line)
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    try:
        return int(str(value).strip())
    except ValueError:
        raise SchemaError(f"{name} is not an integer: {value!r}", line) from None


def _csv_rows(text, header):
    """Yield (line_number, row) after checking the header. Empty input yields nothing."""
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        return
    reader = csv.reader(lines)
    found = next(reader)
    if [h.strip() for h in found] != header:
        raise SchemaError(f"Expected header {','.join(header)}, got {','.join(found)}", 1)
    for row in reader:
        line = reader.line_num
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise SchemaError(f"Expected {len(header)} columns, got {len(row)}", line)
        yield line, [cell.strip() for cell in row]


def _jsonl_objects(text, fields):
    for line, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise SchemaError(f"Invalid JSON: {e.msg}", line) from None
        if not isinstance(obj, dict):
            raise SchemaError("Expected a JSON object", line)
        missing = [f for f in fields if f not in obj]
        if missing:
            raise SchemaError(f"Missing fields {missing}", line)
        yield line, obj


# trajectories


def parse_trajectories(source, format="csv"):
    text = _text(source)
    if format == "csv":
        rows = (
            (line, dict(zip(TRAJECTORY_FIELDS, row)))
            for line, row in _csv_rows(text, TRAJECTORY_FIELDS)
        )
    elif format == "jsonl":
        rows = _jsonl_objects(text, TRAJECTORY_FIELDS)
    else:
        raise InputError(f"Unknown trajectory format {format!r}")

    by_vessel = {}
    seen = {}
    for line, row in rows:
        vessel_id = row["vessel_id"]
        if not isinstance(vessel_id, str) or not vessel_id:
            raise SchemaError(f"vessel_id must be a non-empty string: {vessel_id!r}", line)
        t = _number(row["t"], "t", line)
        lat = _number(row["lat"], "lat", line)
        lon = _number(row["lon"], "lon", line)
        check_coordinates(lat, lon, line)
        key = (vessel_id, t)
        if key in seen:
            raise DuplicateTimestampError(
                f"Duplicate timestamp {t} for vessel {vessel_id!r} (first on line {seen[key]})",
                line,
            )
        seen[key] = line
        by_vessel.setdefault(vessel_id, []).append(GeoFix(vessel_id, t, lat, lon))

    trajectories = [
        Trajectory(vessel_id, sorted(fixes, key=lambda f: f.t))
        for vessel_id, fixes in by_vessel.items()
    ]
    TE_Log.log.debug(
        f"Parsed {len(trajectories)} trajectories, {sum(len(t) for t in trajectories)} fixes"
    )
    return trajectories


def dump_trajectories(trajectories, format="csv"):
    out = io.StringIO()
    if format == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(TRAJECTORY_FIELDS)
        for traj in trajectories:
            for fix in traj.fixes:
                writer.writerow([fix.vessel_id, repr(fix.t), repr(fix.lat), repr(fix.lon)])
    elif format == "jsonl":
        for traj in trajectories:
            for fix in traj.fixes:
                obj = {"vessel_id": fix.vessel_id, "t": fix.t, "lat": fix.lat, "lon": fix.lon}
                out.write(json.dumps(obj) + "\n")
    else:
        raise InputError(f"Unknown trajectory format {format!r}")
    return out.getvalue()


# frame stream


def load_frame_meta(source, default_t0=0.0):
    """Frame stream metadata; ``default_t0`` stands in when the document has no t0."""
    text = _text(source)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"Invalid frame metadata JSON: {e.msg}", e.lineno) from None
    if not isinstance(obj, dict) or "frame_count" not in obj or "fps" not in obj:
        raise SchemaError("Frame metadata needs frame_count and fps")
    return FrameStreamMeta(
        frame_count=_integer(obj["frame_count"], "frame_count", None),
        fps=_number(obj["fps"], "fps", None),
        t0=_number(obj["t0"], "t0", None) if "t0" in obj else default_t0,
    )


def dump_frame_meta(meta):
    return json.dumps(meta.to_dict(), indent=2) + "\n"


def map_frames_to_windows(meta, windows):
    """Assign every frame to the motion window holding its timestamp.

    Frames before the first window or after the last one clamp to the nearest
    end window, so the map is total; coverage gaps are reported by the caller.
    """
    if not windows:
        raise InputError("Cannot map frames onto an empty window sequence")
    starts = np.array([w.t_start for w in windows], dtype=float)
    times = meta.t0 + np.arange(meta.frame_count) / meta.fps
    positions = np.searchsorted(starts, times + TIME_EPSILON_S, side="right") - 1
    clamped_head = int(np.count_nonzero(positions < 0))
    clamped_tail = int(np.count_nonzero(times >= windows[-1].t_end - TIME_EPSILON_S))
    positions = np.clip(positions, 0, len(windows) - 1)
    if clamped_head or clamped_tail:
        TE_Log.log.info(
            f"Clamped {clamped_head} leading and {clamped_tail} trailing frames to end windows"
        )
    return FrameWindowMap(
        tuple(
            (i, windows[int(p)].window_index) for i, p in enumerate(positions.tolist())
        )
    )


# bounding boxes


def parse_bbox_corpus(source):
    text = _text(source)
    records = []
    for line, row in _csv_rows(text, BBOX_FIELDS):
        image_id, class_label, width, height = row
        width = _number(width, "width", line)
        height = _number(height, "height", line)
        if width <= 0 or height <= 0:
            raise RangeError(f"Non-positive box dimension {width}x{height}", line)
        records.append(BBoxRecord(image_id, class_label, width, height))
    TE_Log.log.debug(f"Parsed {len(records)} boxes: {dict(class_counts(records))}")
    return records


def class_counts(records):
    return Counter(r.class_label for r in records)


def check_classes(records, allowed=KNOWN_CLASSES):
    unknown = sorted(set(class_counts(records)) - set(allowed))
    if unknown:
        raise SchemaError(f"Unknown class labels {unknown}, expected one of {list(allowed)}")


def _dimension(value):
    return repr(int(value)) if float(value).is_integer() else repr(value)


def dump_bbox_corpus(records):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(BBOX_FIELDS)
    for r in records:
        writer.writerow([r.image_id, r.class_label, _dimension(r.width), _dimension(r.height)])
    return out.getvalue()


# detections


def parse_detections(source):
    text = _text(source)
    records = []
    for line, obj in _jsonl_objects(text, DETECTION_FIELDS):
        frame = _integer(obj["frame"], "frame", line)
        head = Head.parse(obj["head"], line)
        conf = _number(obj["conf"], "conf", line)
        if not 0.0 <= conf <= 1.0:
            raise RangeError(f"Confidence {conf} outside [0, 1]", line)
        box = tuple(_number(obj[k], k, line) for k in ("x", "y", "w", "h"))
        records.append(DetectionRecord(frame, head, str(obj["class"]), conf, box))
    return records


def dump_detections(records):
    return "".join(json.dumps(r.to_dict()) + "\n" for r in records)


def group_by_frame(records):
    grouped = {}
    for record in records:
        grouped.setdefault(record.frame_index, []).append(record)
    return grouped
