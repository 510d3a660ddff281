"""Temporally stabilized regions of interest from sparse detections.

Per-frame body and face boxes arrive every ``stride`` frames from upstream
detectors. A single clip-level ROI is formed by aggregating box centers with
the median and box sizes with the 75th percentile, which shrugs off the
occasional bad detection. The chest variant inscribes a square of the body's
short side, nudged toward the face along the body's longer axis only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Box2D
from .errors import ConfigurationError, DegenerateBoxError, ManifestError

#: Body boxes covering at least this fraction of the image are treated as
#: degenerate full-frame detections and dropped.
FULL_FRAME_AREA_FRACTION = 0.98

#: Boxes thinner than this (pixels) or below this confidence are dropped.
MIN_BOX_SIDE = 2.0
MIN_CONFIDENCE = 0.25


@dataclass(frozen=True)
class DetectionEntry:
    frame: int
    body: Box2D | None = None
    body_conf: float | None = None
    face: Box2D | None = None
    face_conf: float | None = None


@dataclass(frozen=True)
class DetectionTrack:
    """Sparse per-frame detections for one clip."""

    entries: tuple[DetectionEntry, ...]
    stride: int
    image_w: int
    image_h: int

    def __post_init__(self):
        if self.stride < 1:
            raise ManifestError(f"stride must be >= 1, got {self.stride}")
        if self.image_w < 1 or self.image_h < 1:
            raise ManifestError(f"bad image size {self.image_w}x{self.image_h}")
        frames = [e.frame for e in self.entries]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ManifestError("detection frame indices must be strictly increasing")
        for a, b in zip(frames[:-1], frames[1:-1]):
            if b - a != self.stride:
                raise ManifestError(
                    f"detections at frames {a} and {b} are not {self.stride} apart"
                )
        for e in self.entries:
            for box in (e.body, e.face):
                if box is None:
                    continue
                if box.x < 0 or box.y < 0 or box.x + box.w > self.image_w or box.y + box.h > self.image_h:
                    raise ManifestError(
                        f"box at frame {e.frame} exceeds image bounds: "
                        f"({box.x}, {box.y}, {box.w}, {box.h})"
                    )


@dataclass(frozen=True)
class RoiConfig:
    """How to derive the clip ROI from detections.

    ``alpha`` moves the chest center toward the face; ``enlarge`` scales the
    aggregated box about its center before the final clamp.
    """

    mode: str = "body"
    alpha: float = 0.5
    enlarge: float = 1.0

    def __post_init__(self):
        if self.mode not in ("none", "body", "chest"):
            raise ConfigurationError(f"unknown ROI mode {self.mode!r}")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.enlarge < 1:
            raise ConfigurationError(f"enlarge must be >= 1, got {self.enlarge}")


def load_detections(path: str | Path) -> DetectionTrack:
    """Read a detection JSON file.

    Schema: ``{stride, image_w, image_h, detections: [{frame, body, body_conf,
    face, face_conf}, ...]}`` with boxes as [x, y, w, h] or null.
    """
    data = json.loads(Path(path).read_text())
    for key in ("stride", "image_w", "image_h", "detections"):
        if key not in data:
            raise ManifestError(f"{path} lacks required field {key!r}")

    def _box(raw) -> Box2D | None:
        return None if raw is None else Box2D(*(float(v) for v in raw))

    entries = tuple(
        DetectionEntry(
            frame=int(d["frame"]),
            body=_box(d.get("body")),
            body_conf=d.get("body_conf"),
            face=_box(d.get("face")),
            face_conf=d.get("face_conf"),
        )
        for d in data["detections"]
    )
    return DetectionTrack(
        entries=entries,
        stride=int(data["stride"]),
        image_w=int(data["image_w"]),
        image_h=int(data["image_h"]),
    )


def write_detections(path: str | Path, track: DetectionTrack) -> None:
    def _raw(box: Box2D | None):
        return None if box is None else [box.x, box.y, box.w, box.h]

    data = {
        "stride": track.stride,
        "image_w": track.image_w,
        "image_h": track.image_h,
        "detections": [
            {
                "frame": e.frame,
                "body": _raw(e.body),
                "body_conf": e.body_conf,
                "face": _raw(e.face),
                "face_conf": e.face_conf,
            }
            for e in track.entries
        ],
    }
    Path(path).write_text(json.dumps(data, indent=2))


def percentile_linear(values: list[float], q: float) -> float:
    """Percentile with linear interpolation between closest ranks."""
    s = sorted(values)
    if len(s) == 1:
        return s[0]
    rank = (len(s) - 1) * (q / 100.0)
    lo = int(np.floor(rank))
    frac = rank - lo
    if frac == 0:
        return s[lo]
    return s[lo] + frac * (s[lo + 1] - s[lo])


def _median(values: list[float]) -> float:
    s = sorted(values)
    mid = len(s) // 2
    if len(s) % 2 == 1:
        return s[mid]
    return (s[mid - 1] + s[mid]) / 2.0


def _usable(box: Box2D | None, conf: float | None) -> bool:
    if box is None:
        return False
    if box.w < MIN_BOX_SIDE or box.h < MIN_BOX_SIDE:
        return False
    if conf is not None and conf < MIN_CONFIDENCE:
        return False
    return True


def _valid_bodies(track: DetectionTrack) -> list[DetectionEntry]:
    image_area = track.image_w * track.image_h
    out = []
    for e in track.entries:
        if not _usable(e.body, e.body_conf):
            continue
        if e.body.area >= FULL_FRAME_AREA_FRACTION * image_area:
            continue
        out.append(e)
    return out


def _aggregate(centers_x, centers_y, widths, heights, cfg: RoiConfig, w_img, h_img) -> Box2D:
    box = Box2D(0, 0, percentile_linear(widths, 75), percentile_linear(heights, 75))
    box = box.recentered(_median(centers_x), _median(centers_y))
    box = box.scaled_about_center(cfg.enlarge)
    return box.clamped(w_img, h_img)


def aggregate_body_roi(track: DetectionTrack, cfg: RoiConfig) -> Box2D:
    """One representative body box: median center, P75 sides, enlarge, clamp.

    Entries without a usable body detection (missing, tiny, low-confidence,
    or near-full-frame) are excluded; with none left, the full frame is the
    fallback.
    """
    if not track.entries:
        raise ManifestError("detection track is empty")
    valid = _valid_bodies(track)
    if not valid:
        return Box2D(0.0, 0.0, float(track.image_w), float(track.image_h))
    bodies = [e.body for e in valid]
    return _aggregate(
        [b.center[0] for b in bodies],
        [b.center[1] for b in bodies],
        [b.w for b in bodies],
        [b.h for b in bodies],
        cfg,
        track.image_w,
        track.image_h,
    )


def chest_center(body: Box2D, face: Box2D | None, alpha: float) -> tuple[float, float]:
    """Body center nudged toward the face along the body's longer axis only.

    A missing face leaves the center unmoved (the face substitutes for the
    body center).
    """
    if body.w <= 0 or body.h <= 0:
        raise DegenerateBoxError(f"degenerate body box {body}")
    bx, by = body.center
    fx, fy = body.center if face is None else face.center
    if body.w >= body.h:
        return (bx + alpha * (fx - bx), by)
    return (bx, by + alpha * (fy - by))


def _chest_square(entry: DetectionEntry, alpha: float) -> Box2D:
    body = entry.body
    face = entry.face if _usable(entry.face, entry.face_conf) else None
    side = min(body.w, body.h)
    cx, cy = chest_center(body, face, alpha)
    # translate minimally so the square sits inside the body box; the side
    # equals the body's short side, so it always fits
    x = min(max(cx - side / 2.0, body.x), body.x + body.w - side)
    y = min(max(cy - side / 2.0, body.y), body.y + body.h - side)
    return Box2D(x, y, side, side)


def aggregate_chest_roi(track: DetectionTrack, cfg: RoiConfig) -> Box2D:
    """Square chest box: per-frame face-aware squares, aggregated like the body.

    With no usable body detections the fallback is a centered square of side
    min(W, H).
    """
    if not track.entries:
        raise ManifestError("detection track is empty")
    valid = _valid_bodies(track)
    if not valid:
        side = float(min(track.image_w, track.image_h))
        return Box2D((track.image_w - side) / 2.0, (track.image_h - side) / 2.0, side, side)
    squares = [_chest_square(e, cfg.alpha) for e in valid]
    sides = [s.w for s in squares]
    box = Box2D(0, 0, percentile_linear(sides, 75), percentile_linear(sides, 75))
    box = box.recentered(_median([s.center[0] for s in squares]), _median([s.center[1] for s in squares]))
    box = box.scaled_about_center(cfg.enlarge)
    return box.clamped(track.image_w, track.image_h)


def select_roi(track: DetectionTrack, cfg: RoiConfig) -> Box2D:
    """Dispatch on the configured mode; ``none`` means the full frame."""
    if cfg.mode == "body":
        return aggregate_body_roi(track, cfg)
    if cfg.mode == "chest":
        return aggregate_chest_roi(track, cfg)
    return Box2D(0.0, 0.0, float(track.image_w), float(track.image_h))
