"""Frame sequences, boxes, and clip identity.

Frames live on disk as directories of lossless images (``frame_%06d.png``
for RGB, ``.pgm`` for IR) with a ``meta.json`` carrying the frame rate and
color mode. All types are immutable after construction; operations are pure
functions, safe to share across parallel workers.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    ConfigurationError,
    DegenerateBoxError,
    FormatError,
    InsufficientDataError,
)

META_FILENAME = "meta.json"
_FRAME_RE = re.compile(r"^frame_\d{6}\.(png|pgm)$")

#: Rec. 601 luma weights, used wherever RGB is reduced to one channel.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def round_half_up(v: float) -> int:
    """Round to nearest integer with exact halves going up (not banker's)."""
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned box with real-valued top-left corner and extents."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise DegenerateBoxError(f"negative box extent: w={self.w}, h={self.h}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def recentered(self, cx: float, cy: float) -> "Box2D":
        return Box2D(cx - self.w / 2.0, cy - self.h / 2.0, self.w, self.h)

    def scaled_about_center(self, k: float) -> "Box2D":
        cx, cy = self.center
        return Box2D(cx - k * self.w / 2.0, cy - k * self.h / 2.0, k * self.w, k * self.h)

    def clamped(self, image_w: float, image_h: float) -> "Box2D":
        """Intersect with the image rectangle ``[0, W] x [0, H]``."""
        x0 = min(max(self.x, 0.0), image_w)
        y0 = min(max(self.y, 0.0), image_h)
        x1 = min(max(self.x + self.w, 0.0), image_w)
        y1 = min(max(self.y + self.h, 0.0), image_h)
        return Box2D(x0, y0, max(x1 - x0, 0.0), max(y1 - y0, 0.0))

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class ClipRef:
    """Identity of one clip inside a dataset."""

    subject_id: str
    clip_id: str
    fps: float
    color_mode: str = "rgb"

    def __post_init__(self):
        if not self.subject_id or not self.clip_id:
            raise ConfigurationError("subject_id and clip_id must be non-empty")
        if self.fps <= 0:
            raise ConfigurationError(f"fps must be positive, got {self.fps}")
        if self.color_mode not in ("rgb", "ir"):
            raise ConfigurationError(f"unknown color_mode {self.color_mode!r}")


@dataclass(frozen=True)
class FrameSequence:
    """Ordered stack of equally sized frames plus the capture rate.

    ``frames`` has shape (T, H, W) for IR-mono clips or (T, H, W, 3) for RGB,
    dtype uint8.
    """

    frames: np.ndarray = field(repr=False)
    fps: float
    color_mode: str = "rgb"

    def __post_init__(self):
        if self.fps <= 0:
            raise ConfigurationError(f"fps must be positive, got {self.fps}")
        if self.frames.ndim not in (3, 4):
            raise FormatError(f"frames must be (T,H,W) or (T,H,W,3), got shape {self.frames.shape}")
        if self.frames.ndim == 4 and self.frames.shape[3] != 3:
            raise FormatError(f"color frames must have 3 channels, got {self.frames.shape[3]}")
        if len(self.frames) < 2:
            raise InsufficientDataError(f"a clip needs at least 2 frames, got {len(self.frames)}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def duration(self) -> float:
        return len(self.frames) / self.fps

    def rgb(self) -> np.ndarray:
        """Frames as (T, H, W, 3) float64, mono replicated across channels."""
        f = self.frames.astype(np.float64)
        if f.ndim == 3:
            f = np.repeat(f[..., None], 3, axis=3)
        return f

    def luma(self) -> np.ndarray:
        """Frames as (T, H, W) float64 luminance (Rec. 601 for color)."""
        f = self.frames.astype(np.float64)
        if f.ndim == 3:
            return f
        return f @ LUMA_WEIGHTS


def load_frames(dir_path: str | Path) -> FrameSequence:
    """Load a frame directory (``frame_%06d.png``/``.pgm`` + ``meta.json``).

    Frames are ordered by filename, never by filesystem order, so loading is
    deterministic for a fixed directory.
    """
    dir_path = Path(dir_path)
    meta_path = dir_path / META_FILENAME
    if not meta_path.is_file():
        raise ConfigurationError(f"missing {META_FILENAME} in {dir_path}")
    meta = json.loads(meta_path.read_text())
    for key in ("fps", "color_mode"):
        if key not in meta:
            raise ConfigurationError(f"{meta_path} lacks required field {key!r}")

    names = sorted(p.name for p in dir_path.iterdir() if _FRAME_RE.match(p.name))
    if len(names) < 2:
        raise InsufficientDataError(f"{dir_path} holds {len(names)} frames; need at least 2")

    frames = []
    shape = None
    for name in names:
        arr = np.asarray(Image.open(dir_path / name))
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise FormatError(f"{name} has shape {arr.shape}, expected {shape}")
        frames.append(arr)
    stack = np.stack(frames)
    if stack.dtype != np.uint8:
        raise FormatError(f"frames must be 8-bit, got dtype {stack.dtype}")
    return FrameSequence(frames=stack, fps=float(meta["fps"]), color_mode=meta["color_mode"])


def clip_ref_from_meta(dir_path: str | Path) -> ClipRef:
    """Read the clip identity recorded in a frame directory's metadata."""
    meta = json.loads((Path(dir_path) / META_FILENAME).read_text())
    return ClipRef(
        subject_id=meta.get("subject_id", ""),
        clip_id=meta.get("clip_id", ""),
        fps=float(meta["fps"]),
        color_mode=meta["color_mode"],
    )


def write_frames(dir_path: str | Path, seq: FrameSequence, ref: ClipRef) -> Path:
    """Write a FrameSequence in the on-disk layout that load_frames reads."""
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    ext = "pgm" if seq.color_mode == "ir" else "png"
    for i, frame in enumerate(seq.frames):
        Image.fromarray(frame).save(dir_path / f"frame_{i:06d}.{ext}")
    meta = {
        "fps": seq.fps,
        "color_mode": seq.color_mode,
        "subject_id": ref.subject_id,
        "clip_id": ref.clip_id,
    }
    (dir_path / META_FILENAME).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return dir_path


def crop_clamped(frame: np.ndarray, box: Box2D) -> np.ndarray:
    """Crop ``box`` out of ``frame``, zero-padding any out-of-bounds region.

    The box is rasterized here (round-half-up) and nowhere else, so the
    fractional coordinates produced by ROI aggregation survive unrounded up
    to this point. The output always has dimensions round(h) x round(w).
    """
    ox, oy = round_half_up(box.x), round_half_up(box.y)
    ow, oh = round_half_up(box.w), round_half_up(box.h)
    if ow < 1 or oh < 1:
        raise DegenerateBoxError(f"crop box rasterizes to {ow}x{oh}")
    out_shape = (oh, ow) + frame.shape[2:]
    out = np.zeros(out_shape, dtype=frame.dtype)
    src_y0, src_y1 = max(oy, 0), min(oy + oh, frame.shape[0])
    src_x0, src_x1 = max(ox, 0), min(ox + ow, frame.shape[1])
    if src_y1 > src_y0 and src_x1 > src_x0:
        out[src_y0 - oy:src_y1 - oy, src_x0 - ox:src_x1 - ox] = frame[src_y0:src_y1, src_x0:src_x1]
    return out


def resample_fps(seq: FrameSequence, target_fps: float) -> FrameSequence:
    """Resample to ``target_fps`` by nearest-timestamp frame selection.

    No interpolation: each output sample takes the source frame whose
    timestamp is closest to the output grid point. Output length is
    round(T * target/source), floored at 2. Idempotent at the same rate.
    """
    if target_fps <= 0:
        raise ConfigurationError(f"target_fps must be positive, got {target_fps}")
    if target_fps == seq.fps:
        return seq
    n_in = len(seq)
    n_out = max(2, round_half_up(n_in * target_fps / seq.fps))
    ratio = seq.fps / target_fps
    idx = np.array([min(round_half_up(j * ratio), n_in - 1) for j in range(n_out)])
    return FrameSequence(frames=seq.frames[idx], fps=target_fps, color_mode=seq.color_mode)
