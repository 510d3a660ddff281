"""Dataset manifests: which clips exist, where their files live."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..core import ClipRef
from ..errors import ManifestError
from ..signal import Band

SLEEPING_POSITIONS = ("supine", "side", "prone")


@dataclass(frozen=True)
class ManifestClip:
    ref: ClipRef
    frames: Path
    detections: Path
    annotations: Path
    sleeping_position: str = "supine"
    band: Band | None = None

    def __post_init__(self):
        if self.sleeping_position not in SLEEPING_POSITIONS:
            raise ManifestError(f"unknown sleeping position {self.sleeping_position!r}")


@dataclass(frozen=True)
class DatasetManifest:
    clips: tuple[ManifestClip, ...]

    def __post_init__(self):
        keys = [(c.ref.subject_id, c.ref.clip_id) for c in self.clips]
        if len(set(keys)) != len(keys):
            raise ManifestError("duplicate (subject_id, clip_id) pairs in manifest")

    def subjects(self) -> list[str]:
        return sorted({c.ref.subject_id for c in self.clips})

    def by_subject(self, subject_id: str) -> list[ManifestClip]:
        clips = [c for c in self.clips if c.ref.subject_id == subject_id]
        return sorted(clips, key=lambda c: c.ref.clip_id)

    def restrict_subjects(self, keep: set[str]) -> "DatasetManifest":
        """Subset view, e.g. for training-set-size style studies."""
        return DatasetManifest(clips=tuple(c for c in self.clips if c.ref.subject_id in keep))


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest JSON; relative paths resolve against its directory.

    Every referenced path must exist at load time.
    """
    path = Path(path)
    base = path.parent
    data = json.loads(path.read_text())
    if "clips" not in data:
        raise ManifestError(f"{path} lacks a 'clips' array")
    clips = []
    for raw in data["clips"]:
        for key in ("subject_id", "clip_id", "fps", "color_mode", "frames", "detections", "annotations"):
            if key not in raw:
                raise ManifestError(f"manifest clip entry lacks required field {key!r}")
        band = raw.get("band")
        clip = ManifestClip(
            ref=ClipRef(
                subject_id=raw["subject_id"],
                clip_id=raw["clip_id"],
                fps=float(raw["fps"]),
                color_mode=raw["color_mode"],
            ),
            frames=(base / raw["frames"]).resolve(),
            detections=(base / raw["detections"]).resolve(),
            annotations=(base / raw["annotations"]).resolve(),
            sleeping_position=raw.get("sleeping_position", "supine"),
            band=None if band is None else Band(lo=float(band[0]), hi=float(band[1])),
        )
        for p in (clip.frames, clip.detections, clip.annotations):
            if not p.exists():
                raise ManifestError(f"manifest references missing path {p}")
        clips.append(clip)
    return DatasetManifest(clips=tuple(clips))


def write_manifest(path: str | Path, manifest: DatasetManifest) -> None:
    path = Path(path)
    data = {
        "clips": [
            {
                "subject_id": c.ref.subject_id,
                "clip_id": c.ref.clip_id,
                "fps": c.ref.fps,
                "color_mode": c.ref.color_mode,
                "frames": str(c.frames),
                "detections": str(c.detections),
                "annotations": str(c.annotations),
                "sleeping_position": c.sleeping_position,
                "band": None if c.band is None else [c.band.lo, c.band.hi],
            }
            for c in manifest.clips
        ]
    }
    path.write_text(json.dumps(data, indent=2))
