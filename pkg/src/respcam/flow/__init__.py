"""Dense motion between consecutive ROI crops.

Two flow engines (polynomial-expansion and TV-L1) plus the no-flow RGB
frame-difference ablation. Raw fields carry (u, v) in pixels/frame and a
magnitude channel; sequence-level helpers crop, optionally resample, and
standardize each channel to zero mean and unit variance over the clip.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..core import LUMA_WEIGHTS, Box2D, FrameSequence, crop_clamped, resample_fps
from ..errors import ConfigurationError, FormatError, RespcamError
from ._farneback import farneback as _farneback_impl
from ._tvl1 import tvl1 as _tvl1_impl

FLOW_DUMP_MAGIC = b"RSPFLW01"

#: Standard deviations below this leave a channel at zero instead of
#: amplifying numerical noise.
ZERO_VARIANCE_GUARD = 1e-12

ALGORITHMS = ("farneback", "tvl1", "frame_diff")


@dataclass(frozen=True)
class FlowField:
    """Per-pixel displacement (u, v) and its magnitude for one frame pair."""

    u: np.ndarray
    v: np.ndarray
    m: np.ndarray
    diagnostics: dict | None = None

    def __post_init__(self):
        if self.u.shape != self.v.shape or self.u.shape != self.m.shape:
            raise FormatError("flow channels must share one shape")
        for name, ch in (("u", self.u), ("v", self.v), ("m", self.m)):
            if not np.all(np.isfinite(ch)):
                raise FormatError(f"non-finite values in flow channel {name}")

    @classmethod
    def from_uv(cls, u: np.ndarray, v: np.ndarray, diagnostics: dict | None = None) -> "FlowField":
        return cls(u=u, v=v, m=np.hypot(u, v), diagnostics=diagnostics)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape


@dataclass(frozen=True)
class FlowConfig:
    """Engine selection and solver parameters.

    ``iterations_per_level`` defaults per algorithm when left unset: 3
    refinement passes for farneback, 30 fixed-point iterations per warp for
    tvl1. ``target_fps`` triggers nearest-timestamp resampling before flow.
    """

    algorithm: str = "farneback"
    pyramid_levels: int = 3
    pyramid_scale: float = 0.5
    iterations_per_level: int | None = None
    tvl1_lambda: float = 0.15
    tvl1_theta: float = 0.3
    tvl1_tau: float = 0.125
    tvl1_warps: int = 5
    farneback_poly_n: int = 5
    farneback_window: int = 13
    target_fps: float | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown flow algorithm {self.algorithm!r}")
        if self.pyramid_levels < 1:
            raise ConfigurationError("pyramid_levels must be >= 1")
        if not 0 < self.pyramid_scale < 1:
            raise ConfigurationError("pyramid_scale must lie in (0, 1)")
        if self.iterations_per_level is not None and self.iterations_per_level < 1:
            raise ConfigurationError("iterations_per_level must be >= 1")
        if self.tvl1_lambda <= 0 or self.tvl1_theta <= 0:
            raise ConfigurationError("tvl1_lambda and tvl1_theta must be positive")
        if not 0 < self.tvl1_tau <= 0.125:
            raise ConfigurationError("tvl1_tau must lie in (0, 0.125]")
        if self.tvl1_warps < 1:
            raise ConfigurationError("tvl1_warps must be >= 1")
        if self.farneback_poly_n < 3 or self.farneback_poly_n % 2 == 0:
            raise ConfigurationError("farneback_poly_n must be an odd integer >= 3")
        if self.farneback_window < 3:
            raise ConfigurationError("farneback_window must be >= 3")
        if self.target_fps is not None and self.target_fps <= 0:
            raise ConfigurationError("target_fps must be positive")

    @property
    def iterations(self) -> int:
        if self.iterations_per_level is not None:
            return self.iterations_per_level
        return 30 if self.algorithm == "tvl1" else 3


def _as_luma(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        return arr @ LUMA_WEIGHTS
    if arr.ndim != 2:
        raise FormatError(f"expected a 2D or 3-channel image, got shape {arr.shape}")
    return arr


def _check_pair(prev: np.ndarray, next_: np.ndarray) -> None:
    if prev.shape != next_.shape:
        raise FormatError(f"frame shapes differ: {prev.shape} vs {next_.shape}")


def farneback_flow(prev: np.ndarray, next_: np.ndarray, cfg: FlowConfig) -> FlowField:
    """Polynomial-expansion flow between two frames (luminance taken here)."""
    _check_pair(prev, next_)
    p, n = _as_luma(prev), _as_luma(next_)
    if min(p.shape) < cfg.farneback_poly_n:
        raise ConfigurationError(
            f"image {p.shape} smaller than poly_n={cfg.farneback_poly_n}"
        )
    u, v = _farneback_impl(
        p, n,
        levels=cfg.pyramid_levels,
        scale=cfg.pyramid_scale,
        iterations=cfg.iterations,
        poly_n=cfg.farneback_poly_n,
        winsize=cfg.farneback_window,
    )
    return FlowField.from_uv(u, v)


def tvl1_flow(prev: np.ndarray, next_: np.ndarray, cfg: FlowConfig) -> FlowField:
    """TV-L1 flow between two frames; diagnostics carry the finest-level
    per-warp primal energies (non-increasing by construction)."""
    _check_pair(prev, next_)
    p, n = _as_luma(prev), _as_luma(next_)
    if min(p.shape) < cfg.farneback_poly_n:
        raise ConfigurationError(f"image {p.shape} too small for flow")
    u, v, energies = _tvl1_impl(
        p, n,
        levels=cfg.pyramid_levels,
        scale=cfg.pyramid_scale,
        lam=cfg.tvl1_lambda,
        theta=cfg.tvl1_theta,
        tau=cfg.tvl1_tau,
        warps=cfg.tvl1_warps,
        inner_iterations=cfg.iterations,
    )
    trace = [float(e) for e in energies if np.isfinite(e)]
    return FlowField.from_uv(u, v, diagnostics={"energy_per_warp": trace})


def frame_diff(prev: np.ndarray, next_: np.ndarray) -> np.ndarray:
    """Signed per-channel difference next - prev for 3-channel frames."""
    p = np.asarray(prev, dtype=np.float64)
    n = np.asarray(next_, dtype=np.float64)
    _check_pair(p, n)
    if p.ndim != 3 or p.shape[2] != 3:
        raise FormatError(f"frame_diff needs 3-channel frames, got shape {p.shape}")
    return n - p


def compute_flow(prev: np.ndarray, next_: np.ndarray, cfg: FlowConfig) -> FlowField:
    if cfg.algorithm == "farneback":
        return farneback_flow(prev, next_, cfg)
    if cfg.algorithm == "tvl1":
        return tvl1_flow(prev, next_, cfg)
    raise ConfigurationError(f"algorithm {cfg.algorithm!r} does not produce flow fields")


def flow_pairs(frames: np.ndarray, cfg: FlowConfig) -> list[FlowField]:
    """Raw flow for each consecutive pair of a (T, H, W[, 3]) frame stack."""
    fields = []
    for i in range(len(frames) - 1):
        try:
            fields.append(compute_flow(frames[i], frames[i + 1], cfg))
        except RespcamError as e:
            raise type(e)(f"frame pair ({i}, {i + 1}): {e}") from e
    return fields


def standardize_fields(fields: list[FlowField]) -> list[FlowField]:
    """Standardize flow channels over the clip: zero mean per channel, one
    shared scale for all three.

    The scale is the pooled standard deviation of u and v, so the
    displacement field keeps its direction and aspect (dividing u and v by
    their own variances would whiten the field and erase the dominant
    motion axis). Channels of a motionless clip come out identically zero.
    The magnitude channel is shifted and scaled like the others, so it no
    longer equals sqrt(u^2 + v^2) afterwards.
    """
    if not fields:
        return fields
    u = np.stack([f.u for f in fields])
    v = np.stack([f.v for f in fields])
    m = np.stack([f.m for f in fields])
    scale = np.sqrt((u.var() + v.var()) / 2.0)
    if scale <= ZERO_VARIANCE_GUARD:
        scale = 1.0
    u = (u - u.mean()) / scale
    v = (v - v.mean()) / scale
    m = (m - m.mean()) / scale
    return [
        FlowField(u=u[i], v=v[i], m=m[i], diagnostics=fields[i].diagnostics)
        for i in range(len(fields))
    ]


def flow_sequence(seq: FrameSequence, roi: Box2D, cfg: FlowConfig) -> list[FlowField]:
    """Standardized flow over all consecutive ROI crops of a clip."""
    if cfg.target_fps is not None:
        seq = resample_fps(seq, cfg.target_fps)
    crops = np.stack([crop_clamped(f, roi) for f in seq.frames])
    return standardize_fields(flow_pairs(crops, cfg))


def diff_pairs(frames: np.ndarray) -> list[np.ndarray]:
    """RGB frame differences for each consecutive pair (no-flow ablation)."""
    return [frame_diff(frames[i], frames[i + 1]) for i in range(len(frames) - 1)]


def write_flow_dump(path: str | Path, fields: list[FlowField]) -> None:
    """Binary dump: magic, int32 LE [T-1, H, W, 3], float32 LE (u, v, m)."""
    if not fields:
        raise FormatError("cannot dump an empty flow sequence")
    h, w = fields[0].shape
    with open(path, "wb") as fh:
        fh.write(FLOW_DUMP_MAGIC)
        fh.write(struct.pack("<4i", len(fields), h, w, 3))
        for f in fields:
            np.stack([f.u, f.v, f.m], axis=-1).astype("<f4").tofile(fh)


def read_flow_dump(path: str | Path) -> np.ndarray:
    """Read a flow dump back as a (T-1, H, W, 3) float32 array."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != FLOW_DUMP_MAGIC:
            raise FormatError(f"bad flow dump magic {magic!r}")
        n, h, w, c = struct.unpack("<4i", fh.read(16))
        if c != 3:
            raise FormatError(f"flow dump channel count {c} != 3")
        data = np.fromfile(fh, dtype="<f4", count=n * h * w * 3)
    if data.size != n * h * w * 3:
        raise FormatError("flow dump truncated")
    return data.reshape(n, h, w, 3)
