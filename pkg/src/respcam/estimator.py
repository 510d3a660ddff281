"""End-to-end respiration estimation for one clip.

The pipeline mirrors the benchmark design: ROI selection, cropping, optional
resampling, dense motion (or frame differences), channel composition, a
pluggable waveform predictor, then the standard post-processing chain
(undo differencing, detrend, band-pass, peak detection, rate).

The built-in predictor is classical: it projects the standardized flow onto
the clip's dominant motion axis and takes a magnitude-weighted spatial mean
per frame pair. Neural back-ends can be registered without touching the
pre/post-processing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import LUMA_WEIGHTS, Box2D, FrameSequence, crop_clamped, resample_fps
from .errors import ConfigurationError, FormatError, ManifestError, NoRateError, RespcamError
from .flow import FlowConfig, FlowField, ZERO_VARIANCE_GUARD, diff_pairs, flow_pairs, standardize_fields
from .roi import DetectionTrack, RoiConfig, select_roi
from .signal import (
    Band,
    PeakList,
    SpectralConfig,
    Waveform,
    butter_bandpass_filtfilt,
    detect_peaks,
    detrend,
    rate_from_peaks,
    waveform_from_peaks,
)

CHANNEL_MODES = ("flow3", "flow6", "diff6")

#: Default chunk length (frames) when chunked prediction is enabled.
DEFAULT_CHUNK_LEN = 180


@dataclass(frozen=True)
class ChannelTensor:
    """Per-pair stacked channels: (T-1, h, w, C) with C of 3 or 6."""

    data: np.ndarray
    mode: str

    def __post_init__(self):
        if self.mode not in CHANNEL_MODES:
            raise ConfigurationError(f"unknown channel mode {self.mode!r}")
        expected = 3 if self.mode == "flow3" else 6
        if self.data.ndim != 4 or self.data.shape[3] != expected:
            raise FormatError(
                f"mode {self.mode} wants (T-1, h, w, {expected}), got {self.data.shape}"
            )

    def __len__(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the estimator needs, in one immutable bundle."""

    roi: RoiConfig = RoiConfig()
    flow: FlowConfig = FlowConfig()
    channel_mode: str = "flow3"
    spectral: SpectralConfig = SpectralConfig()
    sigma: float = 4.0
    detrend_lambda: float = 100.0
    predictor: str = "motion_aggregation"
    chunk_len: int | None = None

    def __post_init__(self):
        if self.channel_mode not in CHANNEL_MODES:
            raise ConfigurationError(f"unknown channel mode {self.channel_mode!r}")
        uses_diff = self.flow.algorithm == "frame_diff"
        if self.channel_mode == "diff6" and not uses_diff:
            raise ConfigurationError("channel mode diff6 requires the frame_diff algorithm")
        if self.channel_mode != "diff6" and uses_diff:
            raise ConfigurationError(f"channel mode {self.channel_mode} requires a flow algorithm")
        if self.sigma <= 0:
            raise ConfigurationError("sigma must be positive")
        if self.detrend_lambda <= 0:
            raise ConfigurationError("detrend_lambda must be positive")
        if self.chunk_len is not None and self.chunk_len < 2:
            raise ConfigurationError("chunk_len must be >= 2")

    @property
    def band(self) -> Band:
        return self.spectral.band


@dataclass(frozen=True)
class PredictedSignal:
    """Predictor output; ``differenced`` asks for a cumulative sum before
    detrending."""

    waveform: Waveform
    differenced: bool


PredictorFn = Callable[[ChannelTensor, float], PredictedSignal]

_PREDICTORS: dict[str, PredictorFn] = {}


def register_predictor(name: str):
    def deco(fn: PredictorFn) -> PredictorFn:
        _PREDICTORS[name] = fn
        return fn
    return deco


def get_predictor(name: str) -> PredictorFn:
    try:
        return _PREDICTORS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown predictor {name!r}; registered: {sorted(_PREDICTORS)}"
        ) from None


def _standardize(arr: np.ndarray, axes) -> np.ndarray:
    mean = arr.mean(axis=axes, keepdims=True)
    std = arr.std(axis=axes, keepdims=True)
    return (arr - mean) / np.where(std <= ZERO_VARIANCE_GUARD, 1.0, std)


def compose_channels(flows: list[FlowField] | None, crops: np.ndarray, mode: str) -> ChannelTensor:
    """Stack motion (flow or difference) and appearance channels per Eq.-style
    modes: flow3 = (u, v, m); flow6 = flow + appearance; diff6 = RGB
    difference + appearance. Appearance and differences are standardized per
    clip per channel; flow arrives already standardized."""
    if mode not in CHANNEL_MODES:
        raise ConfigurationError(f"unknown channel mode {mode!r}")
    crops = np.asarray(crops, dtype=np.float64)
    if crops.ndim == 3:
        crops = np.repeat(crops[..., None], 3, axis=3)

    if mode in ("flow3", "flow6"):
        if flows is None:
            raise FormatError(f"mode {mode} requires flow fields")
        if len(flows) != len(crops) - 1:
            raise FormatError(f"{len(flows)} flow fields vs {len(crops)} crops")
        motion = np.stack([np.stack([f.u, f.v, f.m], axis=-1) for f in flows])
        if motion.shape[1:3] != crops.shape[1:3]:
            raise FormatError(
                f"flow fields {motion.shape[1:3]} do not match crops {crops.shape[1:3]}"
            )
        if mode == "flow3":
            return ChannelTensor(data=motion, mode=mode)
        appearance = _standardize(crops[:-1], axes=(0, 1, 2))
        return ChannelTensor(data=np.concatenate([motion, appearance], axis=-1), mode=mode)

    diffs = _standardize(np.stack(diff_pairs(crops)), axes=(0, 1, 2))
    appearance = _standardize(crops[:-1], axes=(0, 1, 2))
    return ChannelTensor(data=np.concatenate([diffs, appearance], axis=-1), mode=mode)


@register_predictor("motion_aggregation")
def motion_respiration_signal(tensor: ChannelTensor, fs: float) -> PredictedSignal:
    """Scalar motion signal per frame pair from the dominant flow axis.

    Flow modes: each pixel is weighted by its mean motion magnitude over the
    clip (a static saliency map, so the per-frame value stays linear in the
    instantaneous flow and pixel noise cannot rectify into the band), the
    weighted spatial mean vector is taken per frame pair, and those vectors
    are projected onto the principal axis of their covariance. Projection is
    linear, so this equals the magnitude-weighted average of per-pixel
    projections. The axis sign is fixed so the first nonzero frame value is
    positive, making the output deterministic.
    Difference mode: spatial mean of the difference-channel luminance.
    The result varies frame to frame, so it is flagged as differenced.
    """
    data = tensor.data
    if tensor.mode in ("flow3", "flow6"):
        u = data[..., 0]
        v = data[..., 1]
        weight = np.hypot(u, v).mean(axis=0)
        wsum = weight.sum()
        safe = wsum if wsum > 0 else 1.0
        mean_u = (weight * u).sum(axis=(1, 2)) / safe
        mean_v = (weight * v).sum(axis=(1, 2)) / safe
        cu = mean_u - mean_u.mean()
        cv = mean_v - mean_v.mean()
        muu = float(np.sum(cu * cu))
        mvv = float(np.sum(cv * cv))
        muv = float(np.sum(cu * cv))
        angle = 0.5 * np.arctan2(2.0 * muv, muu - mvv)
        ex, ey = np.cos(angle), np.sin(angle)
        values = cu * ex + cv * ey
    else:
        values = (data[..., :3] @ LUMA_WEIGHTS).mean(axis=(1, 2))

    nonzero = np.flatnonzero(np.abs(values) > 1e-12)
    if nonzero.size and values[nonzero[0]] < 0:
        values = -values
    return PredictedSignal(waveform=Waveform(samples=values, fs=fs), differenced=True)


def postprocess(wave: Waveform, band: Band, detrend_lambda: float, differenced: bool,
                ) -> tuple[Waveform, PeakList, float]:
    """Shared truth/prediction path: (undo differencing,) detrend, band-pass,
    peaks, rate. Returns the filtered waveform, peaks, and BPM."""
    if differenced:
        wave = Waveform(samples=np.cumsum(wave.samples), fs=wave.fs)
    wave = detrend(wave, detrend_lambda)
    wave = butter_bandpass_filtfilt(wave, band)
    peaks = detect_peaks(wave, band)
    return wave, peaks, rate_from_peaks(peaks)


@dataclass(frozen=True)
class EstimateResult:
    waveform: Waveform
    bpm: float
    n_peaks: int
    roi: Box2D
    flow_fields: list[FlowField] = field(repr=False, default_factory=list)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except RespcamError as e:
        if e.stage is None:
            e.stage = name
        raise


def _predict(tensor: ChannelTensor, fs: float, cfg: PipelineConfig) -> PredictedSignal:
    predictor = get_predictor(cfg.predictor)
    if cfg.chunk_len is None or len(tensor) <= cfg.chunk_len:
        return predictor(tensor, fs)
    pieces = []
    differenced = True
    for start in range(0, len(tensor), cfg.chunk_len):
        chunk = ChannelTensor(data=tensor.data[start:start + cfg.chunk_len], mode=tensor.mode)
        if len(chunk.data) < 2:
            break
        out = predictor(chunk, fs)
        differenced = out.differenced
        pieces.append(out.waveform.samples)
    return PredictedSignal(
        waveform=Waveform(samples=np.concatenate(pieces), fs=fs), differenced=differenced
    )


def estimate(clip: FrameSequence, detections: DetectionTrack, cfg: PipelineConfig,
             annotations: PeakList | None = None, band: Band | None = None,
             keep_flow: bool = False) -> EstimateResult:
    """Run the full pipeline on one clip and return waveform plus rate.

    ``band`` overrides the configured band-pass edges (per-subject bounds).
    Raises NoRateError when fewer than two peaks survive post-processing;
    other pipeline errors propagate with a ``stage`` attribute attached.
    With the ``loopback`` predictor the waveform is synthesized straight
    from ``annotations``, which must then be provided.
    """
    band = band or cfg.band
    if detections.entries and detections.entries[-1].frame != len(clip) - 1:
        raise ManifestError(
            f"detection track ends at frame {detections.entries[-1].frame}, "
            f"clip has {len(clip)} frames"
        )

    if cfg.predictor == "loopback":
        if annotations is None:
            raise ConfigurationError("loopback prediction requires annotations")
        wave = _stage(
            "loopback", waveform_from_peaks, annotations, clip.fps, cfg.sigma, clip.duration
        )
        predicted = PredictedSignal(waveform=wave, differenced=False)
        roi_box = Box2D(0.0, 0.0, float(clip.width), float(clip.height))
        fields: list[FlowField] = []
    else:
        roi_box = _stage("roi", select_roi, detections, cfg.roi)
        seq = clip
        if cfg.flow.target_fps is not None:
            seq = _stage("resample", resample_fps, seq, cfg.flow.target_fps)
        crops = np.stack([crop_clamped(f, roi_box) for f in seq.rgb()])
        if cfg.channel_mode == "diff6":
            fields = []
            tensor = _stage("channels", compose_channels, None, crops, cfg.channel_mode)
        else:
            luma = crops @ LUMA_WEIGHTS
            fields = _stage("flow", flow_pairs, luma, cfg.flow)
            fields = standardize_fields(fields)
            tensor = _stage("channels", compose_channels, fields, crops, cfg.channel_mode)
        predicted = _stage("predictor", _predict, tensor, seq.fps, cfg)
        if not keep_flow:
            fields = []

    wave, peaks, bpm = _stage(
        "postprocess", postprocess, predicted.waveform, band, cfg.detrend_lambda,
        predicted.differenced,
    )
    return EstimateResult(waveform=wave, bpm=bpm, n_peaks=len(peaks), roi=roi_box,
                          flow_fields=fields)


@dataclass(frozen=True)
class RateRecord:
    """CLI/service-facing outcome for one clip, rate-JSON shaped."""

    clip_id: str
    subject_id: str
    bpm: float | None
    n_peaks: int
    stage_errors: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "subject_id": self.subject_id,
            "bpm": self.bpm,
            "n_peaks": self.n_peaks,
            "stage_errors": list(self.stage_errors),
        }


def estimate_record(clip: FrameSequence, detections: DetectionTrack, cfg: PipelineConfig,
                    subject_id: str = "", clip_id: str = "",
                    annotations: PeakList | None = None, band: Band | None = None,
                    ) -> tuple[RateRecord, Waveform | None]:
    """estimate() with no-rate failures folded into the record."""
    try:
        result = estimate(clip, detections, cfg, annotations=annotations, band=band)
    except NoRateError as e:
        record = RateRecord(
            clip_id=clip_id, subject_id=subject_id, bpm=None, n_peaks=0,
            stage_errors=(f"{e.stage or 'peaks'}: {e}",),
        )
        return record, None
    record = RateRecord(
        clip_id=clip_id, subject_id=subject_id, bpm=result.bpm, n_peaks=result.n_peaks
    )
    return record, result.waveform
