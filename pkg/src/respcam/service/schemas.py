"""Pydantic request/response models for the HTTP API.

These mirror the core config dataclasses; the library itself stays
pydantic-free and validation errors surface as 422 responses.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

from ..estimator import PipelineConfig
from ..flow import FlowConfig
from ..roi import RoiConfig
from ..signal import Band, SpectralConfig


class BandModel(BaseModel):
    lo: float = 0.3
    hi: float = 1.0

    def to_band(self) -> Band:
        return Band(lo=self.lo, hi=self.hi)


class RoiConfigModel(BaseModel):
    mode: Literal["none", "body", "chest"] = "body"
    alpha: float = 0.5
    enlarge: float = 1.0


class FlowConfigModel(BaseModel):
    algorithm: Literal["farneback", "tvl1", "frame_diff"] = "farneback"
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


class SpectralConfigModel(BaseModel):
    band: BandModel = BandModel()
    epsilon: float = 1e-8


class PipelineConfigModel(BaseModel):
    roi: RoiConfigModel = RoiConfigModel()
    flow: FlowConfigModel = FlowConfigModel()
    channel_mode: Literal["flow3", "flow6", "diff6"] = "flow3"
    spectral: SpectralConfigModel = SpectralConfigModel()
    sigma: float = 4.0
    detrend_lambda: float = 100.0
    predictor: str = "motion_aggregation"
    chunk_len: int | None = None

    def to_config(self) -> PipelineConfig:
        return PipelineConfig(
            roi=RoiConfig(**self.roi.model_dump()),
            flow=FlowConfig(**self.flow.model_dump()),
            channel_mode=self.channel_mode,
            spectral=SpectralConfig(
                band=self.spectral.band.to_band(), epsilon=self.spectral.epsilon
            ),
            sigma=self.sigma,
            detrend_lambda=self.detrend_lambda,
            predictor=self.predictor,
            chunk_len=self.chunk_len,
        )


class HealthResponse(BaseModel):
    status: str
    version: str


class RateRecordModel(BaseModel):
    clip_id: str
    subject_id: str
    bpm: float | None
    n_peaks: int
    stage_errors: list[str] = Field(default_factory=list)


class WaveformModel(BaseModel):
    fs: float
    samples: list[float]


class EstimateRequest(BaseModel):
    frames_dir: str
    detections: str
    annotations: str | None = None
    config: PipelineConfigModel = PipelineConfigModel()
    band: BandModel | None = None
    include_waveform: bool = True
    flow_dump: str | None = None


class EstimateResponse(BaseModel):
    rate: RateRecordModel
    waveform: WaveformModel | None = None


class SynthRequest(BaseModel):
    out_dir: str
    bpm: float
    fps: float = 10.0
    duration_s: float = 60.0
    amplitude_px: float = 2.0
    noise_sigma: float = 2.0 / 255.0
    seed: int = 0
    width: int = 80
    height: int = 64
    subject_id: str = "S01"
    clip_id: str = "clip01"


class SynthResponse(BaseModel):
    frames: str
    detections: str
    annotations: str
    n_frames: int
    n_peaks: int


class FoldsRequest(BaseModel):
    #: may stay empty inside an EvalRequest, where manifest subjects apply
    subjects: list[str] = Field(default_factory=list)
    k: int = 6
    sizes: tuple[int, int, int] = (12, 3, 3)
    seed: int = 0


class FoldModel(BaseModel):
    fold_index: int
    train: list[str]
    val: list[str]
    test: list[str]


class FoldsResponse(BaseModel):
    folds: list[FoldModel]


class SplitsRequest(BaseModel):
    n_subjects: int | None = None
    subjects: list[str] | None = None
    n_train: int = 3
    n_val: int = 1


class SplitModel(BaseModel):
    train: list[str]
    val: list[str]
    test: list[str]


class SplitsResponse(BaseModel):
    count: int
    splits: list[SplitModel]


class EvalRequest(BaseModel):
    manifest: str
    config: PipelineConfigModel = PipelineConfigModel()
    folds: FoldsRequest | None = None
    explicit_folds: list[FoldModel] | None = None
    loopback: bool = False
    plots_dir: str | None = None
    #: evaluate only these subjects (training-set-size style studies)
    restrict_subjects: list[str] | None = None


class EvalResponse(BaseModel):
    report: dict
    plots: list[str] = Field(default_factory=list)
