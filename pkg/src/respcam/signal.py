"""1D respiration-signal mathematics.

Covers the whole signal path shared by ground truth and predictions:
Gaussian synthesis of waveforms from annotated peak times, drift removal via
a second-difference smoothness prior, zero-phase Butterworth band-pass,
prominence-gated peak detection, rate computation from inter-peak intervals,
the normalized in-band PSD distance, and the benchmark's error statistics.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.signal
import scipy.sparse

from .errors import (
    AnnotationError,
    ConfigurationError,
    FormatError,
    InsufficientDataError,
    InsufficientResolutionError,
    NoRateError,
)

#: Gaussian kernels are evaluated only within +/- this many sigmas; the
#: neglected tail contributes less than 1e-8 of the peak value.
GAUSSIAN_SUPPORT_SIGMAS = 6.0

#: Fraction of the interquartile range a local maximum must rise above its
#: surroundings to count as a respiration peak.
PEAK_PROMINENCE_IQR_FRACTION = 0.3


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled 1D signal with its sample rate in Hz."""

    samples: np.ndarray
    fs: float

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.fs <= 0:
            raise ConfigurationError(f"sample rate must be positive, got {self.fs}")
        if self.samples.ndim != 1 or len(self.samples) < 2:
            raise InsufficientDataError(
                f"waveform needs at least 2 samples, got shape {self.samples.shape}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise FormatError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.fs


@dataclass(frozen=True)
class PeakList:
    """Strictly increasing peak timestamps in seconds."""

    timestamps: tuple[float, ...]

    def __post_init__(self):
        ts = tuple(float(t) for t in self.timestamps)
        object.__setattr__(self, "timestamps", ts)
        if not ts:
            raise AnnotationError("peak list is empty")
        if ts[0] < 0:
            raise AnnotationError(f"negative peak timestamp {ts[0]}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise AnnotationError("peak timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass(frozen=True)
class Band:
    """Frequency band in Hz. The default 0.3-1.0 Hz equals 18-60 BPM."""

    lo: float = 0.3
    hi: float = 1.0

    def __post_init__(self):
        if not 0 < self.lo < self.hi:
            raise ConfigurationError(f"need 0 < lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def lo_bpm(self) -> float:
        return 60.0 * self.lo

    @property
    def hi_bpm(self) -> float:
        return 60.0 * self.hi


@dataclass(frozen=True)
class SpectralConfig:
    band: Band = Band()
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")


def waveform_from_peaks(peaks: PeakList, fs: float, sigma: float, duration: float,
                        normalized: bool = False) -> Waveform:
    """Sum of Gaussians centered at the annotated peak times.

    ``sigma`` is in samples at rate ``fs``, so the kernel width follows the
    clip's own frame grid. Kernels are unit-peak by default; every
    downstream consumer is amplitude-invariant. ``normalized`` switches to
    density-normalized kernels (area 1 in sample units).
    """
    if sigma <= 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")
    if duration < peaks.timestamps[-1]:
        raise AnnotationError(
            f"duration {duration}s is shorter than the last peak at {peaks.timestamps[-1]}s"
        )
    n = round(duration * fs)
    if n < 2:
        raise InsufficientDataError(f"duration {duration}s at {fs} Hz yields {n} samples")
    w = np.zeros(n)
    half = GAUSSIAN_SUPPORT_SIGMAS * sigma
    amplitude = 1.0 / (sigma * np.sqrt(2.0 * np.pi)) if normalized else 1.0
    for t in peaks.timestamps:
        center = t * fs
        lo = max(0, int(np.ceil(center - half)))
        hi = min(n, int(np.floor(center + half)) + 1)
        if hi <= lo:
            continue
        idx = np.arange(lo, hi)
        w[lo:hi] += amplitude * np.exp(-((idx - center) ** 2) / (2.0 * sigma**2))
    return Waveform(samples=w, fs=fs)


def _second_difference(n: int) -> scipy.sparse.csr_matrix:
    return scipy.sparse.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n - 2, n)).tocsr()


def detrend(x: Waveform, lam: float = 100.0) -> Waveform:
    """Remove slow drift with a second-difference smoothness prior.

    Solves (I + lam^2 D'D) xhat = x for the trend xhat, where D is the
    (N-2) x N second-difference operator, and returns x - xhat. The system
    is pentadiagonal symmetric positive definite, solved by banded Cholesky
    in O(N) with one step of iterative refinement, so affine inputs are
    annihilated to machine precision.
    """
    if lam <= 0:
        raise ConfigurationError(f"detrend weight must be positive, got {lam}")
    n = len(x)
    if n < 3:
        raise InsufficientDataError(f"detrend needs at least 3 samples, got {n}")
    d = _second_difference(n)
    a = scipy.sparse.eye(n, format="csr") + (lam * lam) * (d.T @ d)
    # upper banded storage for solveh_banded: row i holds diagonal i above main
    ab = np.zeros((3, n))
    ab[0, 2:] = a.diagonal(2)
    ab[1, 1:] = a.diagonal(1)
    ab[2, :] = a.diagonal(0)
    trend = scipy.linalg.solveh_banded(ab, x.samples)
    residual = x.samples - a @ trend
    trend = trend + scipy.linalg.solveh_banded(ab, residual)
    return Waveform(samples=x.samples - trend, fs=x.fs)


def _bandpass_coeffs(band: Band, fs: float) -> tuple[np.ndarray, np.ndarray]:
    if band.hi >= fs / 2.0:
        raise ConfigurationError(
            f"band upper edge {band.hi} Hz must lie below Nyquist {fs / 2.0} Hz"
        )
    return scipy.signal.butter(1, [band.lo, band.hi], btype="bandpass", fs=fs)


def butter_bandpass_filtfilt(x: Waveform, band: Band) -> Waveform:
    """First-order Butterworth band-pass applied forward-backward.

    Zero phase by construction. Edge transients are tamed by odd-reflection
    padding of length 3*(ntaps-1) on both ends.
    """
    b, a = _bandpass_coeffs(band, x.fs)
    padlen = 3 * (max(len(a), len(b)) - 1)
    if len(x) <= padlen:
        raise InsufficientDataError(f"signal of length {len(x)} too short to pad by {padlen}")
    y = scipy.signal.filtfilt(b, a, x.samples, padtype="odd", padlen=padlen)
    return Waveform(samples=y, fs=x.fs)


def detect_peaks(x: Waveform, band: Band) -> PeakList:
    """Local maxima spaced at least one period of ``band.hi`` apart.

    Prominence must exceed 0.3x the interquartile range of the signal, which
    rejects residual ripple while passing any in-band oscillation.
    """
    samples = x.samples
    q75, q25 = np.percentile(samples, [75, 25])
    iqr = q75 - q25
    if iqr <= 0:
        raise NoRateError("signal has no amplitude variation; no peaks found")
    distance = max(1.0, x.fs / band.hi)
    prominence = PEAK_PROMINENCE_IQR_FRACTION * iqr
    idx, _ = scipy.signal.find_peaks(samples, distance=distance, prominence=prominence)
    if len(idx) == 0:
        raise NoRateError("no peaks passed the distance/prominence gates")
    return PeakList(timestamps=tuple(idx / x.fs))


def rate_from_peaks(peaks: PeakList) -> float:
    """Respiration rate in BPM: 60 over the mean inter-peak interval."""
    if len(peaks) < 2:
        raise NoRateError(f"need at least 2 peaks for a rate, got {len(peaks)}")
    dt = float(np.mean(np.diff(peaks.timestamps)))
    return 60.0 / dt


def psd_normalized(x: Waveform, cfg: SpectralConfig) -> tuple[np.ndarray, np.ndarray]:
    """In-band periodogram normalized to (approximately) unit mass.

    The signal is zero-meaned, transformed with the real FFT, and the raw
    periodogram is restricted to bins inside the band; powers are divided by
    their in-band sum plus epsilon, so an all-zero signal maps to an all-zero
    spectrum instead of NaN. Returns (bin frequencies, normalized powers).
    """
    n = len(x)
    if n < 8:
        raise InsufficientDataError(f"need at least 8 samples for a spectrum, got {n}")
    centered = x.samples - np.mean(x.samples)
    power = np.abs(np.fft.rfft(centered)) ** 2
    freqs = np.fft.rfftfreq(n, d=1.0 / x.fs)
    in_band = (freqs >= cfg.band.lo) & (freqs <= cfg.band.hi)
    if not np.any(in_band):
        raise InsufficientResolutionError(
            f"no FFT bins of a {n}-sample signal at {x.fs} Hz fall in "
            f"[{cfg.band.lo}, {cfg.band.hi}] Hz"
        )
    band_power = power[in_band]
    return freqs[in_band], band_power / (band_power.sum() + cfg.epsilon)


def psd_mse(yhat: Waveform, y: Waveform, cfg: SpectralConfig) -> float:
    """Mean squared difference of normalized in-band spectra.

    Symmetric and non-negative; zero iff the two normalized spectra agree.
    """
    if len(yhat) != len(y) or yhat.fs != y.fs:
        raise FormatError(
            f"waveforms must share length and rate: {len(yhat)}@{yhat.fs} vs {len(y)}@{y.fs}"
        )
    _, p_hat = psd_normalized(yhat, cfg)
    _, p_ref = psd_normalized(y, cfg)
    return float(np.mean((p_hat - p_ref) ** 2))


def eval_stats(pred: list[float], truth: list[float]) -> tuple[float, float, float | None]:
    """(MAE, RMSE, Pearson rho) between predicted and true rates.

    Pearson is None when either vector is constant or shorter than 2.
    """
    if len(pred) != len(truth):
        raise FormatError(f"length mismatch: {len(pred)} predictions vs {len(truth)} truths")
    if len(pred) == 0:
        raise FormatError("empty rate vectors")
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    err = p - t
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err**2)))
    rho: float | None = None
    if len(p) >= 2 and np.ptp(p) > 0 and np.ptp(t) > 0:
        rho = float(np.corrcoef(p, t)[0, 1])
    return mae, rmse, rho


def write_waveform_csv(path: str | Path, x: Waveform) -> None:
    """CSV with header ``t_seconds,value``, 9 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_seconds", "value"])
        for t, v in zip(x.times, x.samples):
            writer.writerow([f"{t:.9g}", f"{v:.9g}"])


def read_waveform_csv(path: str | Path) -> Waveform:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t_seconds", "value"]:
            raise FormatError(f"unexpected waveform CSV header {header}")
        rows = [(float(t), float(v)) for t, v in reader]
    if len(rows) < 2:
        raise InsufficientDataError("waveform CSV holds fewer than 2 samples")
    dt = rows[1][0] - rows[0][0]
    return Waveform(samples=np.array([v for _, v in rows]), fs=1.0 / dt)


def load_annotations(path: str | Path) -> tuple[str, float, PeakList]:
    """Read an annotation file: ``{clip_id, fps, peaks: [frame_index...]}``.

    Peak frame indices are converted to seconds on the clip's frame grid.
    """
    data = json.loads(Path(path).read_text())
    for key in ("clip_id", "fps", "peaks"):
        if key not in data:
            raise AnnotationError(f"{path} lacks required field {key!r}")
    fps = float(data["fps"])
    if fps <= 0:
        raise AnnotationError(f"{path} has non-positive fps {fps}")
    peaks = PeakList(timestamps=tuple(float(i) / fps for i in data["peaks"]))
    return data["clip_id"], fps, peaks


def write_annotations(path: str | Path, clip_id: str, fps: float, peak_frames: list[int]) -> None:
    Path(path).write_text(
        json.dumps({"clip_id": clip_id, "fps": fps, "peaks": list(peak_frames)}, indent=2)
    )
