from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from respcam.errors import (
    AnnotationError,
    ConfigurationError,
    FormatError,
    InsufficientDataError,
    InsufficientResolutionError,
    NoRateError,
)
from respcam.signal import (
    Band,
    PeakList,
    SpectralConfig,
    Waveform,
    butter_bandpass_filtfilt,
    detect_peaks,
    detrend,
    eval_stats,
    psd_mse,
    psd_normalized,
    rate_from_peaks,
    read_waveform_csv,
    waveform_from_peaks,
    write_waveform_csv,
)


def sine(freq, fs=10.0, duration=60.0, amp=1.0, phase=0.0):
    t = np.arange(round(duration * fs)) / fs
    return Waveform(samples=amp * np.sin(2 * np.pi * freq * t + phase), fs=fs)


class TestWaveformFromPeaks:
    def test_single_peak_values(self):
        w = waveform_from_peaks(PeakList((5.0,)), fs=10.0, sigma=4.0, duration=10.0)
        assert len(w) == 100
        assert w.samples[50] == pytest.approx(1.0, abs=1e-9)
        assert np.argmax(w.samples) == 50
        assert w.samples[54] == pytest.approx(np.exp(-0.5), rel=1e-9)

    def test_two_peak_midpoint_matches_direct_sum(self):
        # oracle: evaluate both Gaussians directly at the midpoint sample
        peaks = (4.0, 6.0)
        w = waveform_from_peaks(PeakList(peaks), fs=10.0, sigma=4.0, duration=12.0)
        mid = 50
        expected = sum(np.exp(-((mid - t * 10.0) ** 2) / (2 * 4.0**2)) for t in peaks)
        assert expected == pytest.approx(2 * np.exp(-3.125), rel=1e-12)
        assert w.samples[mid] == pytest.approx(expected, rel=1e-9)

    def test_peak_cap_property(self):
        peaks = PeakList((1.0, 2.0, 2.8, 4.4))
        w = waveform_from_peaks(peaks, fs=10.0, sigma=4.0, duration=8.0)
        assert w.samples.max() <= len(peaks) + 1e-12

    def test_density_normalized_kernels(self):
        w = waveform_from_peaks(PeakList((5.0,)), fs=10.0, sigma=4.0, duration=10.0,
                                normalized=True)
        assert w.samples[50] == pytest.approx(1.0 / (4.0 * np.sqrt(2 * np.pi)), rel=1e-9)
        # discrete Gaussian mass is ~1 in sample units
        assert w.samples.sum() == pytest.approx(1.0, abs=1e-6)

    def test_empty_and_unsorted_rejected(self):
        with pytest.raises(AnnotationError):
            PeakList(())
        with pytest.raises(AnnotationError):
            PeakList((2.0, 1.0))

    def test_duration_before_last_peak_rejected(self):
        with pytest.raises(AnnotationError):
            waveform_from_peaks(PeakList((5.0,)), fs=10.0, sigma=4.0, duration=4.0)


def dense_detrend_oracle(x: np.ndarray, lam: float) -> np.ndarray:
    n = len(x)
    d = np.zeros((n - 2, n))
    for i in range(n - 2):
        d[i, i], d[i, i + 1], d[i, i + 2] = 1.0, -2.0, 1.0
    trend = np.linalg.solve(np.eye(n) + lam * lam * (d.T @ d), x)
    return x - trend


class TestDetrend:
    def test_constant_maps_to_zero(self):
        w = Waveform(samples=np.full(50, 3.7), fs=10.0)
        assert np.max(np.abs(detrend(w, 100.0).samples)) < 1e-9

    def test_ramp_maps_to_zero(self):
        w = Waveform(samples=0.5 * np.arange(80) - 4.0, fs=10.0)
        assert np.max(np.abs(detrend(w, 100.0).samples)) < 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_dense_solve(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=600)
        got = detrend(Waveform(samples=x, fs=10.0), 100.0).samples
        want = dense_detrend_oracle(x, 100.0)
        assert np.sqrt(np.mean((got - want) ** 2)) < 1e-8

    def test_recovers_sinusoid_on_ramp(self):
        t = np.arange(600) / 10.0
        drift = 0.05 * t + 2.0
        tone = np.sin(2 * np.pi * 0.5 * t)
        got = detrend(Waveform(samples=drift + tone, fs=10.0), 100.0).samples
        want = dense_detrend_oracle(drift + tone, 100.0)
        assert np.sqrt(np.mean((got - want) ** 2)) < 1e-8
        # bulk of the sinusoid survives
        assert np.corrcoef(got[50:-50], tone[50:-50])[0, 1] > 0.99

    @given(a=st.floats(-5, 5), b=st.floats(-5, 5))
    @settings(max_examples=25, deadline=None)
    def test_affine_null_space(self, a, b):
        x = a * np.arange(120) + b
        out = detrend(Waveform(samples=x, fs=10.0), 100.0).samples
        assert np.max(np.abs(out)) < 1e-6 * max(1.0, abs(a) * 120 + abs(b))

    def test_linearity(self):
        rng = np.random.default_rng(3)
        x, y = rng.normal(size=200), rng.normal(size=200)
        fx = detrend(Waveform(samples=x, fs=10.0), 100.0).samples
        fy = detrend(Waveform(samples=y, fs=10.0), 100.0).samples
        fxy = detrend(Waveform(samples=2.0 * x + 3.0 * y, fs=10.0), 100.0).samples
        assert np.max(np.abs(fxy - (2.0 * fx + 3.0 * fy))) < 1e-8

    def test_too_short_rejected(self):
        with pytest.raises(InsufficientDataError):
            detrend(Waveform(samples=np.array([1.0, 2.0]), fs=10.0), 100.0)

    def test_differencing_round_trip(self):
        # cumulative sum of a differenced signal restores it up to a constant,
        # which detrending removes
        rng = np.random.default_rng(9)
        s = np.cumsum(rng.normal(size=300)) * 0.1
        rebuilt = np.cumsum(np.diff(s))
        a = detrend(Waveform(samples=rebuilt, fs=10.0), 100.0).samples
        b = detrend(Waveform(samples=s[1:], fs=10.0), 100.0).samples
        assert np.max(np.abs(a - b)) < 1e-8


def xcorr_lag(a: np.ndarray, b: np.ndarray) -> int:
    """Lag of a relative to b at the cross-correlation argmax (oracle)."""
    c = np.correlate(a - a.mean(), b - b.mean(), mode="full")
    return int(np.argmax(c)) - (len(b) - 1)


class TestBandpass:
    def test_zero_phase_in_band(self):
        for freq in (0.35, 0.5, 0.9):
            w = sine(freq)
            y = butter_bandpass_filtfilt(w, Band())
            core = slice(50, -50)
            assert xcorr_lag(y.samples[core], w.samples[core]) == 0

    def test_in_band_amplitude_preserved(self):
        w = sine(0.5)
        y = butter_bandpass_filtfilt(w, Band())
        core = slice(100, -100)
        ratio = np.sqrt(np.mean(y.samples[core] ** 2) / np.mean(w.samples[core] ** 2))
        assert 0.9 <= ratio <= 1.0

    def test_dc_removed(self):
        w = Waveform(samples=np.full(400, 5.0), fs=10.0)
        y = butter_bandpass_filtfilt(w, Band())
        assert np.max(np.abs(y.samples[20:-20])) < 1e-3

    def test_out_of_band_attenuated_6db(self):
        w = sine(3.0)
        y = butter_bandpass_filtfilt(w, Band())
        core = slice(100, -100)
        ratio = np.sqrt(np.mean(y.samples[core] ** 2) / np.mean(w.samples[core] ** 2))
        assert 20 * np.log10(ratio) < -6.0

    def test_band_above_nyquist_rejected(self):
        with pytest.raises(ConfigurationError):
            butter_bandpass_filtfilt(sine(0.5, fs=1.5), Band())


class TestDetectPeaks:
    def test_sinusoid_peak_count_and_spacing(self):
        peaks = detect_peaks(sine(0.5), Band())
        assert len(peaks) == 30
        gaps = np.diff(peaks.timestamps)
        assert np.allclose(gaps, 2.0, atol=0.11)

    def test_constant_signal_has_no_rate(self):
        with pytest.raises(NoRateError):
            detect_peaks(Waveform(samples=np.ones(100), fs=10.0), Band())

    def test_ripple_rejected_after_bandpass(self):
        t = np.arange(600) / 10.0
        raw = np.sin(2 * np.pi * 0.4 * t) + 0.3 * np.sin(2 * np.pi * 3.0 * t)
        filtered = butter_bandpass_filtfilt(Waveform(samples=raw, fs=10.0), Band())
        peaks = detect_peaks(filtered, Band())
        assert 23 <= len(peaks) <= 25

    @pytest.mark.parametrize("freq", [0.32, 0.5, 0.65, 0.95])
    def test_rate_recovery_within_half_bpm(self, freq):
        filtered = butter_bandpass_filtfilt(sine(freq), Band())
        rate = rate_from_peaks(detect_peaks(filtered, Band()))
        assert abs(rate - 60.0 * freq) <= 0.5


class TestRateFromPeaks:
    def test_uniform_spacing(self):
        assert rate_from_peaks(PeakList((0.0, 2.0, 4.0, 6.0))) == pytest.approx(30.0)

    def test_mean_interval(self):
        assert rate_from_peaks(PeakList((0.0, 1.0, 3.0))) == pytest.approx(40.0)

    def test_single_peak_rejected(self):
        with pytest.raises(NoRateError):
            rate_from_peaks(PeakList((1.0,)))


def dft_psd_oracle(x: np.ndarray, fs: float, band: Band, eps: float):
    """O(N^2) direct-definition DFT periodogram, band-restricted, normalized."""
    n = len(x)
    x0 = x - x.mean()
    ks = np.arange(n // 2 + 1)
    powers = []
    freqs = []
    for k in ks:
        f = k * fs / n
        re = sum(x0[t] * np.cos(-2 * np.pi * k * t / n) for t in range(n))
        im = sum(x0[t] * np.sin(-2 * np.pi * k * t / n) for t in range(n))
        freqs.append(f)
        powers.append(re * re + im * im)
    freqs = np.array(freqs)
    powers = np.array(powers)
    mask = (freqs >= band.lo) & (freqs <= band.hi)
    return freqs[mask], powers[mask] / (powers[mask].sum() + eps)


class TestPsd:
    def test_pure_tone_concentrates(self):
        # 0.5 Hz over 40 s at 10 fps: exactly 20 periods, on-bin
        w = sine(0.5, duration=40.0)
        freqs, p = psd_normalized(w, SpectralConfig())
        k = np.argmin(np.abs(freqs - 0.5))
        assert p[k] >= 0.99

    def test_constant_yields_zeros_not_nan(self):
        w = Waveform(samples=np.full(64, 2.5), fs=10.0)
        _, p = psd_normalized(w, SpectralConfig())
        assert np.all(np.isfinite(p))
        assert np.all(p == 0)

    def test_in_band_power_is_subset_of_total(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=256)
        x0 = x - x.mean()
        total = np.sum(np.abs(np.fft.rfft(x0)) ** 2)
        freqs = np.fft.rfftfreq(256, 0.1)
        mask = (freqs >= 0.3) & (freqs <= 1.0)
        in_band = np.sum(np.abs(np.fft.rfft(x0)) ** 2 * mask)
        assert in_band <= total + 1e-9

    def test_band_without_bins_rejected(self):
        w = Waveform(samples=np.arange(8, dtype=float), fs=1000.0)
        with pytest.raises(InsufficientResolutionError):
            psd_normalized(w, SpectralConfig(band=Band(0.3, 1.0)))

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_direct_dft_oracle(self, seed):
        rng = np.random.default_rng(seed)
        cfg = SpectralConfig()
        x = Waveform(samples=rng.normal(size=128), fs=10.0)
        y = Waveform(samples=rng.normal(size=128), fs=10.0)
        _, px = dft_psd_oracle(x.samples, 10.0, cfg.band, cfg.epsilon)
        _, py = dft_psd_oracle(y.samples, 10.0, cfg.band, cfg.epsilon)
        want = np.mean((px - py) ** 2)
        assert psd_mse(x, y, cfg) == pytest.approx(want, abs=1e-10)

    def test_mse_identity_and_symmetry(self):
        rng = np.random.default_rng(7)
        cfg = SpectralConfig()
        a = Waveform(samples=rng.normal(size=200), fs=10.0)
        b = Waveform(samples=rng.normal(size=200), fs=10.0)
        assert psd_mse(a, a, cfg) == 0.0
        assert abs(psd_mse(a, b, cfg) - psd_mse(b, a, cfg)) < 1e-15

    def test_mse_rate_mismatch_rejected(self):
        cfg = SpectralConfig()
        a = sine(0.5, fs=10.0, duration=20.0)
        b = sine(0.5, fs=20.0, duration=10.0)
        with pytest.raises(FormatError):
            psd_mse(a, b, cfg)

    def test_two_tone_mse_matches_oracle(self):
        cfg = SpectralConfig()
        a = sine(0.5, duration=40.0)
        b = sine(0.75, duration=40.0)
        _, pa = dft_psd_oracle(a.samples, 10.0, cfg.band, cfg.epsilon)
        _, pb = dft_psd_oracle(b.samples, 10.0, cfg.band, cfg.epsilon)
        assert psd_mse(a, b, cfg) == pytest.approx(np.mean((pa - pb) ** 2), abs=1e-10)


class TestEvalStats:
    def test_perfect_prediction(self):
        mae, rmse, rho = eval_stats([20.0, 30.0, 40.0], [20.0, 30.0, 40.0])
        assert (mae, rmse, rho) == (0.0, 0.0, pytest.approx(1.0))

    def test_constant_offset(self):
        mae, rmse, rho = eval_stats([22.0, 32.0, 42.0], [20.0, 30.0, 40.0])
        assert mae == pytest.approx(2.0)
        assert rmse == pytest.approx(2.0)
        assert rho == pytest.approx(1.0)

    def test_anticorrelation(self):
        truth = [20.0, 30.0, 40.0]
        mae, rmse, rho = eval_stats([-t for t in truth], truth)
        assert rho == pytest.approx(-1.0)

    def test_constant_vector_has_no_rho(self):
        _, _, rho = eval_stats([5.0, 5.0], [1.0, 2.0])
        assert rho is None

    def test_length_mismatch_rejected(self):
        with pytest.raises(FormatError):
            eval_stats([1.0], [1.0, 2.0])


class TestBandDefaults:
    def test_default_band_is_18_to_60_bpm(self):
        band = Band()
        assert band.lo_bpm == 18.0
        assert band.hi_bpm == 60.0

    def test_inverted_band_rejected(self):
        with pytest.raises(ConfigurationError):
            Band(1.0, 0.3)


class TestWaveformCsv:
    def test_round_trip(self, tmp_path):
        w = sine(0.5, duration=5.0)
        path = tmp_path / "w.csv"
        write_waveform_csv(path, w)
        back = read_waveform_csv(path)
        assert back.fs == pytest.approx(w.fs)
        assert np.allclose(back.samples, w.samples, atol=1e-8)
        header = path.read_text().splitlines()[0]
        assert header == "t_seconds,value"
