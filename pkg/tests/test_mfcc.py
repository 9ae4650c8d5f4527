import numpy as np
import pytest

from segprobe.errors import ValidationError
from segprobe.mfcc import (
    MfccConfig,
    compute_mfcc,
    dct_matrix,
    frame_signal,
    hz_to_mel,
    mel_energies,
    mel_filter_centers_hz,
    mel_filterbank,
    read_wav,
    write_wav,
)

CFG = MfccConfig()


class TestFraming:
    def test_exact_one_frame_at_boundary(self):
        # 400 samples = one 25 ms window at 16 kHz, hop 160
        frames, times = frame_signal(np.zeros(400), CFG)
        assert frames.shape == (1, 400)
        assert times[0] == pytest.approx(200 / 16000)

    def test_short_signal_yields_empty(self):
        fm = compute_mfcc(np.zeros(399), CFG)
        assert fm.n_frames == 0
        assert fm.data.shape == (0, CFG.n_coeffs)

    def test_frame_count_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(0, 8000))
            fm = compute_mfcc(rng.normal(size=n), CFG)
            w, h = CFG.window_samples, CFG.hop_samples
            expected = (n - w) // h + 1 if n >= w else 0
            assert fm.n_frames == expected
            assert np.all(np.isfinite(fm.data))


class TestZeroSignal:
    def test_frames_identical_and_floored(self):
        fm = compute_mfcc(np.zeros(1600), CFG)
        assert fm.n_frames > 1
        assert np.allclose(fm.data, fm.data[0])
        energies, _ = mel_energies(np.zeros(1600), CFG)
        logmel = np.log(np.maximum(energies, CFG.log_floor))
        assert np.allclose(logmel, np.log(CFG.log_floor))
        # orthonormal DCT of a constant vector: c0 = sqrt(n_mels)*value, rest 0
        expected_c0 = np.sqrt(CFG.n_mels) * np.log(CFG.log_floor)
        assert fm.data[0, 0] == pytest.approx(expected_c0)
        assert np.allclose(fm.data[0, 1:], 0.0, atol=1e-9)


class TestTone:
    def test_peak_filter_nearest_1khz(self):
        t = np.arange(8000) / CFG.sample_rate
        tone = np.sin(2 * np.pi * 1000.0 * t)
        energies, _ = mel_energies(tone, CFG)
        mean_energy = energies.mean(axis=0)
        centers = mel_filter_centers_hz(CFG)
        assert int(np.argmax(mean_energy)) == int(np.argmin(np.abs(centers - 1000.0)))


class TestDct:
    def test_orthonormal(self):
        d = dct_matrix(CFG.n_mels, CFG.n_mels)
        assert np.max(np.abs(d @ d.T - np.eye(CFG.n_mels))) < 1e-10

    def test_rectangular_rows_orthonormal(self):
        d = dct_matrix(13, 40)
        assert np.max(np.abs(d @ d.T - np.eye(13))) < 1e-10


class TestScaling:
    def test_doubling_shifts_log_energy_by_log4(self):
        rng = np.random.default_rng(2)
        sig = rng.normal(size=4000) * 0.1
        e1, _ = mel_energies(sig, CFG)
        e2, _ = mel_energies(2.0 * sig, CFG)
        l1 = np.log(np.maximum(e1, CFG.log_floor))
        l2 = np.log(np.maximum(e2, CFG.log_floor))
        above = e1 > 1e-6  # comfortably above the floor
        assert np.allclose((l2 - l1)[above], np.log(4.0), atol=1e-8)

    def test_c0_shifts_higher_coeffs_unchanged(self):
        rng = np.random.default_rng(3)
        sig = rng.normal(size=4000) * 0.1
        a = compute_mfcc(sig, CFG)
        b = compute_mfcc(2.0 * sig, CFG)
        # all bins above floor for noise input: c0 moves by sqrt(n_mels)*log 4
        assert np.allclose(b.data[:, 0] - a.data[:, 0],
                           np.sqrt(CFG.n_mels) * np.log(4.0), atol=1e-8)
        assert np.allclose(b.data[:, 1:], a.data[:, 1:], atol=1e-8)


class TestValidation:
    def test_nan_rejected(self):
        sig = np.zeros(1000)
        sig[10] = np.nan
        with pytest.raises(ValidationError):
            compute_mfcc(sig, CFG)

    def test_stereo_rejected(self):
        with pytest.raises(ValidationError):
            compute_mfcc(np.zeros((100, 2)), CFG)

    def test_config_invariants(self):
        with pytest.raises(ValidationError):
            MfccConfig(window=0.005, hop=0.010)
        with pytest.raises(ValidationError):
            MfccConfig(n_coeffs=50, n_mels=40)
        with pytest.raises(ValidationError):
            MfccConfig(n_fft=256)  # smaller than the 400-sample window


class TestDeterminism:
    def test_bit_identical_reruns(self):
        rng = np.random.default_rng(4)
        sig = rng.normal(size=5000)
        a = compute_mfcc(sig, CFG)
        b = compute_mfcc(sig.copy(), CFG)
        assert a.data.tobytes() == b.data.tobytes()
        assert a.frame_times.tobytes() == b.frame_times.tobytes()


class TestMelScale:
    def test_htk_formula(self):
        assert hz_to_mel(700.0) == pytest.approx(2595.0 * np.log10(2.0))
        fb = mel_filterbank(CFG)
        assert fb.shape == (CFG.n_mels, CFG.n_fft // 2 + 1)
        assert fb.max() <= 1.0 + 1e-12


class TestWavIo:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        sig = np.clip(rng.normal(size=2000) * 0.2, -1, 1)
        path = tmp_path / "x.wav"
        write_wav(path, sig, 16000)
        back, rate = read_wav(path)
        assert rate == 16000
        assert back.shape == sig.shape
        assert np.max(np.abs(back - sig)) < 1.0 / 32000
