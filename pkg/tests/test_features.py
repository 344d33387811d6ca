"""Feature extraction: pitch contour, onsets, mel spectrogram, windowing."""

import numpy as np
import pytest

from vocalkit.audio import AudioClip
from vocalkit import features
from vocalkit.features import (
    FeatureError,
    detect_onsets,
    extract_f0,
    hz_to_cents,
    mel_center_frequencies,
    mel_features,
    window_features,
)

import synthutil

SR = synthutil.SR


def tone(freq_hz, dur_s, sr=SR, amp=0.3):
    t = np.arange(int(dur_s * sr)) / sr
    return AudioClip(samples=amp * np.sin(2 * np.pi * freq_hz * t), sample_rate_hz=sr, id="tone")


class TestExtractF0:
    def test_pure_sine_220(self):
        contour = extract_f0(tone(220.0, 2.0))
        assert contour.voiced.mean() >= 0.95
        dev = contour.f0_cents[contour.voiced] - 5700.0
        assert np.all(np.abs(dev) <= 10.0)

    def test_silence_unvoiced(self):
        clip = AudioClip(samples=np.zeros(SR), sample_rate_hz=SR, id="sil")
        contour = extract_f0(clip)
        assert not contour.voiced.any()

    def test_glide_tracks_instantaneous_frequency(self):
        # 220 -> 440 Hz linear glide: phase = integral of f(t)
        dur = 1.0
        t = np.arange(int(dur * SR)) / SR
        f_inst = 220.0 + 220.0 * t / dur
        phase = 2 * np.pi * np.cumsum(f_inst) / SR
        clip = AudioClip(samples=0.3 * np.sin(phase), sample_rate_hz=SR, id="glide")
        contour = extract_f0(clip)
        # window center determines the effective instantaneous frequency
        centers = contour.frame_times_s + features.F0_WINDOW_S / 2
        target = hz_to_cents(220.0 + 220.0 * np.clip(centers, 0, dur) / dur)
        voiced = contour.voiced
        assert voiced.mean() > 0.8
        assert np.all(np.abs(contour.f0_cents[voiced] - target[voiced]) <= 30.0)

    def test_transposition_covariance(self):
        rng = np.random.default_rng(7)
        base = float(rng.uniform(180, 300))
        means = []
        for k in (0, 5):
            contour = extract_f0(tone(base * 2 ** (k / 12), 1.5))
            means.append(contour.f0_cents[contour.voiced].mean())
        assert abs((means[1] - means[0]) - 500.0) <= 10.0

    def test_short_clip_raises(self):
        with pytest.raises(FeatureError):
            extract_f0(AudioClip(samples=np.zeros(100), sample_rate_hz=SR, id="short"))

    def test_bad_range_raises(self):
        with pytest.raises(FeatureError):
            extract_f0(tone(220.0, 1.0), fmin_hz=500.0, fmax_hz=100.0)

    def test_contour_time_base(self):
        contour = extract_f0(tone(220.0, 1.0))
        steps = np.diff(contour.frame_times_s)
        assert np.allclose(steps, contour.hop_s)


class TestDetectOnsets:
    def test_silence_empty(self):
        clip = AudioClip(samples=np.zeros(2 * SR), sample_rate_hz=SR, id="sil")
        assert len(detect_onsets(clip).onset_times_s) == 0

    def test_three_bursts(self):
        starts = [0.5, 1.5, 2.5]
        x = np.zeros(int(3.5 * SR))
        for s in starts:
            n0 = int(s * SR)
            seg = np.arange(int(0.2 * SR)) / SR
            burst = 0.4 * np.sin(2 * np.pi * 330.0 * seg)
            burst *= synthutil.envelope(len(burst))
            x[n0 : n0 + len(seg)] = burst
        onsets = detect_onsets(AudioClip(samples=x, sample_rate_hz=SR, id="b")).onset_times_s
        assert len(onsets) == 3
        for got, want in zip(onsets, starts):
            assert abs(got - want) <= 0.030

    def test_jittered_burst_train_matches_construction(self):
        notes = [60, 64, 67, 65, 62, 60]
        rng = np.random.default_rng(11)
        jitter = rng.uniform(-0.02, 0.02, len(notes)).tolist()
        clip = synthutil.render_take(notes, onset_jitter_s=jitter, seed=11)
        truth = synthutil.nominal_onsets(len(notes)) + np.asarray(jitter)
        onsets = detect_onsets(clip).onset_times_s
        assert len(onsets) == len(truth)
        assert np.all(np.abs(onsets - np.asarray(truth)) <= 0.030)

    def test_gain_invariant_count(self):
        clip = synthutil.render_take([60, 62, 64, 65], seed=3)
        base = detect_onsets(clip).onset_times_s
        for gain in (0.15, 0.5, 2.0):
            scaled = AudioClip(samples=np.clip(clip.samples * gain, -1, 1),
                               sample_rate_hz=SR, id="g")
            assert len(detect_onsets(scaled).onset_times_s) == len(base)

    def test_too_short_raises(self):
        with pytest.raises(FeatureError):
            detect_onsets(AudioClip(samples=np.zeros(100), sample_rate_hz=SR, id="x"))


class TestMelFeatures:
    def test_silence_hits_floor(self):
        clip = AudioClip(samples=np.zeros(SR), sample_rate_hz=SR, id="sil")
        mel = mel_features(clip)
        assert np.allclose(mel.frames, np.log(1e-10))

    def test_1khz_argmax_bin(self):
        mel = mel_features(tone(1000.0, 1.0), n_mels=80)
        centers = mel_center_frequencies(80)
        expected = int(np.argmin(np.abs(centers - 1000.0)))
        argmax = np.argmax(mel.frames, axis=1)
        assert np.all(argmax == expected)

    def test_half_amplitude_noise_log_ratio(self):
        rng = np.random.default_rng(0)
        noise = 0.4 * rng.standard_normal(2 * SR)
        noise = np.clip(noise, -1, 1)
        full = mel_features(AudioClip(samples=noise, sample_rate_hz=SR, id="n"))
        half = mel_features(AudioClip(samples=noise / 2, sample_rate_hz=SR, id="h"))
        # restrict to high-energy bins, well above the floor
        mask = full.frames > np.log(1e-10) + 5.0
        diff = (half.frames - full.frames)[mask]
        assert abs(diff.mean() - np.log(0.25)) <= 0.05

    def test_n_mels_bounds(self):
        with pytest.raises(FeatureError):
            mel_features(tone(440.0, 0.5), n_mels=10)

    def test_values_finite(self):
        clip = synthutil.render_take([60, 64], seed=1)
        assert np.all(np.isfinite(mel_features(clip).frames))


class TestWindowFeatures:
    def _mel(self, dur_s):
        t = int(round(dur_s / 0.010))
        frames = np.arange(t * 4, dtype=np.float64).reshape(t, 4)
        return features.MelMatrix(frames=frames, n_mels=4, hop_s=0.010)

    def test_ten_seconds_six_windows(self):
        fw = window_features(self._mel(10.0), window_s=3.0, stride_s=1.5)
        starts = [s for s, _ in fw.windows]
        assert starts == [0.0, 1.5, 3.0, 4.5, 6.0, 7.5]
        assert all(w.shape == (300, 4) for _, w in fw.windows)
        # last window padded: 750 + 300 > 1000 frames
        assert np.all(fw.windows[-1][1][250:] == 0.0)

    def test_exact_fit_single_window(self):
        fw = window_features(self._mel(3.0), window_s=3.0, stride_s=1.5)
        assert len(fw.windows) == 1
        assert np.all(fw.windows[0][1] != 0.0) or fw.windows[0][1].shape == (300, 4)

    def test_short_matrix_padded(self):
        fw = window_features(self._mel(2.0), window_s=3.0, stride_s=1.5)
        assert len(fw.windows) == 1
        assert fw.windows[0][1].shape == (300, 4)
        assert np.all(fw.windows[0][1][200:] == 0.0)

    def test_coverage(self):
        mel = self._mel(7.3)
        fw = window_features(mel, window_s=3.0, stride_s=1.5)
        t = mel.frames.shape[0]
        covered = np.zeros(t, dtype=bool)
        for start_s, chunk in fw.windows:
            i0 = int(round(start_s / mel.hop_s))
            covered[i0 : min(i0 + chunk.shape[0], t)] = True
        assert covered.all()

    def test_bad_stride_raises(self):
        with pytest.raises(FeatureError):
            window_features(self._mel(5.0), window_s=2.0, stride_s=3.0)
