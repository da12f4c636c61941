import numpy as np
import pytest

from sslanon.dsp import Waveform
from sslanon.f0 import F0Config, F0Track, extract_f0, frame_count, nccf

from conftest import SR, sine

FREQS = np.geomspace(80, 400, 20)


def brute_nccf(frame, lag, n):
    a = frame[:n]
    b = frame[lag:lag + n]
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return 0.0 if den == 0 else float(np.sum(a * b) / den)


class TestNccf:
    def test_periodic_frame_peaks_at_period(self):
        period = 80
        frame = np.sin(2 * np.pi * np.arange(600) / period)
        out = nccf(frame, np.arange(40, 200))
        assert out[period - 40] == pytest.approx(1.0, abs=1e-9)

    def test_zero_frame(self):
        np.testing.assert_array_equal(nccf(np.zeros(500), np.arange(1, 100)), np.zeros(99))

    def test_white_noise_low(self):
        frame = np.random.default_rng(7).standard_normal(700)
        out = nccf(frame, np.arange(1, 300))
        assert np.max(out) < 0.6

    def test_matches_brute_force(self, rng):
        frame = rng.standard_normal(500)
        lags = np.arange(0, 120)
        out = nccf(frame, lags)
        n = len(frame) - lags.max()
        np.testing.assert_allclose(out, [brute_nccf(frame, k, n) for k in lags], atol=1e-12)
        assert out[0] == pytest.approx(1.0)

    def test_bounded(self, rng):
        out = nccf(rng.standard_normal(300) * 1e3, np.arange(1, 100))
        assert np.all(np.abs(out) <= 1.0)

    def test_too_short(self):
        with pytest.raises(ValueError):
            nccf(np.ones(10), [20])


class TestExtractF0:
    def test_sine_220(self):
        track = extract_f0(Waveform(sine(220.0), SR))
        assert len(track) == 100
        interior = slice(2, -2)
        assert np.all(track.voiced[interior])
        np.testing.assert_allclose(track.f0_hz[interior], 220.0, atol=3.0)

    def test_silence(self):
        track = extract_f0(Waveform(np.zeros(SR), SR))
        assert not track.voiced.any()
        assert np.all(track.f0_hz == 0)

    def test_voiced_unvoiced_boundary(self):
        x = np.concatenate((sine(220.0, 0.5), np.zeros(SR // 2)))
        track = extract_f0(Waveform(x, SR))
        boundary = np.flatnonzero(~track.voiced)[0]
        assert abs(boundary - 8000 / 160) <= 3
        assert not track.voiced[boundary:].any()

    @pytest.mark.parametrize("n", [0, 159, 160, 16000, 16161, 23999])
    def test_frame_count(self, n):
        assert frame_count(n) == n // 160
        if n:
            assert abs(len(extract_f0(Waveform(np.zeros(n), SR))) - n / 160) <= 1

    @pytest.mark.parametrize("freq", FREQS)
    def test_no_octave_errors(self, freq):
        track = extract_f0(Waveform(sine(freq, 0.5), SR))
        f = track.f0_hz[track.voiced]
        assert len(f) > 0.8 * len(track)
        assert not np.any(np.abs(f - 2 * freq) <= 0.05 * 2 * freq)
        assert not np.any(np.abs(f - 0.5 * freq) <= 0.05 * 0.5 * freq)

    def test_amplitude_invariance(self, speech):
        a = extract_f0(speech)
        b = extract_f0(Waveform(0.5 * speech.samples, SR))
        np.testing.assert_array_equal(a.voiced, b.voiced)
        np.testing.assert_allclose(a.f0_hz, b.f0_hz, atol=0.1)

    def test_shift_by_one_hop(self):
        x = np.concatenate((np.zeros(4000), sine(150.0, 0.6), np.zeros(4000)))
        a = extract_f0(Waveform(x, SR))
        b = extract_f0(Waveform(np.roll(x, 160), SR))
        np.testing.assert_array_equal(a.voiced[5:-6], b.voiced[6:-5])

    def test_range_respected(self, speech):
        cfg = F0Config()
        track = extract_f0(speech, cfg)
        f = track.f0_hz[track.voiced]
        assert np.all((f >= cfg.f_min) & (f <= cfg.f_max))

    def test_wrong_rate(self):
        with pytest.raises(ValueError):
            extract_f0(Waveform(np.zeros(8000), 8000))

    def test_empty(self):
        with pytest.raises(ValueError):
            extract_f0(Waveform(np.zeros(0), SR))


class TestTypes:
    def test_track_invariant(self):
        with pytest.raises(ValueError):
            F0Track(np.array([100.0, 0.0]), np.array([True, True]))

    @pytest.mark.parametrize("kwargs", [dict(f_min=0), dict(f_min=500), dict(f_max=9000), dict(nccf_threshold=1.0)])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            F0Config(**kwargs)
