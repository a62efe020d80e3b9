import math

import numpy as np
import pytest

from sonoloc.errors import ConfigurationError
from sonoloc.room_acoustics import ImpulseResponse
from sonoloc.signal_chain import (ChirpSpec, DaqConfig, MicModel, SpeakerModel,
                                  apply_channel, generate_chirp, mic_transduce,
                                  quantize, ranging_resolution, resample)


def rms(x):
    return float(np.sqrt(np.mean(np.asarray(x) ** 2)))


class TestGenerateChirp:
    def test_sample_count(self):
        spec = ChirpSpec(f_start=25e3, f_end=45e3, duration=0.005)
        assert len(generate_chirp(spec, 192000.0)) == 960

    def test_degenerate_chirp_is_pure_tone(self):
        spec = ChirpSpec(f_start=1000.0, f_end=1000.0, duration=0.5,
                         window="none")
        x = generate_chirp(spec, 48000.0)
        freqs = np.fft.rfftfreq(len(x), 1 / 48000.0)
        peak = freqs[np.argmax(np.abs(np.fft.rfft(x)))]
        assert peak == pytest.approx(1000.0, abs=freqs[1])

    def test_peak_amplitude(self):
        spec = ChirpSpec(f_start=25e3, f_end=45e3, duration=0.005,
                         amplitude=2.5, window="none")
        x = generate_chirp(spec, 192000.0)
        assert np.max(np.abs(x)) <= 2.5 + 1e-12
        assert np.max(np.abs(x)) > 0.999 * 2.5

    def test_hann_window_applied(self):
        spec = ChirpSpec(f_start=25e3, f_end=45e3, duration=0.005)
        x = generate_chirp(spec, 192000.0)
        assert abs(x[0]) < 1e-9
        assert abs(x[-1]) < 1e-3

    def test_autocorrelation_peak_at_zero_lag(self):
        x = generate_chirp(ChirpSpec(), 192000.0)
        corr = np.correlate(x, x, mode="full")
        center = len(x) - 1
        assert np.argmax(corr) == center
        others = np.delete(corr, center)
        assert corr[center] > others.max()

    def test_nyquist_violation(self):
        with pytest.raises(ValueError):
            generate_chirp(ChirpSpec(f_start=25e3, f_end=45e3), 80000.0)

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            ChirpSpec(duration=0.0)
        with pytest.raises(ValueError):
            ChirpSpec(window="flat")


class TestRangingResolution:
    def test_max_rate_reference(self):
        # 343 / 1.25e6 = 0.2744 mm per sample
        value = ranging_resolution(343.0, 1.25e6)
        assert value == pytest.approx(2.744e-4, abs=5e-8)

    def test_unit_ratio(self):
        assert ranging_resolution(343.0, 343.0) == 1.0

    def test_at_192k(self):
        assert ranging_resolution(343.0, 192e3) == pytest.approx(
            0.0017864583333333333, rel=1e-12)

    def test_doubling_fs_halves_exactly(self):
        assert ranging_resolution(343.0, 2 * 192e3) == \
            ranging_resolution(343.0, 192e3) / 2

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            ranging_resolution(343.0, 0.0)
        with pytest.raises(ValueError):
            ranging_resolution(-1.0, 192e3)


class TestApplyChannel:
    def test_delta_delays(self):
        h = np.zeros(10)
        h[7] = 1.0
        rir = ImpulseResponse(samples=h, fs=48000.0)
        x = np.sin(np.linspace(0, 10, 50))
        y = apply_channel(rir, x)
        assert len(y) == 50 + 10 - 1
        np.testing.assert_allclose(y[7:7 + 50], x, atol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(2)
        rir = ImpulseResponse(samples=rng.standard_normal(32), fs=48000.0)
        x = rng.standard_normal(100)
        y = rng.standard_normal(100)
        lhs = apply_channel(rir, 2.0 * x + 3.0 * y)
        rhs = 2.0 * apply_channel(rir, x) + 3.0 * apply_channel(rir, y)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)

    def test_two_path_superposition(self):
        h = np.zeros(64)
        h[5] = 1.0
        h[20] = 0.4
        rir = ImpulseResponse(samples=h, fs=48000.0)
        x = np.random.default_rng(4).standard_normal(200)
        y = apply_channel(rir, x)
        expected = np.zeros(200 + 64 - 1)
        expected[5:5 + 200] += x
        expected[20:20 + 200] += 0.4 * x
        np.testing.assert_allclose(y, expected, atol=1e-10)

    def test_scaled_rir(self):
        rir = ImpulseResponse(samples=np.array([0.0, 1.0, 0.5]), fs=48000.0)
        half = ImpulseResponse(samples=rir.samples * 0.5, fs=48000.0)
        x = np.arange(10.0)
        np.testing.assert_allclose(apply_channel(half, x),
                                   0.5 * apply_channel(rir, x), atol=1e-12)

    def test_rate_mismatch(self):
        rir = ImpulseResponse(samples=np.array([1.0]), fs=48000.0)
        with pytest.raises(ValueError):
            apply_channel(rir, np.ones(10), fs=44100.0)


class TestMicTransduce:
    def test_sensitivity_at_1khz(self):
        # -38 dBV at 94 dB SPL: 1 Pa RMS in, 12.59 mV RMS out at gain 0
        fs = 192000.0
        t = np.arange(int(0.5 * fs)) / fs
        tone = math.sqrt(2.0) * np.sin(2 * math.pi * 1000.0 * t)
        v = mic_transduce(tone, MicModel(), fs)
        assert rms(v[2000:]) == pytest.approx(0.012589254117941675, rel=5e-3)

    def test_zero_in_zero_out(self):
        v = mic_transduce(np.zeros(100), MicModel(), 192000.0)
        assert np.all(v == 0.0)

    def test_corner_is_minus_3db(self):
        fs = 1.0e6
        t = np.arange(int(0.2 * fs)) / fs
        mic = MicModel()
        ref = mic_transduce(math.sqrt(2.0) * np.sin(2 * math.pi * 1000.0 * t),
                            MicModel(), fs)
        hi = mic_transduce(math.sqrt(2.0) * np.sin(2 * math.pi * 80000.0 * t),
                           mic, fs)
        skip = int(0.05 * fs)
        drop_db = 20 * math.log10(rms(hi[skip:]) / rms(ref[skip:]))
        assert drop_db == pytest.approx(-3.01, abs=0.1)

    def test_gain_applied(self):
        fs = 192000.0
        t = np.arange(int(0.2 * fs)) / fs
        tone = math.sqrt(2.0) * np.sin(2 * math.pi * 1000.0 * t)
        v0 = mic_transduce(tone, MicModel(gain_db=0.0), fs)
        v40 = mic_transduce(tone, MicModel(gain_db=40.0), fs)
        assert rms(v40) == pytest.approx(100.0 * rms(v0), rel=1e-9)

    def test_94_spl_end_to_end_within_1db(self):
        # end-to-end gain check: 94 dB SPL tone lands within +-1 dB of
        # 10^((-38+gain)/20) volts RMS
        fs = 192000.0
        t = np.arange(int(0.5 * fs)) / fs
        p94 = 20e-6 * 10 ** (94 / 20)
        tone = math.sqrt(2.0) * p94 * np.sin(2 * math.pi * 1000.0 * t)
        for gain in (0.0, 20.0, 40.0):
            v = mic_transduce(tone, MicModel(gain_db=gain), fs)
            expected = 10 ** ((-38.0 + gain) / 20.0)
            db_err = 20 * math.log10(rms(v[2000:]) / expected)
            assert abs(db_err) <= 1.0

    def test_gain_limit_at_80k_bandwidth(self):
        with pytest.raises(ValueError):
            MicModel(gain_db=58.0, bandwidth=80000.0)
        MicModel(gain_db=57.9, bandwidth=80000.0)

    def test_response_table_override(self):
        fs = 192000.0
        t = np.arange(int(0.2 * fs)) / fs
        tone = np.sin(2 * math.pi * 20000.0 * t)
        mic = MicModel(response_table=((10.0, -6.0), (96000.0, -6.0)))
        v = mic_transduce(tone, mic, fs)
        base = mic_transduce(tone, MicModel(), fs)
        assert rms(v) == pytest.approx(rms(base) / 2.0, rel=1e-2)


class TestQuantize:
    def test_zero_maps_to_zero(self):
        daq = DaqConfig()
        assert quantize(np.zeros(5), daq).tolist() == [0.0] * 5

    def test_lsb_value(self):
        daq = DaqConfig(input_range_volts=1.0)
        assert daq.lsb_volts == pytest.approx(3.0517578125e-05, rel=1e-12)
        assert daq.abs_accuracy_volts == pytest.approx(313e-6, rel=1e-12)

    def test_rounding_error_bounded_by_half_lsb(self):
        daq = DaqConfig(input_range_volts=1.0)
        rng = np.random.default_rng(8)
        v = rng.uniform(-0.9, 0.9, size=10000)
        q = quantize(v, daq)
        assert np.max(np.abs(q - v)) <= daq.lsb_volts / 2 + 1e-15

    def test_saturation(self):
        daq = DaqConfig(input_range_volts=1.0)
        q = quantize(np.array([1.5]), daq)
        assert q[0] == pytest.approx(1.0, abs=daq.lsb_volts)
        q = quantize(np.array([-1.5]), daq)
        assert q[0] == pytest.approx(-1.0, abs=daq.lsb_volts)

    def test_accuracy_noise_sigma(self):
        daq = DaqConfig(input_range_volts=1.0)
        rng = np.random.default_rng(9)
        v = rng.uniform(-0.5, 0.5, size=100000)
        noisy = quantize(v, daq, rng=np.random.default_rng(10))
        clean = quantize(v, daq)
        sigma = np.std(noisy - clean)
        assert sigma == pytest.approx(313e-6 / 3.0, rel=0.05)

    def test_idempotent_without_noise(self):
        daq = DaqConfig(input_range_volts=1.0)
        rng = np.random.default_rng(12)
        q1 = quantize(rng.uniform(-0.9, 0.9, size=1000), daq)
        q2 = quantize(q1, daq)
        np.testing.assert_array_equal(q1, q2)

    def test_unsupported_range_lists_options(self):
        with pytest.raises(ConfigurationError) as exc:
            DaqConfig(input_range_volts=3.0)
        assert "1" in str(exc.value) and "10" in str(exc.value)

    def test_rate_limits(self):
        with pytest.raises(ConfigurationError):
            DaqConfig(fs_in=2e6)
        with pytest.raises(ConfigurationError):
            DaqConfig(fs_out=4e6)
        with pytest.raises(ConfigurationError):
            DaqConfig(bits=24)


class TestResample:
    def test_identity(self):
        x = np.sin(np.linspace(0, 20, 500))
        out = resample(x, 48000.0, 48000.0)
        np.testing.assert_array_equal(out.samples, x)
        assert not out.aliasing

    def test_tone_amplitude_preserved(self):
        fs = 192000.0
        t = np.arange(int(0.5 * fs)) / fs
        tone = np.sin(2 * math.pi * 1000.0 * t)
        out = resample(tone, fs, 48000.0)
        assert not out.aliasing
        mid = out.samples[2000:-2000]
        db = 20 * math.log10(rms(mid) / rms(tone))
        assert abs(db) < 0.1

    def test_delta_train_positions(self):
        fs_from, fs_to = 192000.0, 48000.0
        x = np.zeros(19200)
        positions = np.arange(960, 19200, 1920)
        x[positions] = 1.0
        out = resample(x, fs_from, fs_to)
        expected = positions / 4.0
        for p in expected:
            window = out.samples[int(p) - 2:int(p) + 3]
            assert np.max(np.abs(window)) > 0.1
            peak = int(p) - 2 + int(np.argmax(np.abs(window)))
            assert abs(peak - p) <= 1.0

    def test_aliasing_flag(self):
        fs = 192000.0
        t = np.arange(int(0.1 * fs)) / fs
        out = resample(np.sin(2 * math.pi * 30000.0 * t), fs, 48000.0)
        assert out.aliasing
        out = resample(np.sin(2 * math.pi * 1000.0 * t), fs, 48000.0)
        assert not out.aliasing

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            resample(np.ones(10), 0.0, 48000.0)


class TestSpeakerModel:
    def test_defaults_valid(self):
        s = SpeakerModel()
        assert s.bandwidth == 45000.0
        assert s.directivity == 1.0

    def test_invalid(self):
        with pytest.raises(ValueError):
            SpeakerModel(bandwidth=0.0)
        with pytest.raises(ValueError):
            SpeakerModel(directivity=0.0)
