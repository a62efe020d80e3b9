"""Transmit/receive chain models.

Linear chirp generation, MEMS-microphone and speaker transduction, channel
convolution, band-limited resampling, and 16-bit data-acquisition
quantization with the per-range absolute-accuracy figures of a PXI-style
multifunction I/O module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import bilinear, fftconvolve, lfilter, resample_poly

from .errors import ConfigurationError
from .room_acoustics import SPEED_OF_SOUND, ImpulseResponse

#: Absolute accuracy (volts) per full-scale input range, from the
#: datasheet of the modeled acquisition hardware.
INPUT_ACCURACY_VOLTS = {10.0: 2688e-6, 5.0: 1379e-6, 2.0: 654e-6, 1.0: 313e-6}

#: Same for the analog output ranges.
OUTPUT_ACCURACY_VOLTS = {10.0: 3256e-6, 5.0: 1616e-6}

MAX_INPUT_RATE = 1.25e6
MAX_OUTPUT_RATE = 3.3e6


@dataclass(frozen=True)
class ChirpSpec:
    """Linear frequency sweep used as the positioning excitation.

    ``amplitude`` is the source pressure in Pa referenced to 1 m.
    """

    f_start: float = 25000.0
    f_end: float = 45000.0
    duration: float = 0.005
    amplitude: float = 1.0
    window: str = "hann"

    def __post_init__(self):
        if self.f_start <= 0 or self.f_end <= 0:
            raise ValueError("chirp frequencies must be positive")
        if self.duration <= 0:
            raise ValueError(f"chirp duration must be positive, got {self.duration}")
        if self.amplitude <= 0:
            raise ValueError(f"chirp amplitude must be positive, got {self.amplitude}")
        if self.window not in ("none", "hann"):
            raise ValueError(f"window must be 'none' or 'hann', got {self.window!r}")


@dataclass(frozen=True)
class DaqConfig:
    """16-bit simultaneous-sampling acquisition configuration."""

    fs_in: float = 192000.0
    fs_out: float = 3.3e6
    bits: int = 16
    input_range_volts: float = 1.0
    output_range_volts: float = 10.0

    def __post_init__(self):
        if self.bits != 16:
            raise ConfigurationError(f"only 16-bit converters are modeled, got {self.bits}")
        if not 0 < self.fs_in <= MAX_INPUT_RATE:
            raise ConfigurationError(
                f"input sample rate must be in (0, {MAX_INPUT_RATE:g}] Hz, "
                f"got {self.fs_in:g}"
            )
        if not 0 < self.fs_out <= MAX_OUTPUT_RATE:
            raise ConfigurationError(
                f"output sample rate must be in (0, {MAX_OUTPUT_RATE:g}] Hz, "
                f"got {self.fs_out:g}"
            )
        if self.input_range_volts not in INPUT_ACCURACY_VOLTS:
            raise ConfigurationError(
                f"unsupported input range +/-{self.input_range_volts:g} V; "
                f"valid ranges: {sorted(INPUT_ACCURACY_VOLTS)}"
            )
        if self.output_range_volts not in OUTPUT_ACCURACY_VOLTS:
            raise ConfigurationError(
                f"unsupported output range +/-{self.output_range_volts:g} V; "
                f"valid ranges: {sorted(OUTPUT_ACCURACY_VOLTS)}"
            )

    @property
    def abs_accuracy_volts(self) -> float:
        return INPUT_ACCURACY_VOLTS[self.input_range_volts]

    @property
    def lsb_volts(self) -> float:
        return 2.0 * self.input_range_volts / 2.0**self.bits


@dataclass(frozen=True)
class MicModel:
    """MEMS microphone with first-order bandwidth roll-off and analog gain.

    Sensitivity is specified in dBV at 94 dB SPL (1 Pa) and 1 kHz. The
    response is modeled flat up to the corner; an optional
    ``response_table`` of (frequency_hz, gain_db) points overrides that
    simplification with an interpolated magnitude correction.
    """

    sensitivity_dbv_at_94spl: float = -38.0
    bandwidth: float = 80000.0
    gain_db: float = 0.0
    response_table: tuple[tuple[float, float], ...] = ()

    #: Two amplification stages cap at 57.9 dB over the 80 kHz bandwidth.
    MAX_GAIN_DB_AT_80K = 57.9

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.gain_db < 0:
            raise ValueError(f"gain must be >= 0 dB, got {self.gain_db}")
        if self.bandwidth >= 80000.0 and self.gain_db > self.MAX_GAIN_DB_AT_80K:
            raise ValueError(
                f"gain {self.gain_db:g} dB exceeds the {self.MAX_GAIN_DB_AT_80K} dB "
                f"two-stage limit at {self.bandwidth:g} Hz bandwidth"
            )

    @property
    def volts_per_pascal(self) -> float:
        return 10.0 ** (self.sensitivity_dbv_at_94spl / 20.0)


@dataclass(frozen=True)
class SpeakerModel:
    """Ultrasonic-capable speaker: bandwidth, output level, directivity."""

    bandwidth: float = 45000.0
    max_output_spl_at_1m: float = 94.0
    directivity: float = 1.0

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.directivity <= 0:
            raise ValueError(f"directivity must be positive, got {self.directivity}")


def generate_chirp(spec: ChirpSpec, fs: float) -> np.ndarray:
    """Sampled linear chirp sweeping f_start to f_end over the duration.

    Length is round(duration*fs) samples; the peak amplitude equals
    ``spec.amplitude`` with the optional Hann window applied
    multiplicatively. Raises when either end of the sweep violates Nyquist.
    """
    f_max = max(spec.f_start, spec.f_end)
    if fs <= 2.0 * f_max:
        raise ValueError(
            f"sample rate {fs:g} Hz cannot represent a sweep up to "
            f"{f_max:g} Hz"
        )
    n = int(round(spec.duration * fs))
    t = np.arange(n) / fs
    sweep_rate = (spec.f_end - spec.f_start) / spec.duration
    phase = 2.0 * math.pi * (spec.f_start * t + 0.5 * sweep_rate * t**2)
    x = spec.amplitude * np.sin(phase)
    if spec.window == "hann":
        x *= np.hanning(n)
    return x


def ranging_resolution(speed_of_sound: float = SPEED_OF_SOUND,
                       fs: float = MAX_INPUT_RATE) -> float:
    """Distance covered by sound in one sample period: c / fs, meters."""
    if fs <= 0:
        raise ValueError(f"sample rate must be positive, got {fs}")
    if speed_of_sound <= 0:
        raise ValueError(f"speed of sound must be positive, got {speed_of_sound}")
    return speed_of_sound / fs


def apply_channel(rir: ImpulseResponse, waveform, fs: float | None = None) -> np.ndarray:
    """Propagate a waveform through a room impulse response.

    Linear time-invariant discrete convolution; output length is
    len(waveform) + len(rir) - 1. When ``fs`` is given it must match the
    impulse response's sample rate.
    """
    x = np.asarray(waveform, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("waveform must be a non-empty 1D array")
    if fs is not None and not math.isclose(fs, rir.fs, rel_tol=1e-9):
        raise ValueError(
            f"waveform rate {fs:g} Hz does not match the impulse response "
            f"rate {rir.fs:g} Hz"
        )
    return fftconvolve(x, rir.samples, mode="full")


def mic_transduce(pressure, mic: MicModel, fs: float) -> np.ndarray:
    """Convert a pressure waveform (Pa) to the amplified output voltage.

    Applies the sensitivity and gain scale, then a first-order low-pass at
    the microphone bandwidth (bilinear design, pre-warped so the corner sits
    exactly at -3 dB). Corners at or above Nyquist leave the band flat.
    """
    p = np.asarray(pressure, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("pressure waveform contains non-finite samples")
    scale = mic.volts_per_pascal * 10.0 ** (mic.gain_db / 20.0)
    v = p * scale
    if mic.bandwidth < 0.5 * fs:
        wc = 2.0 * fs * math.tan(math.pi * mic.bandwidth / fs)
        b, a = bilinear([wc], [1.0, wc], fs=fs)
        v = lfilter(b, a, v)
    if mic.response_table:
        v = _apply_response_table(v, fs, mic.response_table)
    return v


def _apply_response_table(v: np.ndarray, fs: float,
                          table: tuple[tuple[float, float], ...]) -> np.ndarray:
    freqs = np.fft.rfftfreq(len(v), d=1.0 / fs)
    pts = sorted(table)
    gains_db = np.interp(freqs, [p[0] for p in pts], [p[1] for p in pts])
    spectrum = np.fft.rfft(v) * 10.0 ** (gains_db / 20.0)
    return np.fft.irfft(spectrum, n=len(v))


def quantize(voltage, daq: DaqConfig,
             rng: np.random.Generator | int | None = None) -> np.ndarray:
    """16-bit mid-tread quantization with optional accuracy perturbation.

    Values are clamped to the full-scale range and rounded to the nearest of
    2^16 uniform levels. When ``rng`` is given (a Generator or a seed), each
    sample is additionally perturbed by zero-mean Gaussian noise with
    standard deviation abs_accuracy/3, modeling the converter's absolute
    accuracy; without it the output is the ideal quantized value.
    """
    v = np.asarray(voltage, dtype=float)
    fs_range = daq.input_range_volts
    lsb = daq.lsb_volts
    codes = np.round(np.clip(v, -fs_range, fs_range) / lsb)
    codes = np.clip(codes, -(2 ** (daq.bits - 1)), 2 ** (daq.bits - 1) - 1)
    q = codes * lsb
    if rng is not None:
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        q = q + rng.normal(0.0, daq.abs_accuracy_volts / 3.0, size=q.shape)
    return q


@dataclass
class ResampleResult:
    """Rate-converted waveform plus an aliasing-risk flag."""

    samples: np.ndarray
    fs: float
    aliasing: bool = False


def resample(waveform, from_fs: float, to_fs: float) -> ResampleResult:
    """Band-limited sample-rate conversion.

    Uses polyphase resampling with the rate ratio approximated as a
    rational. Tones below both Nyquist limits keep their frequency and
    amplitude within 0.1 dB. Down-conversions flag ``aliasing`` when the
    input holds more than a millionth of its energy above the target
    Nyquist; that energy is filtered out, not folded.
    """
    x = np.asarray(waveform, dtype=float)
    if from_fs <= 0 or to_fs <= 0:
        raise ValueError(f"sample rates must be positive, got ({from_fs}, {to_fs})")
    if math.isclose(from_fs, to_fs, rel_tol=1e-12):
        return ResampleResult(samples=x.copy(), fs=to_fs, aliasing=False)
    aliasing = False
    if to_fs < from_fs and x.size:
        freqs = np.fft.rfftfreq(len(x), d=1.0 / from_fs)
        power = np.abs(np.fft.rfft(x)) ** 2
        total = float(power.sum())
        if total > 0.0:
            above = float(power[freqs > to_fs / 2.0].sum())
            aliasing = above > 1e-6 * total
    ratio = Fraction(to_fs / from_fs).limit_denominator(10000)
    y = resample_poly(x, ratio.numerator, ratio.denominator)
    return ResampleResult(samples=y, fs=to_fs, aliasing=aliasing)
