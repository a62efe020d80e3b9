"""Ambient noise synthesis and SPL arithmetic.

Noise profiles are lists of band-limited components plus an optional
broadband floor. The bundled presets reproduce the ambient levels measured
at characteristic spots of the reference testbed room: its quiet center, the
power adapters, a nearby 3D printer, and the equipment rack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import sosfilt

from .analysis import P_REF, rta_band_spl
from .filters import bandpass_sos
from .room_acoustics import BandSpec


def spl_to_pressure(spl_db: float) -> float:
    """RMS pressure (Pa) of a sound pressure level in dB re 20 uPa."""
    if not math.isfinite(spl_db):
        raise ValueError(f"SPL must be finite, got {spl_db}")
    return P_REF * 10.0 ** (spl_db / 20.0)


def pressure_to_spl(p_rms: float) -> float:
    """Sound pressure level (dB re 20 uPa) of an RMS pressure."""
    if p_rms <= 0:
        raise ValueError(f"RMS pressure must be positive, got {p_rms}")
    return 20.0 * math.log10(p_rms / P_REF)


@dataclass(frozen=True)
class NoiseComponent:
    """One band-limited noise source: center, bandwidth, target band SPL."""

    center: float
    bandwidth: float
    spl: float

    def __post_init__(self):
        if self.center <= 0:
            raise ValueError(f"center frequency must be positive, got {self.center}")
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if not math.isfinite(self.spl):
            raise ValueError(f"component SPL must be finite, got {self.spl}")


@dataclass
class NoiseProfile:
    """Ambient noise model: tonal-ish band components over a broadband floor.

    ``broadband_floor_spl`` is the maximum octave-band SPL of a pink floor;
    -inf disables the floor entirely.
    """

    components: tuple[NoiseComponent, ...] = ()
    broadband_floor_spl: float = -math.inf

    def __post_init__(self):
        self.components = tuple(self.components)
        if math.isnan(self.broadband_floor_spl) or self.broadband_floor_spl == math.inf:
            raise ValueError("broadband floor must be finite or -inf")

    def attenuated(self, attenuation_db: float) -> "NoiseProfile":
        """New profile with every component and the floor lowered by attenuation_db."""
        comps = tuple(replace(c, spl=c.spl - attenuation_db) for c in self.components)
        return NoiseProfile(components=comps,
                            broadband_floor_spl=self.broadband_floor_spl - attenuation_db)


@dataclass(frozen=True)
class RackAttenuation:
    """Directional noise reduction of the closed equipment rack, in dB."""

    front: float = 22.7
    side: float = 24.2
    back: float = 20.4
    average: float = 22.9

    def __post_init__(self):
        lo = min(self.front, self.side, self.back)
        hi = max(self.front, self.side, self.back)
        if not lo <= self.average <= hi:
            raise ValueError(
                f"average attenuation {self.average} dB must lie within the "
                f"directional range [{lo}, {hi}] dB"
            )


#: Internal noise level of the equipment rack's cooling, dB SPL.
RACK_INTERNAL_SPL = 48.5

#: Floor components above this fraction of Nyquist are dropped at synthesis.
_FLOOR_TOP_HZ = 8000.0 * math.sqrt(2.0)
_FLOOR_BOTTOM_HZ = 125.0 / math.sqrt(2.0)


def preset_profile(position: str) -> NoiseProfile:
    """Ambient-noise profile measured at a named testbed position.

    Known presets:

    - ``P1_center``: quiet room center; pink floor with a 46.2 dB maximum
      octave-band SPL plus an ultrasonic peak at 29.5 kHz. The level of the
      29.5 kHz peak was not reported numerically; 40 dB is a placeholder.
    - ``adapters``: 40.9 dB peak at 32 kHz from the power adapters.
    - ``printer``: 33.9 dB peak at 26.2 kHz from the 3D printer.
    - ``rack_front_open``: the rack's 48.5 dB internal cooling noise
      attenuated by the front-panel reduction of 22.7 dB.
    """
    presets = {
        "P1_center": NoiseProfile(
            components=(NoiseComponent(center=29500.0, bandwidth=2000.0, spl=40.0),),
            broadband_floor_spl=46.2,
        ),
        "adapters": NoiseProfile(
            components=(NoiseComponent(center=32000.0, bandwidth=2000.0, spl=40.9),),
        ),
        "printer": NoiseProfile(
            components=(NoiseComponent(center=26200.0, bandwidth=2000.0, spl=33.9),),
        ),
        "rack_front_open": NoiseProfile(
            broadband_floor_spl=RACK_INTERNAL_SPL - RackAttenuation().front,
        ),
    }
    try:
        return presets[position]
    except KeyError:
        raise ValueError(
            f"unknown noise preset {position!r}; options: "
            f"{', '.join(sorted(presets))}"
        ) from None


def synthesize_noise(profile: NoiseProfile, fs: float, duration: float,
                     seed: int | np.random.Generator = 0) -> np.ndarray:
    """Pressure waveform (Pa) realizing a noise profile.

    Each component is band-pass filtered white noise scaled so its RMS
    equals the target band SPL exactly; the floor is pink noise scaled so
    its loudest octave band hits the floor SPL. Deterministic for a fixed
    seed.
    """
    if fs <= 0 or duration <= 0:
        raise ValueError(f"fs and duration must be positive, got ({fs}, {duration})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = int(round(duration * fs))
    out = np.zeros(n)
    nyquist = fs / 2.0
    for comp in profile.components:
        hi = comp.center + comp.bandwidth / 2.0
        lo = max(comp.center - comp.bandwidth / 2.0, 1.0)
        if hi >= nyquist:
            raise ValueError(
                f"noise component at {comp.center:g} Hz (top edge {hi:g} Hz) "
                f"violates Nyquist at fs {fs:g} Hz"
            )
        white = rng.standard_normal(n)
        shaped = sosfilt(bandpass_sos(lo, hi, fs), white)
        rms = float(np.sqrt(np.mean(shaped**2)))
        if rms > 0.0:
            out += shaped * (spl_to_pressure(comp.spl) / rms)
    if math.isfinite(profile.broadband_floor_spl):
        out += _pink_floor(profile.broadband_floor_spl, fs, n, rng)
    return out


def _pink_floor(max_band_spl: float, fs: float, n: int,
                rng: np.random.Generator) -> np.ndarray:
    """Pink noise whose loudest standard octave band sits at max_band_spl.

    Pink noise carries equal energy per octave, so capping the maximum
    octave-band SPL pins every audible band close to that level.
    """
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    spectrum = rng.standard_normal(len(freqs)) + 1j * rng.standard_normal(len(freqs))
    shape = np.zeros(len(freqs))
    inside = (freqs >= _FLOOR_BOTTOM_HZ) & (freqs <= min(_FLOOR_TOP_HZ, 0.95 * fs / 2.0))
    shape[inside] = 1.0 / np.sqrt(freqs[inside])
    pink = np.fft.irfft(spectrum * shape, n=n)
    bands = BandSpec(tuple(f for f in BandSpec().centers
                           if f * math.sqrt(2.0) < fs / 2.0))
    window = min(1.0, n / fs)
    measured = rta_band_spl(pink, fs, bands=bands, window=window)
    peak = measured.max_spl()
    if not math.isfinite(peak):
        return np.zeros(n)
    return pink * 10.0 ** ((max_band_spl - peak) / 20.0)
