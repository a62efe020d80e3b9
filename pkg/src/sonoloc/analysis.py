"""Measurement-side algorithms.

Schroeder backward-integration energy decay curves with RT20-extrapolated
RT60 estimates, per-octave-band reverberation analysis, and a real-time
analyzer style maximum band SPL measurement. These are used both to verify
that simulated rooms decay like their calibration targets and to measure
synthesized ambient noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDecayError
from .filters import apply_sos_zero_phase, band_edges, octave_sos
from .room_acoustics import BandSpec, ImpulseResponse

#: Decay curves are clamped here to avoid log-of-zero.
EDC_FLOOR_DB = -100.0

#: The RT20 fit runs over the -5 dB .. -25 dB stretch of the decay curve.
FIT_START_DB = -5.0
FIT_END_DB = -25.0

#: Reference pressure for SPL (20 micropascal).
P_REF = 20e-6


@dataclass
class EnergyDecayCurve:
    """Normalized Schroeder decay curve: non-increasing, starts at 0 dB."""

    values_db: np.ndarray
    fs: float

    def __post_init__(self):
        self.values_db = np.asarray(self.values_db, dtype=float)
        if self.fs <= 0:
            raise ValueError(f"sample rate must be positive, got {self.fs}")

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values_db)) / self.fs

    def floor_db(self) -> float:
        return float(self.values_db.min())


@dataclass
class Rt60Estimate:
    rt60: float
    fit_r2: float


@dataclass
class RtaResult:
    """Maximum band SPL per octave band over sliding analysis windows."""

    band_spl: dict[float, float]
    window_duration: float

    def max_spl(self) -> float:
        return max(self.band_spl.values())


def energy_decay_curve(rir: ImpulseResponse) -> EnergyDecayCurve:
    """Schroeder backward integration of a squared impulse response.

    EDC(t) = 10*log10( sum_{tau>=t} h(tau)^2 / sum h^2 ), clamped at
    -100 dB. The curve starts at exactly 0 dB and never increases.
    """
    energy = rir.samples.astype(float) ** 2
    tail = np.cumsum(energy[::-1])[::-1]
    if tail[0] <= 0.0:
        raise ValueError("impulse response is all zero; no decay to analyze")
    # Normalizing by the integral's own first element keeps EDC(0) exactly 0.
    tail = tail / tail[0]
    with np.errstate(divide="ignore"):
        values = 10.0 * np.log10(tail)
    return EnergyDecayCurve(values_db=np.maximum(values, EDC_FLOOR_DB), fs=rir.fs)


def rt60_from_edc(edc: EnergyDecayCurve) -> Rt60Estimate:
    """RT60 from the RT20 stretch of a decay curve.

    Fits a least-squares line to the -5..-25 dB segment and extrapolates:
    the time the fit takes to fall 20 dB, times 3. Raises
    :class:`InsufficientDecayError` when the curve has not genuinely reached
    -25 dB. Backward integration makes any finite record plunge over its
    last few samples, so the achieved floor is assessed at 90 % of the
    record rather than at its very end.
    """
    values = edc.values_db
    usable_end = max(1, int(0.9 * len(values)))
    floor = float(values[usable_end - 1])
    if floor > FIT_END_DB:
        raise InsufficientDecayError(floor_db=floor)
    i_start = int(np.argmax(values <= FIT_START_DB))
    i_end = int(np.argmax(values <= FIT_END_DB))
    if i_end <= i_start + 1:
        raise InsufficientDecayError(floor_db=floor)
    t = np.arange(i_start, i_end) / edc.fs
    y = values[i_start:i_end]
    design = np.column_stack([t, np.ones_like(t)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    if slope >= 0.0:
        raise InsufficientDecayError(floor_db=floor)
    fitted = design @ np.array([slope, intercept])
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    rt60 = 3.0 * (20.0 / -slope)
    return Rt60Estimate(rt60=float(rt60), fit_r2=float(r2))


def band_rt60(rir: ImpulseResponse, bands: BandSpec | None = None,
              strict: bool = True) -> dict[float, Rt60Estimate | None]:
    """Per-octave-band RT60 of an impulse response.

    Each band is band-pass filtered (4th-order octave design applied
    forward-backward, as measurement analyzers do), backward integrated, and
    fitted. A band holding less than 1e-8 of the total energy (80 dB down,
    beyond a 16-bit converter's dynamic range) is treated as silent. With
    ``strict`` (default), insufficient decay in any band raises; otherwise
    failed bands map to None.
    """
    bands = bands or BandSpec()
    top_edge = bands.centers[-1] * math.sqrt(2.0)
    if rir.fs < 2.0 * top_edge:
        raise ValueError(
            f"sample rate {rir.fs:g} Hz cannot resolve the top band edge "
            f"{top_edge:g} Hz"
        )
    total_energy = rir.energy()
    if total_energy <= 0.0:
        raise ValueError("impulse response is all zero; no decay to analyze")
    results: dict[float, Rt60Estimate | None] = {}
    for fc in bands.centers:
        filtered = apply_sos_zero_phase(octave_sos(fc, rir.fs), rir.samples)
        band_energy = float(np.sum(filtered**2))
        try:
            if band_energy <= 1e-8 * total_energy:
                raise InsufficientDecayError(floor_db=EDC_FLOOR_DB, band_hz=fc)
            band_rir = ImpulseResponse(samples=filtered, fs=rir.fs,
                                       t0_offset=rir.t0_offset)
            results[fc] = rt60_from_edc(energy_decay_curve(band_rir))
        except InsufficientDecayError as err:
            if strict:
                raise InsufficientDecayError(
                    floor_db=err.floor_db, band_hz=fc) from None
            results[fc] = None
    return results


def rta_band_spl(waveform, fs: float, bands: BandSpec | None = None,
                 window: float = 1.0) -> RtaResult:
    """Maximum per-band SPL over sliding windows, dB re 20 uPa.

    Band power is integrated from the Hann-windowed spectrum of each
    analysis window (edges at center/sqrt(2) and center*sqrt(2)), converted
    to an RMS-based SPL, and the maximum across windows is reported per
    band. Silent bands report -inf.
    """
    x = np.asarray(waveform, dtype=float)
    if x.ndim != 1:
        raise ValueError("waveform must be a 1D array")
    bands = bands or BandSpec()
    n_win = int(round(window * fs))
    if n_win <= 1:
        raise ValueError(f"window of {window:g} s is too short at fs {fs:g}")
    if n_win > len(x):
        raise ValueError(
            f"analysis window {window:g} s exceeds the signal duration "
            f"{len(x) / fs:g} s"
        )
    taper = np.hanning(n_win)
    norm = np.sum(taper**2)
    freqs = np.fft.rfftfreq(n_win, d=1.0 / fs)
    hop = max(1, n_win // 2)
    starts = list(range(0, len(x) - n_win + 1, hop))

    band_bins = []
    for fc in bands.centers:
        lo, hi = band_edges(fc)
        band_bins.append((freqs >= lo) & (freqs < hi))

    best = np.full(len(bands.centers), -np.inf)
    for s in starts:
        spectrum = np.fft.rfft(x[s:s + n_win] * taper)
        power = np.abs(spectrum) ** 2
        for i, mask in enumerate(band_bins):
            # Mean-square pressure in the band (one-sided spectrum).
            ms = 2.0 * float(power[mask].sum()) / (n_win * norm)
            if ms > 0.0:
                spl = 10.0 * math.log10(ms / P_REF**2)
                if spl > best[i]:
                    best[i] = spl
    return RtaResult(
        band_spl={fc: float(b) for fc, b in zip(bands.centers, best)},
        window_duration=window,
    )
