"""Octave-band filter design shared by the synthesis and analysis modules."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import butter, sosfilt, sosfiltfilt

#: -3 dB band edges sit at center/sqrt(2) and center*sqrt(2), so adjacent
#: octave bands meet exactly at their shared edge.
EDGE_RATIO = math.sqrt(2.0)


def band_edges(center_hz: float) -> tuple[float, float]:
    """Return the (lower, upper) -3 dB edge frequencies of an octave band."""
    return center_hz / EDGE_RATIO, center_hz * EDGE_RATIO


def octave_sos(center_hz: float, fs: float, order: int = 4) -> np.ndarray:
    """Design a band-pass filter for one octave band, as second-order sections.

    Parameters
    ----------
    center_hz : float
        Band center frequency.
    fs : float
        Sampling rate; the upper band edge must stay below fs/2.
    order : int
        Butterworth design order (4 by default).
    """
    lo, hi = band_edges(center_hz)
    nyq = fs / 2.0
    if hi >= nyq:
        raise ValueError(
            f"octave band at {center_hz:g} Hz has upper edge {hi:g} Hz "
            f">= Nyquist {nyq:g} Hz"
        )
    return butter(order, [lo / nyq, hi / nyq], btype="band", output="sos")


def bandpass_sos(lo_hz: float, hi_hz: float, fs: float, order: int = 4) -> np.ndarray:
    """Design a generic band-pass filter between two edge frequencies."""
    nyq = fs / 2.0
    if not 0.0 < lo_hz < hi_hz:
        raise ValueError(f"invalid band edges ({lo_hz:g}, {hi_hz:g}) Hz")
    if hi_hz >= nyq:
        raise ValueError(f"upper band edge {hi_hz:g} Hz >= Nyquist {nyq:g} Hz")
    return butter(order, [lo_hz / nyq, hi_hz / nyq], btype="band", output="sos")


def apply_sos(sos: np.ndarray, x: np.ndarray, passes: int = 1) -> np.ndarray:
    """Causal filtering; keeps arrival causality intact for impulse responses.

    ``passes=2`` squares the magnitude response (steeper skirts) while
    remaining causal.
    """
    y = x
    for _ in range(passes):
        y = sosfilt(sos, y)
    return y


def apply_sos_zero_phase(sos: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Forward-backward filtering: zero phase, squared magnitude response.

    Standard for measurement analysis. The squared skirts halve the energy
    that neighboring octave bands leak into each other.
    """
    return sosfiltfilt(sos, x)
