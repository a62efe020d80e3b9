"""Waveform and table import/export: float WAV and CSV."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .analysis import Rt60Estimate, RtaResult
from .room_acoustics import ImpulseResponse


def write_wav(path, samples, fs: float) -> None:
    """Write a mono float32 WAV file."""
    data = np.asarray(samples, dtype=np.float32)
    wavfile.write(str(path), int(round(fs)), data)


def read_wav(path) -> tuple[np.ndarray, float]:
    """Read a mono waveform from WAV; integer formats are scaled to [-1, 1]."""
    fs, data = wavfile.read(str(path))
    if data.ndim > 1:
        data = data[:, 0]
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float64) / float(np.iinfo(data.dtype).max)
    return np.asarray(data, dtype=np.float64), float(fs)


def write_waveform_csv(path, samples, fs: float) -> None:
    """Write a waveform as (sample_index, value) rows; fs goes in the header."""
    data = np.asarray(samples, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"sample_index_fs={fs:g}", "value"])
        for i, v in enumerate(data):
            writer.writerow([i, repr(float(v))])


def read_waveform_csv(path) -> tuple[np.ndarray, float]:
    """Read a waveform written by :func:`write_waveform_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        try:
            fs = float(header[0].split("=", 1)[1])
        except (IndexError, ValueError):
            raise ValueError(
                f"{path}: missing sample-rate header "
                f"(expected 'sample_index_fs=<hz>')"
            ) from None
        values = [float(row[1]) for row in reader if row]
    return np.array(values), fs


def write_rt60_csv(results: dict[float, Rt60Estimate | None], path) -> None:
    """Write per-band reverberation estimates as (band_hz, rt60_s, r2) rows.

    Bands that failed (None) leave their value cells empty.
    """
    lines = ["band_hz,rt60_s,r2"]
    for fc, est in results.items():
        if est is None:
            lines.append(f"{fc:g},,")
        else:
            lines.append(f"{fc:g},{est.rt60!r},{est.fit_r2!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_rta_csv(result: RtaResult, path) -> None:
    """Write maximum band levels as (band_hz, max_spl_db) rows."""
    lines = ["band_hz,max_spl_db"]
    for fc, spl in result.band_spl.items():
        lines.append(f"{fc:g},{spl!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_tdoa_csv(tdoa_sets, path) -> None:
    """Write differential delays as (trial_id, mic_index, tdoa_s) rows.

    ``tdoa_sets`` is an iterable of (trial_id, TdoaSet) pairs.
    """
    lines = ["trial_id,mic_index,tdoa_s"]
    for trial_id, tdoas in tdoa_sets:
        for mic_index in sorted(tdoas.delays):
            lines.append(f"{trial_id},{mic_index},{tdoas.delays[mic_index]!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_estimates_csv(estimates, path) -> None:
    """Write solver outputs as (trial_id, x, y, z, residual, converged) rows.

    ``estimates`` is an iterable of (trial_id, PositionEstimate) pairs.
    """
    lines = ["trial_id,x,y,z,residual_rms_s,converged"]
    for trial_id, est in estimates:
        x, y, z = (float(v) for v in est.point)
        conv = "true" if est.converged else "false"
        lines.append(f"{trial_id},{x!r},{y!r},{z!r},{est.residual_rms!r},{conv}")
    Path(path).write_text("\n".join(lines) + "\n")


def export_impulse_response(rir: ImpulseResponse, path) -> None:
    """Write an impulse response as WAV or CSV depending on the suffix."""
    suffix = Path(path).suffix.lower()
    if suffix == ".wav":
        write_wav(path, rir.samples, rir.fs)
    elif suffix == ".csv":
        write_waveform_csv(path, rir.samples, rir.fs)
    else:
        raise ValueError(f"unsupported export format {suffix!r}; use .wav or .csv")


def import_impulse_response(path, fs: float | None = None) -> ImpulseResponse:
    """Read an impulse response from WAV or CSV."""
    suffix = Path(path).suffix.lower()
    if suffix == ".wav":
        samples, file_fs = read_wav(path)
    elif suffix == ".csv":
        samples, file_fs = read_waveform_csv(path)
    else:
        raise ValueError(f"unsupported import format {suffix!r}; use .wav or .csv")
    return ImpulseResponse(samples=samples, fs=fs or file_fs)
