"""Chirp-based 3D positioning pipeline.

Pulse compression by matched filtering, earliest-qualifying-peak time-of-
arrival detection, differential delay formation against a reference
microphone, synchronization-error injection, and position solving by damped
Gauss-Newton least squares on the hyperbolic range-difference residuals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import NoDetectionError, UnderdeterminedError
from .room_acoustics import SPEED_OF_SOUND


@dataclass
class NodeLayout:
    """Fixed microphone constellation with a designated reference node."""

    mic_positions: np.ndarray
    reference_index: int = 0

    def __post_init__(self):
        pos = np.asarray(self.mic_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"mic positions must have shape (N, 3), got {pos.shape}")
        if pos.shape[0] < 4:
            raise ValueError(
                f"3D solving needs at least 4 microphones, got {pos.shape[0]}"
            )
        if not 0 <= self.reference_index < pos.shape[0]:
            raise ValueError(
                f"reference index {self.reference_index} out of range for "
                f"{pos.shape[0]} microphones"
            )
        self.mic_positions = pos
        extent = self._smallest_principal_extent()
        if extent < 0.01:
            warnings.warn(
                f"microphone layout is near-coplanar (smallest principal "
                f"extent {extent * 100:.2f} cm); vertical accuracy will suffer",
                stacklevel=2,
            )

    def _smallest_principal_extent(self) -> float:
        centered = self.mic_positions - self.mic_positions.mean(axis=0)
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        proj = centered @ vt[-1]
        return float(proj.max() - proj.min())

    def __len__(self) -> int:
        return len(self.mic_positions)


def corner_layout(dimensions, inset: float = 0.2,
                  reference_index: int = 0) -> NodeLayout:
    """Eight microphones at the room corners, inset from the walls."""
    dims = np.asarray(dimensions, dtype=float)
    if np.any(dims <= 2 * inset):
        raise ValueError(f"inset {inset} m too large for dimensions {dims.tolist()}")
    corners = []
    for x in (inset, dims[0] - inset):
        for y in (inset, dims[1] - inset):
            for z in (inset, dims[2] - inset):
                corners.append((x, y, z))
    return NodeLayout(mic_positions=np.array(corners),
                      reference_index=reference_index)


@dataclass(frozen=True)
class SyncModel:
    """Per-node clock error: Gaussian jitter plus optional static bias."""

    jitter_std: float = 1e-6
    bias_per_node: float | tuple[float, ...] = 0.0

    def __post_init__(self):
        if self.jitter_std < 0:
            raise ValueError(f"jitter std must be >= 0, got {self.jitter_std}")

    def bias_for(self, node_index: int) -> float:
        if isinstance(self.bias_per_node, (int, float)):
            return float(self.bias_per_node)
        return float(self.bias_per_node[node_index])


@dataclass
class TdoaSet:
    """Differential delays w.r.t. the reference microphone, seconds."""

    reference_index: int
    delays: dict[int, float]

    def __post_init__(self):
        if self.reference_index in self.delays:
            raise ValueError(
                f"reference microphone {self.reference_index} cannot carry a "
                f"differential delay entry"
            )

    def __len__(self) -> int:
        return len(self.delays)

    def validate_against(self, layout: NodeLayout,
                         speed_of_sound: float = SPEED_OF_SOUND,
                         slack: float = 0.0) -> None:
        """Check every delay against its geometric bound |tdoa| <= baseline/c."""
        ref = layout.mic_positions[self.reference_index]
        for i, td in self.delays.items():
            bound = float(np.linalg.norm(layout.mic_positions[i] - ref)) / speed_of_sound
            if abs(td) > bound + slack:
                raise ValueError(
                    f"tdoa {td:.6g} s for microphone {i} exceeds the geometric "
                    f"bound {bound:.6g} s"
                )


@dataclass
class PositionEstimate:
    """Solver output: point, timing residual, iteration count, convergence."""

    point: np.ndarray
    residual_rms: float
    iterations: int
    converged: bool
    within_bounds: bool = True


def matched_filter(received, template) -> np.ndarray:
    """Cross-correlate a received waveform with the known template.

    Returns the correlation at non-negative lags only, so index k estimates
    "template starts at sample k of the received signal". Both inputs must
    share a sample rate; the peak position is invariant to amplitude scaling
    of the received signal.
    """
    r = np.asarray(received, dtype=float)
    t = np.asarray(template, dtype=float)
    if r.size == 0 or t.size == 0:
        raise ValueError("received and template must be non-empty")
    if not np.any(t):
        raise ValueError("template is all zero")
    full = fftconvolve(r, t[::-1], mode="full")
    return full[len(t) - 1:]


def detect_toa(correlation, fs: float, min_peak_ratio: float = 0.5) -> float:
    """Earliest qualifying correlation peak, converted to seconds.

    A peak qualifies when it is a local maximum at least ``min_peak_ratio``
    times the global maximum; taking the earliest such peak rather than the
    global maximum resists late reverberant energy. The result is quantized
    to the sample grid (resolution 1/fs).
    """
    c = np.asarray(correlation, dtype=float)
    if fs <= 0:
        raise ValueError(f"sample rate must be positive, got {fs}")
    if not 0 < min_peak_ratio <= 1:
        raise ValueError(f"min_peak_ratio must be in (0, 1], got {min_peak_ratio}")
    if c.size < 3:
        raise NoDetectionError("correlation too short to hold a peak")
    peak = float(c.max())
    if peak <= 0.0:
        raise NoDetectionError("correlation has no positive peak")
    interior = (c[1:-1] >= c[:-2]) & (c[1:-1] >= c[2:]) & \
               (c[1:-1] >= min_peak_ratio * peak)
    candidates = np.nonzero(interior)[0]
    if candidates.size == 0:
        raise NoDetectionError(
            f"no local maximum reaches {min_peak_ratio:g} of the global peak"
        )
    return float(candidates[0] + 1) / fs


def form_tdoa(toas: dict[int, float], layout: NodeLayout) -> TdoaSet:
    """Differential delays relative to the layout's reference microphone.

    ``toas`` maps microphone index to detected time of arrival; microphones
    without a detection are simply absent. Raises when the reference has no
    detection or when fewer than 3 usable pairs remain.
    """
    ref = layout.reference_index
    if ref not in toas:
        raise ValueError(
            f"reference microphone {ref} has no time-of-arrival detection"
        )
    delays = {i: float(t - toas[ref]) for i, t in toas.items() if i != ref}
    if len(delays) < 3:
        raise UnderdeterminedError(
            f"only {len(delays)} usable delay pairs; 3D solving needs >= 3"
        )
    return TdoaSet(reference_index=ref, delays=delays)


def apply_sync_error(toas: dict[int, float], model: SyncModel,
                     seed: int | np.random.Generator = 0) -> dict[int, float]:
    """Perturb arrival times with per-node clock bias and Gaussian jitter."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    out = {}
    for i in sorted(toas):
        jitter = rng.normal(0.0, model.jitter_std) if model.jitter_std > 0 else 0.0
        out[i] = toas[i] + model.bias_for(i) + jitter
    return out


def solve_position(tdoas: TdoaSet, layout: NodeLayout,
                   speed_of_sound: float = SPEED_OF_SOUND,
                   initial=None,
                   search_box: tuple | None = None,
                   max_iterations: int = 100,
                   step_tolerance: float = 1e-6) -> PositionEstimate:
    """Solve 3D position from differential delays by damped Gauss-Newton.

    Minimizes sum_i (tdoa_i - (|x - m_i| - |x - m_ref|)/c)^2 with a
    Levenberg-Marquardt damping schedule (lambda starts at 1e-3, x10 on a
    rejected step, /10 on an accepted one). Converged when the accepted step
    is shorter than ``step_tolerance`` meters.

    Parameters
    ----------
    tdoas : TdoaSet
    layout : NodeLayout
    speed_of_sound : float
    initial : 3D point, optional
        Starting guess; defaults to the microphone centroid.
    search_box : ((xmin, ymin, zmin), (xmax, ymax, zmax)), optional
        When given, a solution outside the box is flagged via
        ``within_bounds``.
    """
    if len(tdoas) < 3:
        raise UnderdeterminedError(
            f"only {len(tdoas)} delay pairs; 3D solving needs >= 3"
        )
    mics = layout.mic_positions
    ref = mics[tdoas.reference_index]
    idx = sorted(tdoas.delays)
    others = mics[idx]
    measured = np.array([tdoas.delays[i] for i in idx])

    if initial is None:
        x = mics.mean(axis=0)
    else:
        x = np.asarray(initial, dtype=float).copy()
        if x.shape != (3,):
            raise ValueError(f"initial guess must be a 3D point, got shape {x.shape}")

    def residuals(p):
        d_other = np.linalg.norm(others - p, axis=1)
        d_ref = np.linalg.norm(ref - p)
        return measured - (d_other - d_ref) / speed_of_sound

    def jacobian(p):
        diff_o = others - p
        d_other = np.maximum(np.linalg.norm(diff_o, axis=1), 1e-12)
        diff_r = ref - p
        d_ref = max(float(np.linalg.norm(diff_r)), 1e-12)
        # d residual / d p = (u_other - u_ref) / c with u the unit vectors
        # pointing from the point toward each microphone.
        return (diff_o / d_other[:, None] - diff_r / d_ref) / speed_of_sound

    lam = 1e-3
    r = residuals(x)
    cost = float(r @ r)
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        jac = jacobian(x)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        try:
            # Gauss-Newton on r(x): delta = -(J^T J + lam I)^-1 J^T r
            step = -np.linalg.solve(jtj + lam * np.eye(3), jtr)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        candidate = x + step
        r_new = residuals(candidate)
        cost_new = float(r_new @ r_new)
        step_norm = float(np.linalg.norm(step))
        if cost_new < cost:
            x, r, cost = candidate, r_new, cost_new
            lam = max(lam / 10.0, 1e-12)
            if step_norm < step_tolerance:
                converged = True
                break
        else:
            # A rejected step already below tolerance means the damped
            # problem cannot improve: we are at a local minimum.
            if step_norm < step_tolerance:
                converged = True
                break
            lam *= 10.0
            if lam > 1e12:
                break

    within = True
    if search_box is not None:
        lo = np.asarray(search_box[0], dtype=float)
        hi = np.asarray(search_box[1], dtype=float)
        within = bool(np.all(x >= lo) and np.all(x <= hi))
    residual_rms = math.sqrt(cost / len(measured))
    return PositionEstimate(point=x, residual_rms=residual_rms,
                            iterations=iterations, converged=converged,
                            within_bounds=within)
