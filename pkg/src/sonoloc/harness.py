"""Scenario configuration, evaluation loop, metrics, and report export.

A :class:`Scenario` bundles everything needed to run a positioning
experiment end to end: room and reverberation targets, microphone layout,
chirp, acquisition chain, ambient noise, synchronization model, and the
rover grid of ground-truth emitter positions. :func:`run_scenario` walks
every grid position and trial through the full simulate/capture/solve
pipeline and aggregates error statistics.

Reproducibility: the per-trial random streams derive from the master seed
as ``SeedSequence(seed, spawn_key=(position_index, trial_index))`` spawned
into four children, consumed in the order (ground-truth jitter, noise,
quantizer, sync). Trials are therefore independent and could run in any
order or in parallel.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import ambient_noise
from .ambient_noise import NoiseProfile, preset_profile, synthesize_noise
from .errors import NoDetectionError, UnderdeterminedError
from .positioning import (NodeLayout, SyncModel, apply_sync_error,
                          corner_layout, detect_toa, form_tdoa,
                          matched_filter, solve_position)
from .room_acoustics import (DEFAULT_ROOM, DEFAULT_RT60_TARGETS, SPEED_OF_SOUND,
                             AirAbsorptionModel, BandSpec, RoomGeometry,
                             SurfaceAbsorption, calibrate_absorption,
                             simulate_rir)
from .signal_chain import (ChirpSpec, DaqConfig, MicModel, apply_channel,
                           generate_chirp, mic_transduce, quantize)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class RoverGrid:
    """Ground-truth sampling grid walked by the measurement rover."""

    spacing: float = 1.0
    margin: float = 0.5
    gt_jitter_std: float = 0.01
    gt_jitter_enabled: bool = False

    def __post_init__(self):
        if self.spacing <= 0:
            raise ValueError(f"grid spacing must be positive, got {self.spacing}")
        if self.margin < 0:
            raise ValueError(f"grid margin must be >= 0, got {self.margin}")
        if self.gt_jitter_std < 0:
            raise ValueError(f"jitter std must be >= 0, got {self.gt_jitter_std}")


def rover_grid(room: RoomGeometry, spacing: float, margin: float) -> np.ndarray:
    """Axis-aligned grid of positions at least ``margin`` from every wall.

    Points run from margin to L-margin per axis with the given spacing;
    each axis gets floor((L - 2*margin)/spacing) + 1 points.
    """
    if spacing <= 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    dims = room.dimensions
    if np.any(2.0 * margin >= dims):
        raise ValueError(
            f"margin {margin} m leaves no interior in a "
            f"{dims.tolist()} m room"
        )
    axes = []
    for length in dims:
        count = int(math.floor((length - 2.0 * margin) / spacing)) + 1
        axes.append(margin + spacing * np.arange(count))
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])


@dataclass
class Scenario:
    """Complete configuration of one positioning experiment."""

    room: RoomGeometry = field(default_factory=lambda: DEFAULT_ROOM)
    rt60_targets: dict = field(default_factory=lambda: dict(DEFAULT_RT60_TARGETS))
    layout: NodeLayout | None = None
    chirp: ChirpSpec = field(default_factory=ChirpSpec)
    daq: DaqConfig = field(default_factory=DaqConfig)
    mic: MicModel = field(default_factory=lambda: MicModel(gain_db=20.0))
    noise: NoiseProfile | str | None = "P1_center"
    sync: SyncModel = field(default_factory=SyncModel)
    air: AirAbsorptionModel = field(default_factory=AirAbsorptionModel)
    grid: RoverGrid = field(default_factory=RoverGrid)
    speed_of_sound: float = SPEED_OF_SOUND
    max_order: int = 40
    rir_duration: float | None = 0.15
    min_peak_ratio: float = 0.5
    quantizer_noise: bool = True
    trials: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.layout is None:
            self.layout = corner_layout(self.room.dimensions, inset=0.2)
        if self.trials < 0:
            raise ValueError(f"trials must be >= 0, got {self.trials}")
        for m in self.layout.mic_positions:
            if not self.room.contains(m):
                raise ValueError(
                    f"microphone at {m.tolist()} lies outside the room"
                )

    def noise_profile(self) -> NoiseProfile | None:
        if self.noise is None:
            return None
        if isinstance(self.noise, str):
            # TOML has no null; the string "none" disables noise there.
            if self.noise.lower() == "none":
                return None
            return preset_profile(self.noise)
        return self.noise

    def to_dict(self) -> dict:
        d = {
            "room": {"lx": self.room.lx, "ly": self.room.ly, "lz": self.room.lz},
            "rt60_targets": {f"{k:g}": v for k, v in self.rt60_targets.items()},
            "layout": {
                "mic_positions": self.layout.mic_positions.tolist(),
                "reference_index": self.layout.reference_index,
            },
            "chirp": asdict(self.chirp),
            "daq": asdict(self.daq),
            "mic": {**asdict(self.mic),
                    "response_table": [list(p) for p in self.mic.response_table]},
            "noise": (self.noise if isinstance(self.noise, (str, type(None)))
                      else {
                          "components": [asdict(c) for c in self.noise.components],
                          "broadband_floor_spl": self.noise.broadband_floor_spl,
                      }),
            "sync": {"jitter_std": self.sync.jitter_std,
                     "bias_per_node": self.sync.bias_per_node},
            "air": asdict(self.air),
            "grid": asdict(self.grid),
            "speed_of_sound": self.speed_of_sound,
            "max_order": self.max_order,
            "rir_duration": self.rir_duration,
            "min_peak_ratio": self.min_peak_ratio,
            "quantizer_noise": self.quantizer_noise,
            "trials": self.trials,
            "seed": self.seed,
        }
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        base = cls()
        kwargs = {}
        if "room" in data:
            kwargs["room"] = RoomGeometry(**data["room"])
        room = kwargs.get("room", base.room)
        if "rt60_targets" in data:
            kwargs["rt60_targets"] = {float(k): float(v)
                                      for k, v in data["rt60_targets"].items()}
        if "layout" in data:
            kwargs["layout"] = NodeLayout(
                mic_positions=np.array(data["layout"]["mic_positions"]),
                reference_index=int(data["layout"].get("reference_index", 0)),
            )
        if "chirp" in data:
            kwargs["chirp"] = ChirpSpec(**data["chirp"])
        if "daq" in data:
            kwargs["daq"] = DaqConfig(**data["daq"])
        if "mic" in data:
            mic = dict(data["mic"])
            mic["response_table"] = tuple(tuple(p) for p in mic.get("response_table", ()))
            kwargs["mic"] = MicModel(**mic)
        if "noise" in data:
            noise = data["noise"]
            if isinstance(noise, dict):
                comps = tuple(ambient_noise.NoiseComponent(**c)
                              for c in noise.get("components", []))
                floor = noise.get("broadband_floor_spl", -math.inf)
                kwargs["noise"] = NoiseProfile(components=comps,
                                               broadband_floor_spl=floor)
            else:
                kwargs["noise"] = noise
        if "sync" in data:
            sync = dict(data["sync"])
            bias = sync.get("bias_per_node", 0.0)
            if isinstance(bias, list):
                sync["bias_per_node"] = tuple(bias)
            kwargs["sync"] = SyncModel(**sync)
        if "air" in data:
            kwargs["air"] = AirAbsorptionModel(**data["air"])
        if "grid" in data:
            kwargs["grid"] = RoverGrid(**data["grid"])
        for key in ("speed_of_sound", "max_order", "rir_duration",
                    "min_peak_ratio", "quantizer_noise", "trials", "seed"):
            if key in data:
                kwargs[key] = data[key]
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "Scenario":
        """Load a scenario from a TOML or JSON file (by suffix)."""
        path = Path(path)
        if path.suffix.lower() == ".json":
            data = json.loads(path.read_text())
        elif path.suffix.lower() == ".toml":
            data = tomllib.loads(path.read_text())
        else:
            raise ValueError(
                f"unsupported scenario format {path.suffix!r}; use .toml or .json"
            )
        return cls.from_dict(data)


@dataclass
class TrialRecord:
    position_index: int
    trial: int
    status: str
    true_position: np.ndarray
    estimate: np.ndarray | None = None
    error_m: float | None = None
    residual_rms_s: float | None = None
    iterations: int | None = None
    converged: bool | None = None


@dataclass
class Summary:
    count: int
    rmse: float
    median: float
    p95: float


@dataclass
class EvalReport:
    records: list[TrialRecord]
    summary: Summary | None
    cdf: list[tuple[float, float]]
    scenario_echo: dict
    seed: int

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error_m for r in self.records if r.status == "ok"])

    @property
    def success_count(self) -> int:
        return sum(1 for r in self.records if r.status == "ok")

    @property
    def failure_count(self) -> int:
        return sum(1 for r in self.records if r.status != "ok")


def summarize(errors) -> Summary | None:
    """RMSE, median, and nearest-rank p95 of a batch of errors.

    Returns None for an empty batch: no data is reported as no data rather
    than as zeros.
    """
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        return None
    rmse = float(np.sqrt(np.mean(e**2)))
    median = float(np.median(e))
    rank = max(int(math.ceil(0.95 * e.size)), 1)
    p95 = float(np.sort(e)[rank - 1])
    return Summary(count=int(e.size), rmse=rmse, median=median, p95=p95)


def error_cdf(errors, step: float = 0.01) -> list[tuple[float, float]]:
    """Cumulative error distribution sampled at fixed distance steps."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        return []
    top = max(step, math.ceil(float(e.max()) / step) * step)
    points = []
    threshold = step
    while threshold <= top + 1e-12:
        points.append((round(threshold, 10), float(np.mean(e <= threshold))))
        threshold += step
    return points


# Order-0 simulation never evaluates wall absorption; any valid table works.
_ANECHOIC_ABSORPTION = SurfaceAbsorption.uniform(BandSpec((1000.0,)), [1.0])


def _trial_rngs(master_seed: int, position_index: int, trial: int):
    ss = np.random.SeedSequence(master_seed,
                                spawn_key=(position_index, trial))
    children = ss.spawn(4)
    return tuple(np.random.default_rng(c) for c in children)


def run_scenario(scenario: Scenario) -> EvalReport:
    """Run the full grid x trials positioning experiment.

    Per position and trial: simulate the room impulse responses, emit the
    chirp, convolve, add ambient noise, run the microphone and DAQ chain,
    matched-filter, detect arrivals, inject sync error, form differential
    delays, and solve for the 3D position. Per-trial failures (no detection,
    underdetermined geometry, non-convergence) become failure records, not
    aborts. Deterministic for a fixed seed.
    """
    sc = scenario
    fs = sc.daq.fs_in
    positions = rover_grid(sc.room, sc.grid.spacing, sc.grid.margin)
    template = generate_chirp(sc.chirp, fs)
    profile = sc.noise_profile()
    absorption = (calibrate_absorption(sc.room, sc.rt60_targets, sc.speed_of_sound)
                  if sc.max_order > 0 else None)
    centroid = sc.room.centroid()
    box = (np.zeros(3), sc.room.dimensions)
    mics = sc.layout.mic_positions

    records: list[TrialRecord] = []
    rir_cache: dict[int, list] = {}

    for pos_idx, nominal in enumerate(positions):
        for trial in range(sc.trials):
            rng_gt, rng_noise, rng_daq, rng_sync = _trial_rngs(sc.seed, pos_idx, trial)
            source = nominal.copy()
            if sc.grid.gt_jitter_enabled and sc.grid.gt_jitter_std > 0:
                source = source + rng_gt.normal(0.0, sc.grid.gt_jitter_std, size=3)

            jittered = sc.grid.gt_jitter_enabled and sc.grid.gt_jitter_std > 0
            if not jittered and pos_idx in rir_cache:
                rirs = rir_cache[pos_idx]
            else:
                rirs = []
                for m in mics:
                    if sc.max_order == 0:
                        rir = simulate_rir(sc.room, _ANECHOIC_ABSORPTION, sc.air,
                                           source, m, max_order=0, fs=fs,
                                           speed_of_sound=sc.speed_of_sound)
                    else:
                        rir = simulate_rir(sc.room, absorption, sc.air, source, m,
                                           max_order=sc.max_order, fs=fs,
                                           speed_of_sound=sc.speed_of_sound,
                                           duration=sc.rir_duration)
                    rirs.append(rir)
                if not jittered:
                    rir_cache[pos_idx] = rirs

            toas: dict[int, float] = {}
            for i, rir in enumerate(rirs):
                received = apply_channel(rir, template)
                if profile is not None:
                    noise = synthesize_noise(profile, fs, len(received) / fs,
                                             seed=rng_noise)
                    received = received + noise[:len(received)]
                volts = mic_transduce(received, sc.mic, fs)
                q = quantize(volts, sc.daq,
                             rng=rng_daq if sc.quantizer_noise else None)
                corr = matched_filter(q, template)
                try:
                    toas[i] = detect_toa(corr, fs, sc.min_peak_ratio)
                except NoDetectionError:
                    continue

            toas = apply_sync_error(toas, sc.sync, seed=rng_sync)
            try:
                tdoas = form_tdoa(toas, sc.layout)
            except (ValueError, UnderdeterminedError):
                records.append(TrialRecord(
                    position_index=pos_idx, trial=trial,
                    status="no_detection" if sc.layout.reference_index not in toas
                    else "underdetermined",
                    true_position=nominal))
                continue
            est = solve_position(tdoas, sc.layout, sc.speed_of_sound,
                                 initial=centroid, search_box=box)
            if not est.converged:
                records.append(TrialRecord(
                    position_index=pos_idx, trial=trial, status="no_convergence",
                    true_position=nominal, estimate=est.point,
                    residual_rms_s=est.residual_rms,
                    iterations=est.iterations, converged=False))
                continue
            error = float(np.linalg.norm(est.point - nominal))
            records.append(TrialRecord(
                position_index=pos_idx, trial=trial, status="ok",
                true_position=nominal, estimate=est.point, error_m=error,
                residual_rms_s=est.residual_rms, iterations=est.iterations,
                converged=True))

    errors = np.array([r.error_m for r in records if r.status == "ok"])
    return EvalReport(records=records, summary=summarize(errors),
                      cdf=error_cdf(errors), scenario_echo=sc.to_dict(),
                      seed=sc.seed)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export_report(report: EvalReport, directory) -> list[Path]:
    """Write errors.csv, summary.csv, cdf.csv, and the scenario echo.

    Output bytes depend only on the report contents, so identical runs
    produce identical files.
    """
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    errors_path = out / "errors.csv"
    lines = ["position_index,trial,status,true_x,true_y,true_z,"
             "est_x,est_y,est_z,error_m,residual_rms_s,iterations,converged"]
    for r in report.records:
        est = ["", "", ""] if r.estimate is None else [_fmt(float(v)) for v in r.estimate]
        lines.append(",".join([
            str(r.position_index), str(r.trial), r.status,
            *[_fmt(float(v)) for v in r.true_position], *est,
            _fmt(r.error_m), _fmt(r.residual_rms_s), _fmt(r.iterations),
            _fmt(r.converged),
        ]))
    errors_path.write_text("\n".join(lines) + "\n")
    written.append(errors_path)

    summary_path = out / "summary.csv"
    lines = ["metric,value"]
    lines.append(f"success_count,{report.success_count}")
    lines.append(f"failure_count,{report.failure_count}")
    if report.summary is None:
        for metric in ("rmse_m", "median_m", "p95_m"):
            lines.append(f"{metric},no_data")
    else:
        lines.append(f"rmse_m,{_fmt(report.summary.rmse)}")
        lines.append(f"median_m,{_fmt(report.summary.median)}")
        lines.append(f"p95_m,{_fmt(report.summary.p95)}")
    summary_path.write_text("\n".join(lines) + "\n")
    written.append(summary_path)

    cdf_path = out / "cdf.csv"
    lines = ["error_m,fraction"]
    for threshold, fraction in report.cdf:
        lines.append(f"{_fmt(threshold)},{_fmt(fraction)}")
    cdf_path.write_text("\n".join(lines) + "\n")
    written.append(cdf_path)

    scenario_path = out / "scenario.json"
    scenario_path.write_text(json.dumps(report.scenario_echo, indent=2,
                                        sort_keys=True) + "\n")
    written.append(scenario_path)
    return written
