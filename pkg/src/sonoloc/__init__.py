"""sonoloc: acoustic indoor-positioning simulator and analysis toolkit.

Simulates reverberant, noisy, quantized microphone captures of ultrasonic
chirp emissions in a shoebox room, recovers 3D positions by pulse-compression
TDOA multilateration, and provides the measurement-side analysis (Schroeder
RT60, octave-band SPL) to verify simulated rooms against calibration targets.
"""

__version__ = "0.1.0"

from .ambient_noise import (NoiseComponent, NoiseProfile, RackAttenuation,
                            preset_profile, pressure_to_spl, spl_to_pressure,
                            synthesize_noise)
from .analysis import (EnergyDecayCurve, Rt60Estimate, RtaResult, band_rt60,
                       energy_decay_curve, rt60_from_edc, rta_band_spl)
from .errors import (ConfigurationError, InfeasibleAbsorptionError,
                     InsufficientDecayError, NoDetectionError,
                     UnderdeterminedError)
from .fileio import (export_impulse_response, import_impulse_response,
                     read_wav, read_waveform_csv, write_estimates_csv,
                     write_rt60_csv, write_rta_csv, write_tdoa_csv, write_wav,
                     write_waveform_csv)
from .harness import (EvalReport, RoverGrid, Scenario, Summary, error_cdf,
                      export_report, rover_grid, run_scenario, summarize)
from .positioning import (NodeLayout, PositionEstimate, SyncModel, TdoaSet,
                          apply_sync_error, corner_layout, detect_toa,
                          form_tdoa, matched_filter, solve_position)
from .room_acoustics import (DEFAULT_BAND_CENTERS, DEFAULT_ROOM,
                             DEFAULT_RT60_TARGETS, SPEED_OF_SOUND,
                             AirAbsorptionModel, BandSpec, ImpulseResponse,
                             RoomGeometry, SurfaceAbsorption,
                             air_attenuation_db, calibrate_absorption,
                             critical_distance, equivalent_absorption_area,
                             sabine_rt60, simulate_rir)
from .signal_chain import (ChirpSpec, DaqConfig, MicModel, ResampleResult,
                           SpeakerModel, apply_channel, generate_chirp,
                           mic_transduce, quantize, ranging_resolution,
                           resample)
