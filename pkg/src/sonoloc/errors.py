"""Exception types shared across the toolkit.

Plain ``ValueError`` is used for ordinary domain errors (negative distance,
non-positive volume, mismatched sample rates). The subclasses below exist
where callers need to react to a specific failure mode programmatically.
"""


class ConfigurationError(ValueError):
    """A configuration value is outside the supported hardware options."""


class InfeasibleAbsorptionError(ValueError):
    """A reverberation target would require absorption above 1."""

    def __init__(self, band_hz: float, alpha: float):
        self.band_hz = band_hz
        self.alpha = alpha
        super().__init__(
            f"target RT60 in the {band_hz:g} Hz band demands absorption "
            f"alpha = {alpha:.4f} > 1; the room cannot absorb that much"
        )


class InsufficientDecayError(ValueError):
    """An energy decay curve never reaches the -25 dB fit limit."""

    def __init__(self, floor_db: float, band_hz: float | None = None):
        self.floor_db = floor_db
        self.band_hz = band_hz
        where = f" in the {band_hz:g} Hz band" if band_hz is not None else ""
        super().__init__(
            f"insufficient decay{where}: curve only reaches "
            f"{floor_db:.1f} dB, need -25 dB for an RT20 fit"
        )


class NoDetectionError(ValueError):
    """No correlation peak qualified for time-of-arrival detection."""


class UnderdeterminedError(ValueError):
    """Too few usable delay pairs to solve for a 3D position."""
