"""Exception types shared across the package."""

from __future__ import annotations


class PnpestError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(PnpestError):
    """Matrix block with inconsistent dimensions; names the offending block."""

    def __init__(self, block: str, expected, actual):
        self.block = block
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(f"block {block}: expected shape {self.expected}, got {self.actual}")


class RankDeficientError(PnpestError):
    """Pseudo-inverse requested for a matrix without full column rank."""


class NotSchurError(PnpestError):
    """Operation requires a Schur matrix but the spectral radius is >= 1."""

    def __init__(self, rho: float, what: str = "matrix"):
        self.rho = rho
        super().__init__(f"{what} is not Schur (spectral radius {rho:.6g})")


class SeriesInconclusiveError(PnpestError):
    """No contraction certificate found within the depth cap."""

    def __init__(self, partial: float, depth: int):
        self.partial = partial
        self.depth = depth
        super().__init__(
            f"series tail certificate not found within {depth} terms (partial sum {partial:.6g})"
        )


class DareDivergenceError(PnpestError):
    """Riccati solve failed; usually signals a non-detectable pair."""


class GainSearchInfeasibleError(PnpestError):
    """Step 2 of the design found no feasible local gain."""

    def __init__(self, subsystem_id: int, diagnostics):
        self.subsystem_id = subsystem_id
        self.diagnostics = diagnostics
        super().__init__(f"subsystem {subsystem_id}: no feasible local gain ({diagnostics})")


class NecessaryConditionError(PnpestError):
    """Lumped disturbance set does not fit inside the error constraint set."""

    def __init__(self, subsystem_id: int, margin: float):
        self.subsystem_id = subsystem_id
        self.margin = margin
        super().__init__(
            f"subsystem {subsystem_id}: necessary condition violated (margin {margin:.6g})"
        )


class ContainmentError(PnpestError):
    """Invariant-set step failed to place the set inside the constraints."""

    def __init__(self, subsystem_id, margin: float, reason: str = "containment"):
        self.subsystem_id = subsystem_id
        self.margin = margin
        self.reason = reason
        super().__init__(
            f"subsystem {subsystem_id}: invariant set {reason} failed (best margin {margin:.6g})"
        )


class DisturbanceBoundError(PnpestError):
    """Simulation received a disturbance outside its admissible set."""

    def __init__(self, subsystem_id: int):
        self.subsystem_id = subsystem_id
        super().__init__(f"subsystem {subsystem_id}: disturbance outside its admissible set")


class PlantFormatError(PnpestError):
    """Plant or design file is malformed."""


class StaleDesignError(PnpestError):
    """Design file was produced for a different plant (hash mismatch)."""
