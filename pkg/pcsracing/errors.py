# pcsracing/errors.py
#
# Exception hierarchy shared by all modules. Batch workers catch these, log them
# and keep going; the CLI turns them into a non-zero exit code.


class PcsRacingError(Exception):
    """Base class for every error raised on purpose by this package."""


class TrackError(PcsRacingError):
    """A map or centerline file failed to parse or violates a track invariant."""


class SimulationError(PcsRacingError):
    """The simulator produced a non-finite state or a planner callback failed."""


class PlannerBlocked(PcsRacingError):
    """Every candidate trajectory has infinite cost; the harness performs an emergency stop."""


class EvaluationError(PcsRacingError):
    """Every rollout pairing of a policy evaluation failed."""


class SubsetError(PcsRacingError):
    """The near-optimal set is too small for the requested DPP subsets."""


class IncompleteTreeError(PcsRacingError):
    """A game-tree node is missing descendant outcomes."""

    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"Incomplete subtree, missing branches: {self.missing}")


class DatasetFormatError(PcsRacingError):
    """A regret dataset file has the wrong magic, version or record sizes."""


class ModelFormatError(PcsRacingError):
    """A regret model file is truncated or does not match the expected sizes."""


class TrainingDivergedError(PcsRacingError):
    """Training produced a non-finite loss."""
