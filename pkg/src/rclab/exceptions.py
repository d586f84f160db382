"""Exception types raised across the toolkit."""

import numpy as np


class RclabError(Exception):
    """Base class for toolkit errors."""


class InvalidControlError(RclabError, ValueError):
    """A strict or singular control violates its admissibility constraints."""


class InvalidMeasureError(RclabError, ValueError):
    """A weight row is not a probability vector on the action grid."""


class InconsistentInputError(RclabError, ValueError):
    """Inputs were produced on different grids or under different controls."""


class SimulationDivergedError(RclabError, FloatingPointError):
    """The Euler scheme produced a non-finite state."""

    def __init__(self, path, step):
        self.path = int(path)
        self.step = int(step)
        super().__init__(f"non-finite state on path {self.path} at step {self.step}")


class IllConditionedBasisError(RclabError, np.linalg.LinAlgError):
    """Regression normal equations are numerically singular."""


class AdjointDivergedError(RclabError, FloatingPointError):
    """The backward recursion produced a non-finite adjoint value."""


class ExperimentError(RclabError):
    """A pipeline stage failed; ``stage`` names the module that raised."""

    def __init__(self, stage, cause):
        self.stage = str(stage)
        self.cause = cause
        super().__init__(f"[{self.stage}] {type(cause).__name__}: {cause}")
