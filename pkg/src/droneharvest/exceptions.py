"""Exception hierarchy shared by all planner modules."""


class DroneHarvestError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(DroneHarvestError, ValueError):
    """Path and layout disagree on the number of cluster heads."""


class DomainError(DroneHarvestError, ValueError):
    """A quantity was evaluated outside the set where it is defined."""


class DegenerateSegmentError(DomainError):
    """A path segment has zero length, so its unit tangent is undefined."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"path segment {index} has zero length")


class VertexAtHead(DroneHarvestError):
    """Contraction toward a head was requested for a vertex already on it."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"vertex {index} already coincides with its head")


class CapacityError(DroneHarvestError, ValueError):
    """Problem too large for the exact method; use the heuristic instead."""


class DegenerateBisectorError(DomainError):
    """The length gradient vanishes at a head, so the offset direction is undefined."""

    def __init__(self, index):
        self.index = index
        super().__init__(
            f"length gradient vanishes at head {index}: it lies on the straight "
            "line between its tour neighbours"
        )


class MergePendingError(DroneHarvestError):
    """A segment is at or below the merge threshold; the system is singular."""

    def __init__(self, index, length):
        self.index = index
        self.length = length
        super().__init__(f"segment {index} has length {length:.3g} (merge pending)")


class SingularSystemError(DroneHarvestError):
    """The continuation matrix is singular or too ill-conditioned to solve."""

    def __init__(self, rcond, stage=None):
        self.rcond = rcond
        self.stage = stage
        where = f" at RK4 stage {stage}" if stage is not None else ""
        super().__init__(f"continuation matrix is singular{where} (rcond={rcond:.3g})")


class StageFailure(DroneHarvestError):
    """An RK4 stage could not evaluate the right-hand side."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"RK4 stage {stage} failed: {cause}")


class RangeError(DroneHarvestError, ValueError):
    """Requested path length lies outside the range covered by a trace."""


class ConstraintSlackError(DroneHarvestError, ValueError):
    """The length budget suffices to visit every head; nothing to optimize."""


class InfeasibleError(DroneHarvestError):
    """No feasible point was found for the requested path length."""


class ScenarioError(DroneHarvestError, ValueError):
    """A scenario file or mapping failed validation."""

    def __init__(self, message, field=None, line=None, column=None):
        self.message = message
        self.field = field
        self.line = line
        self.column = column
        loc = []
        if line is not None:
            loc.append(f"line {line}")
            if column is not None:
                loc.append(f"column {column}")
        if field is not None:
            loc.append(f"field '{field}'")
        prefix = f"{', '.join(loc)}: " if loc else ""
        super().__init__(prefix + message)
