"""Exception and warning types shared across the package."""


class MutlocError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatch(MutlocError, ValueError):
    pass


class EvenKernel(MutlocError, ValueError):
    pass


class NearSingularRotation(MutlocError, ValueError):
    """Rotation angle too close to pi for a well-defined logarithm."""


class InvalidPose(MutlocError, ValueError):
    pass


class EmptyBatch(MutlocError, ValueError):
    pass


class LengthMismatch(MutlocError, ValueError):
    pass


class EmptyModel(MutlocError, ValueError):
    pass


class EmptyLog(MutlocError, ValueError):
    pass


class AllObservationsRejected(MutlocError):
    """Every rendezvous observation failed the roll/pitch gate."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NotConnected(MutlocError):
    pass


class SingularNormalEquations(MutlocError):
    def __init__(self, message, damping):
        super().__init__(f"{message} (damping={damping:.3g})")
        self.damping = damping


class PredictorFailure(MutlocError):
    def __init__(self, iteration, cause):
        super().__init__(f"predictor failed at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


class InfeasibleScenario(MutlocError, ValueError):
    pass


class MissingRendezvous(MutlocError, KeyError):
    pass


class ConfigError(MutlocError, ValueError):
    """Invalid scenario configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.field = field
        self.line = line


class FormatError(MutlocError, ValueError):
    """Malformed text file (trajectory, graph, tensor, point cloud)."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = str(path)
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class GimbalLockWarning(UserWarning):
    """Pitch is within 1e-3 rad of +-pi/2; roll and yaw are not separable."""


class PipelineError(MutlocError):
    """A module error raised while processing one rendezvous (or one stage)."""

    def __init__(self, where, cause):
        super().__init__(f"{where}: {type(cause).__name__}: {cause}")
        self.where = where
        self.cause = cause
