"""Exception hierarchy shared by all modules."""


class CMCFlowError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(CMCFlowError, ValueError):
    pass


class ChartViolation(CMCFlowError):
    """A point was passed to the metric with |x| <= 1."""


class QuadratureUnderResolved(CMCFlowError):
    pass


class NonPositiveRadius(CMCFlowError):
    pass


class GraphConditionViolated(CMCFlowError):
    """The normal is not transversal to the radial direction somewhere."""


class InnerSphereNotEnclosed(CMCFlowError):
    pass


class UnsupportedOrder(CMCFlowError, ValueError):
    pass


class CurvatureHypothesisViolated(CMCFlowError):
    pass


class BasisTooLarge(CMCFlowError, ValueError):
    pass


class EigensolverFailure(CMCFlowError):
    pass


class VolumeSolveFailure(CMCFlowError):
    pass


class InsufficientHistory(CMCFlowError):
    pass


class DegenerateFit(CMCFlowError):
    pass


class CommonGraphFailure(CMCFlowError):
    pass


# Failures that end a flow run with status ``graph_failure``.
GEOMETRY_ERRORS = (
    ChartViolation,
    NonPositiveRadius,
    GraphConditionViolated,
    VolumeSolveFailure,
    InnerSphereNotEnclosed,
)
