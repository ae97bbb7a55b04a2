"""Exception and warning types shared across the package."""


class GraphPropError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(GraphPropError):
    """Invalid experiment configuration (CLI exit code 2)."""


class DataError(GraphPropError):
    """Unreadable or inconsistent input data (CLI exit code 3)."""


class NonFiniteInput(GraphPropError, ValueError):
    """An input array contains NaN or infinite entries."""


class TooFewObserved(GraphPropError, ValueError):
    """Fewer than k+1 observed fibers: the kNN construction is undefined."""


class UnreachableComponent(GraphPropError):
    """A connected component of missing nodes contains no observed node,
    so the grounded Laplacian system is singular there."""


class SingularDegree(GraphPropError):
    """A retained node has degree zero, making the degree matrix singular."""


class EmptyGraph(GraphPropError):
    """The graph has no edges; adjacency normalisation is undefined."""


class NoMissingEntries(GraphPropError):
    """Reconstruction metrics are undefined without missing entries."""


class EmptyEvaluationSet(GraphPropError):
    """Classification accuracy is undefined over an empty id list."""


class InfeasibleFraction(GraphPropError, ValueError):
    """The requested missing fraction cannot satisfy the coverage condition."""


class AllMissing(GraphPropError):
    """Completion requires at least one observed entry."""


class MaxItersExceeded(RuntimeWarning):
    """Iterative diffusion hit the iteration cap; best iterate returned."""


class SingularSystemWarning(RuntimeWarning):
    """The inpainting normal equations were singular; a least-norm
    solution was returned."""


class CoverageViolationWarning(UserWarning):
    """Some node is observed in no acquisition and was excluded."""


class ZeroErrorBandWarning(RuntimeWarning):
    """A band had identically zero error; its PSNR is an infinite sentinel
    and is excluded from the band average."""
