"""Exception types raised by the clustering pipelines."""


class SpeclusterError(Exception):
    """Base class for all library errors."""


class MalformedInput(SpeclusterError):
    """Unparseable or inconsistent input data."""


class ZeroDegreeRow(SpeclusterError):
    """Kernel rows with (near-)zero degree make the weighting matrix singular.

    Carries the offending row indices so the caller can prune them.
    """

    def __init__(self, rows):
        self.rows = list(rows)
        super().__init__(f"kernel rows with degree below floor: {self.rows}")


class NonRealSpectrum(SpeclusterError):
    """Retained eigenpairs have a non-negligible imaginary part."""


class DegenerateCodebook(SpeclusterError):
    """Fewer distinct sign patterns among training points than clusters."""


class EmptyCluster(SpeclusterError):
    """A cluster referenced by a partition has no members."""


class SingularSystem(SpeclusterError):
    """A per-step linear system is numerically singular."""

    def __init__(self, component, cond):
        self.component = component
        self.cond = cond
        super().__init__(
            f"linear system for component {component} is ill-conditioned (cond ~ {cond:.3e})"
        )


class AllCandidatesFailed(SpeclusterError):
    """Every grid cell of a model-selection run failed."""
