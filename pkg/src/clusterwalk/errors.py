"""Exception hierarchy. ``exit_code`` is what the command line returns."""


class ClusterWalkError(Exception):
    exit_code = 4


class ParameterError(ClusterWalkError, ValueError):
    exit_code = 2


class OutOfRegionError(ClusterWalkError, KeyError):
    """A site was queried outside the materialized region."""

    exit_code = 2

    def __str__(self):
        return Exception.__str__(self)


class CapacityError(ClusterWalkError):
    exit_code = 3


class GrowthCapError(CapacityError):
    """Lazy cluster growth exceeded its site cap; ``partial`` holds what was grown."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class SupercriticalError(CapacityError):
    pass


class StructuralError(ClusterWalkError):
    """An invariant that holds by construction was violated."""

    exit_code = 4
