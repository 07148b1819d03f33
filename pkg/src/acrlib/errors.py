"""Exception hierarchy shared by the solver modules."""


class AcrError(Exception):
    """Base class for all solver errors."""


class DimensionMismatchError(AcrError, ValueError):
    def __init__(self, message, plane=None):
        super().__init__(message)
        self.plane = plane


class ZeroRightHandSideError(AcrError, ValueError):
    """Relative residual is undefined for a zero right-hand side."""


class StructureMismatchError(AcrError, ValueError):
    """Operands of an H-matrix operation live on different block cluster trees."""


class MemoryCapError(AcrError, MemoryError):
    """Materialising a leaf would exceed the configured memory cap."""


class SingularBlockError(AcrError, ArithmeticError):
    """A pivot block is numerically singular.

    ``cluster`` names the offending cluster range (start, stop) when the failure
    happens inside an H-matrix inversion; ``level`` and ``plane`` locate it
    within a cyclic reduction.
    """

    def __init__(self, message, cluster=None, level=None, plane=None):
        super().__init__(message)
        self.cluster = cluster
        self.level = level
        self.plane = plane

    def located(self, level, plane):
        where = f"level {level}, plane {plane}: {self.args[0]}"
        return SingularBlockError(where, cluster=self.cluster, level=level, plane=plane)


class IndefiniteError(AcrError, ArithmeticError):
    """CG breakdown: the operator is not positive definite along a search direction."""


class DivergenceError(AcrError, ArithmeticError):
    """Iterative refinement residual grew for several consecutive steps."""


class ScheduleError(AcrError, ValueError):
    """Invalid worker count or plane count for a parallel plan."""
