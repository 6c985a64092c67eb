"""Exception hierarchy shared across the package."""


class DGParamError(Exception):
    """Base class for all errors raised by dgparam."""


class NonFiniteInput(DGParamError):
    """An algebraic solve received NaN or infinite inputs."""


class NonFiniteState(DGParamError):
    """A state derivative or output evaluated to NaN or infinity."""


class NoEquilibrium(DGParamError):
    """The steady-state root search failed to converge."""


class SimulationBlewUp(DGParamError):
    """A trajectory left the admissible region (non-finite or |state| > limit)."""

    def __init__(self, time, message=None):
        self.time = float(time)
        super().__init__(message or f"simulation diverged at t={self.time:.6g} s")


class SingularNormalMatrix(DGParamError):
    """Gauss-Newton normal matrix is singular to working precision."""

    def __init__(self, cond, message=None):
        self.cond = float(cond)
        super().__init__(
            message or f"normal matrix condition estimate {self.cond:.3e} exceeds limit"
        )


class StalledIteration(DGParamError):
    """No damping candidate improved the cost after the retry budget."""


class OutOfBounds(DGParamError):
    """A parameter value violates its bound specification."""

    def __init__(self, name, value, lo, hi):
        self.name = name
        self.value = float(value)
        self.lo = float(lo)
        self.hi = float(hi)
        super().__init__(
            f"parameter {name}={value:.6g} outside bounds [{lo:.6g}, {hi:.6g}]"
        )


class BadBounds(DGParamError):
    """A bound specification is internally inconsistent (e.g. lo >= hi)."""


class AllInfeasible(DGParamError):
    """Every population member has zero fitness (infinite cost)."""


class ParseError(DGParamError):
    """A measurement or config file could not be parsed."""

    def __init__(self, line, reason):
        self.line = int(line)
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class NonMonotonicTime(ParseError):
    """Timestamps in a measurement file are not strictly increasing."""

    def __init__(self, line):
        super().__init__(line, "timestamps must be strictly increasing")


class ConfigError(DGParamError):
    """A fit configuration file is invalid."""
