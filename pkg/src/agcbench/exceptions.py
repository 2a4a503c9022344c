"""Exception hierarchy shared across the package."""


class AgcBenchError(Exception):
    """Base class for all errors raised by agcbench."""


class ParameterError(AgcBenchError, ValueError):
    """A physical parameter is outside its admissible range."""

    def __init__(self, message, field=None, area=None):
        super().__init__(message)
        self.field = field
        self.area = area


class TopologyError(AgcBenchError, ValueError):
    """Tie-lines or area identifiers are inconsistent."""


class AreaNotFoundError(TopologyError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "area not found"


class DesignError(AgcBenchError):
    """Terminal ingredient design failed (DARE, LMI, or certificate check)."""

    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin


class QPInfeasibleError(AgcBenchError):
    """The quadratic program has no feasible point.

    ``constraint`` is the index of the constraint that could not be added to
    the working set (inequalities first, then equalities; ``-1`` for the
    ellipsoid), ``violation`` its residual at the point where the solver gave up.
    """

    def __init__(self, message, constraint=None, violation=None, kind=None):
        super().__init__(message)
        self.constraint = constraint
        self.violation = violation
        self.kind = kind


class QPConvergenceError(AgcBenchError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}


class MPCInfeasibleError(AgcBenchError):
    """The MPC problem at some step has no feasible input sequence."""

    def __init__(self, message, step=None, constraint=None):
        super().__init__(message)
        self.step = step
        self.constraint = constraint


class ConstraintViolationError(AgcBenchError):
    """A closed-loop sample left the admissible set beyond tolerance."""


class ScenarioParseError(AgcBenchError, ValueError):
    def __init__(self, message, line=None, field=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.field = field
