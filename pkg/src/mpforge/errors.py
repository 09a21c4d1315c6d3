"""Exception types shared across the toolchain.

Every stage raises a subclass of MpforgeError so the CLI can attribute
failures to a stage and exit nonzero without a traceback.
"""


class MpforgeError(Exception):
    """Base class for all toolchain errors."""


class GraphError(MpforgeError):
    """Malformed factor graph, network, or parity matrix."""


class CptError(GraphError):
    """CPT table shape or normalization violation."""


class FormatError(MpforgeError):
    """Unparseable input text. Carries a line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EliminationError(MpforgeError):
    """Invalid query/evidence/order for variable elimination."""


class DegenerateEvidenceError(MpforgeError):
    """Evidence with zero probability mass (NORM denominator is 0)."""


class UnboundInputError(MpforgeError):
    """Evaluation request missing bindings for named inputs."""


class KernelError(MpforgeError):
    """Invalid argument to a margin-propagation primitive."""


class MappingError(MpforgeError):
    """Compute graph node with no analog realization."""


class InfeasibleBudgetError(MappingError):
    """No cell variant satisfies the requested budget."""


class NetlistError(MpforgeError):
    """Netlist emission or parse failure. Carries a line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SimulationError(MpforgeError):
    """Behavioral solve failure (cycles, divergence, bad stimulus)."""


class ConvergenceError(SimulationError):
    """Fixed-point settling diverged. Carries the residual trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
