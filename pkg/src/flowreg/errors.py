"""Exception hierarchy used across the package."""


class FlowRegError(Exception):
    """Base class for all flowreg errors."""


class DimensionError(FlowRegError, ValueError):
    """Operands have inconsistent shapes."""


class InvalidWeightsError(FlowRegError, ValueError):
    """Edge weights must be strictly positive."""


class DisconnectedGraphError(FlowRegError):
    """The Laplacian kernel has dimension larger than one."""


class UnsupportedVariantError(FlowRegError):
    """Operation is not defined for this spec variant."""


class UnbalancedSupplyError(FlowRegError, ValueError):
    """A supply vector or matrix does not sum to zero over the nodes."""


class ConvergenceError(FlowRegError):
    """An iterative solver ran out of iterations."""


class OracleError(FlowRegError):
    """The brute-force oracle detected divergence (cost increased)."""


class RegulatorInfeasibleError(FlowRegError):
    """The regulator equations have no solution.

    Carries the rank-feasibility diagnosis in ``feasible`` and
    ``offending_eigenvalues``.
    """

    def __init__(self, message, feasible=None, offending_eigenvalues=()):
        super().__init__(message)
        self.feasible = feasible
        self.offending_eigenvalues = list(offending_eigenvalues)


class InterconnectionContractError(FlowRegError):
    """A controller input violated its interconnection contract."""


class RequiresOptimizerError(FlowRegError):
    """Matched initialization needs a static optimum that was not supplied."""


class AssemblyError(FlowRegError):
    """Closed-loop components are incompatible."""


class DivergenceError(FlowRegError):
    """The integrated state became non-finite.

    ``time`` holds the simulation time at which divergence was detected.
    """

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ScenarioError(FlowRegError, ValueError):
    """A scenario file failed to parse or validate structurally."""
