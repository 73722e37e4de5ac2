"""Exception types shared across the package.

Split by how the command-line driver reports them: configuration
problems are user errors, numerical aborts mean a run started but
could not be completed at the requested tolerances.
"""


class ConfigurationError(ValueError):
    """Invalid parameters, malformed config input, or inconsistent state."""


class NumericalAbortError(RuntimeError):
    """A computation exceeded a declared numerical budget."""


class TruncationError(NumericalAbortError):
    """Basis truncation lost more norm than the declared tolerance."""


class ExclusionBudgetError(NumericalAbortError):
    """Too many trajectories were dropped for a density estimate to be trusted."""


class SamplingOverflowError(ConfigurationError):
    """Rejection sampling hit a density value above the inflated envelope bound.

    The envelope is estimated on a fixed grid; an overshoot means the grid
    missed a peak and the bound needs re-estimation, which is a setup
    problem rather than a numerical abort.
    """


class NodeError(RuntimeError):
    """Velocity requested at (or numerically on top of) a node of psi."""
