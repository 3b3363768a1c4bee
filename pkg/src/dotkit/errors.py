"""Exception hierarchy shared across the toolkit.

Every error carries a short ``category`` tag used by the command-line
front end to emit one categorized diagnostic line.
"""


class DotkitError(Exception):
    """Base class for all toolkit errors."""

    category = "error"


class ParameterError(DotkitError, ValueError):
    """A physical parameter or argument is outside its valid domain."""

    category = "parameter"


class GridTooCoarseError(DotkitError):
    """A delay/energy grid is too coarse for the requested operation."""

    category = "grid"


class GridCoverageError(DotkitError):
    """A grid does not cover the range the operation needs."""

    category = "grid"


class EmptyWindowError(DotkitError):
    """A sampling or normalization window is empty or degenerate."""

    category = "grid"


class EmptyPlateauError(DotkitError):
    """The normalization window contains too few populated bins."""

    category = "data"


class DegenerateDataError(DotkitError):
    """Data carries no information for the requested fit."""

    category = "data"


class FitFailureError(DotkitError):
    """A least-squares fit failed to converge."""

    category = "fit"


class PlantDestroyedError(DotkitError):
    """The tuning plant was destroyed (or already was) by an exposure."""

    category = "plant"


class UnreachableTargetError(DotkitError):
    """Requested energy target is red of the current line; strain tuning
    only blue-shifts, so a Stark bias or another emitter is needed."""

    category = "unreachable"


class BudgetExhaustedError(DotkitError):
    """Exposure budget ran out before the controller converged."""

    category = "budget"


class InfeasibleLayoutError(DotkitError):
    """Crosstalk between selected emitters is too strong for independent
    tuning to converge."""

    category = "layout"


class ConfigError(DotkitError):
    """A run configuration failed validation."""

    category = "config"
