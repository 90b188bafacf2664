"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A run configuration was rejected (unknown field, bad type, bad value)."""


class EmptyCloud(ValueError):
    """An entropy operation received an empty sample cloud."""


class EmptySamples(ValueError):
    """A Monte Carlo operation received an empty sample set."""


class SaturatedGrid(RuntimeError):
    """Every grid cell was count-limited by the cloud; no slope can be fit."""


class IntegrandUnbounded(RuntimeError):
    """A clock integrand exceeded the divergence cap along the orbit."""


class NotInvertible(RuntimeError):
    """The clock plateaus below the requested time within the search horizon."""


class NotFoundWithinHorizon(RuntimeError):
    """No uniform recurrence constant exists within the search horizon."""


class UncertifiedReport(ValueError):
    """A measure bound was requested against an uncertified recurrence report."""


class DivergedDenominator(RuntimeError):
    """The return-time expectation in a measure transport ratio diverged."""


class DivergedMeasure(RuntimeError):
    """The reweighted invariant mass estimate diverged."""


class WitnessNotFound(RuntimeError):
    """No monotone orbit matching within tolerance; indicates an implementation bug."""
