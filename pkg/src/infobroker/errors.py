"""Exception types raised across the package."""


class BrokerModelError(Exception):
    """Base class for all infobroker errors."""


class ZeroProbabilitySignal(BrokerModelError):
    """Conditioning on a signal whose marginal probability is zero."""


class DimensionMismatch(BrokerModelError):
    """Belief / experiment / state-space dimensions are inconsistent."""


class UnattributedSplitting(BrokerModelError):
    """A splitting needs its generating sequential plan to be costed."""


class GridTooCoarse(BrokerModelError):
    """Envelope refinement failed to stabilise at the configured resolution."""


class UnsupportedBelief(BrokerModelError):
    """Operation not defined at this belief for this cost model."""


class NonConvergence(BrokerModelError):
    """Iterative solve exceeded its iteration cap."""


class DiscreteUnsupported(BrokerModelError):
    """Closed-form virtual values need a continuous type distribution."""


class IrregularDistribution(BrokerModelError):
    """Type distribution fails the regularity (concave revenue curve) check."""


class GaussianScenarioError(BrokerModelError):
    """Scenario uses Gaussian sampling costs; use the dedicated solver."""


class CapExceeded(BrokerModelError):
    """Brute-force enumeration caps exceeded."""


class InfeasiblePayments(BrokerModelError):
    """No allocation profile admits incentive compatible payments."""


class FixtureMismatch(BrokerModelError):
    """Hard-coded verification fixture did not reproduce; carries a diff."""


class OrderingViolation(BrokerModelError):
    """A comparative-statics ordering assertion failed."""


class DegenerateParameters(BrokerModelError):
    """Construction parameters sit on a degenerate boundary."""


class ScenarioFormatError(BrokerModelError):
    """Scenario or sweep file violates the published schema."""
