"""Exception taxonomy shared by all modules."""


class ToolkitError(Exception):
    """Base class for all numerical/contract failures raised by shrinktori."""


class DegenerateMetric(ToolkitError):
    """Induced metric fell below the degeneracy threshold at some node."""

    def __init__(self, node, det, threshold):
        self.node = tuple(int(k) for k in node)
        self.det = float(det)
        self.threshold = float(threshold)
        super().__init__(
            f"induced metric degenerate at node {self.node}: "
            f"det g = {self.det:.3e} <= {self.threshold:.3e}"
        )


class NotLagrangian(ToolkitError):
    """Symplectic residual exceeds the Lagrangian tolerance."""


class NotClosed(ToolkitError):
    """A 1-form failed the discrete closedness check."""


class FrameDegenerate(ToolkitError):
    """Tangent-frame orthonormalization failed (near-parallel derivatives)."""


class NonIntegerPeriod(ToolkitError):
    """Periods of the mean-curvature form are not near integer multiples of pi."""


class ProjectionDiverged(ToolkitError):
    """Lagrangian projection sweeps failed to reduce the symplectic residual."""


class NotShrinker(ToolkitError):
    """Operation requires a map accepted as a numerical self-shrinker."""


class NotCritical(ToolkitError):
    """Operation requires an accepted critical point of the weighted energy."""


class MaxIterations(ToolkitError):
    """Iterative solver hit its iteration cap before meeting its tolerance."""


class InsufficientSamples(ToolkitError):
    """Not enough valid samples were collected for a fit."""


class NoSingularity(ToolkitError):
    """Flow reached t_max with bounded curvature."""


class Blowup(ToolkitError):
    """Adaptive step fell below dt_min: curvature blow-up reached."""


class NotCauchy(ToolkitError):
    """Type-I rescalings failed to settle to a compact limit at this resolution."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class StepRejected(ToolkitError):
    """A flow step degenerated mid-step (internal; triggers dt halving)."""


class NoDecreaseFound(ToolkitError):
    """Perturbation search exhausted its dictionary without a certified entropy drop.

    Signals a resolution or search-budget failure, not impossibility; carries
    the best candidate margin seen.
    """

    def __init__(self, message, best_margin=None):
        super().__init__(message)
        self.best_margin = best_margin


class ShootingFailed(ToolkitError):
    """Closed-curve shooting did not converge for the requested indices."""


class SnapshotError(ToolkitError):
    """Snapshot file malformed (header, count mismatch, or non-finite data)."""


class ConfigError(ToolkitError):
    """Run configuration rejected (unknown key or invalid value)."""
