"""Exception hierarchy shared by all modules."""


class NumericalError(ArithmeticError):
    """A computation could not be carried out reliably in floating point."""


class RankDeficiencyError(NumericalError):
    """The least-squares basis lost rank on the supplied node set."""


class SequenceOverflowError(NumericalError, OverflowError):
    """A sequence value does not fit the representation that was requested."""


class NormalizationError(NumericalError):
    """A partial sum violates the circle normalization required by the decay chain."""

    def __init__(self, k, excess):
        super().__init__(
            f"normalization fails at k={k}: log-norm / degree exceeds ln 2 by {excess:.3e}"
        )
        self.k = k
        self.excess = excess


class InfeasibleSelectionError(ValueError):
    """No admissible gap pair could be placed within the materialized horizon."""

    def __init__(self, k, reason):
        super().__init__(f"selection infeasible at k={k}: {reason}")
        self.k = k


class PlanError(ValueError):
    """A build plan or experiment configuration violates its invariants."""
