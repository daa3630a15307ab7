"""Exception hierarchy.

Input problems derive from ``ValueError`` so callers can treat them uniformly;
``NumericalConsistencyError`` marks results that violate an identity the
mathematics guarantees and therefore signals a bug or severe ill-conditioning.
"""


class ModelError(ValueError):
    """Malformed or invalid model specification."""


class DesignError(ValueError):
    """Sample sizes incompatible with the model."""


class DimensionMismatch(ValueError):
    pass


class NotSPDError(ValueError):
    def __init__(self, which: str):
        super().__init__(f"{which} is not symmetric positive definite")
        self.which = which


class NotSymmetricError(ValueError):
    pass


class ZeroPriorVariance(ValueError):
    pass


class InfinitePopulation(ValueError):
    """A finite-population quantity was requested for an infinite group."""


class MissingData(ValueError):
    def __init__(self, group):
        super().__init__(f"no observations supplied for sampled group {group!r}")
        self.group = group


class NotApplicable(ValueError):
    """A closed-form shortcut was requested outside its preconditions."""


class CapExceeded(ValueError):
    pass


class NumericalConsistencyError(ArithmeticError):
    pass
