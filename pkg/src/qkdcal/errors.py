"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class ValidationError(ValueError):
    """A configuration object violates its invariants."""


class NoDataError(ValueError):
    """An estimator was asked for a value it has no samples for."""


class OutOfRegimeError(ValueError):
    """The error rate is too large for the concavity bound to apply.

    Callers should treat the whole sifted key as compromised.
    """
