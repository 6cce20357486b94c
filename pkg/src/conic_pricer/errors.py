"""Exception types shared across the package."""


class PricerError(Exception):
    """Base class for all conic-pricer errors."""


class ValidationError(PricerError, ValueError):
    """Input data violates a documented contract (bad model, shapes, measurability...)."""


class ComputationError(PricerError, RuntimeError):
    """A numerical routine could not certify its result (LP breakdown, caps exceeded)."""
