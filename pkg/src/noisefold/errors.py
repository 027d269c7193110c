"""Exception types shared across the package."""


class NoisefoldError(Exception):
    """Base class for all package-specific errors."""


class CapacityError(NoisefoldError):
    """A requested Hilbert-space or expansion size exceeds the configured cap."""


class DimensionError(NoisefoldError):
    """Operator dimensions do not match the requested factorization."""


class ConventionError(NoisefoldError):
    """An operator convention mismatch that would silently change prefactors."""


class InstabilityError(NoisefoldError):
    """A time integration left its validity regime (blow-up, trace drift)."""


class UnsupportedOrderError(NoisefoldError):
    """A perturbative order not representable in the selected noise mode."""


class ConfigError(NoisefoldError):
    """A run configuration failed validation."""
