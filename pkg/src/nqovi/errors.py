"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid sizes, parameters or missing configuration data."""


class GenerationError(ValueError):
    """A random instance could not be built under the requested constraints."""


class ModelValidationError(ValueError):
    """A model violates a hard structural requirement (e.g. non-stochastic kernels)."""


class NumericError(ArithmeticError):
    """Non-finite values or inconsistent numerical state."""


class CapacityError(RuntimeError):
    """An enumeration guard was exceeded."""


class SolverError(RuntimeError):
    """An exact stage-game solver failed to produce an equilibrium."""


class ContractError(ValueError):
    """A caller violated an operation's preconditions."""
