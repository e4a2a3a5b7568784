"""Exception hierarchy shared by controllers, plant and harness."""

import numpy as np


class AicsimError(Exception):
    pass


class ContractError(AicsimError, ValueError):
    """Inputs violate a shape or dimension contract."""


class ConfigError(AicsimError, ValueError):
    """A configuration value is out of its admissible range or malformed."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class DivergenceError(AicsimError, ArithmeticError):
    """A controller or plant produced a non-finite or runaway value."""

    def __init__(self, message, joint=None, quantity=None):
        self.joint = joint
        self.quantity = quantity
        if joint is not None:
            message = f"{message} (joint {joint})"
        super().__init__(message)


class SimulationError(AicsimError, RuntimeError):
    """The plant model cannot be integrated (e.g. singular mass matrix)."""


def check_finite(values, what):
    """Raise DivergenceError naming the first non-finite entry of ``values``."""
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        raise DivergenceError(f"non-finite {what}", joint=int(bad[0][0]), quantity=what)
