"""Exception types raised across the package."""


class InputError(ValueError):
    """Malformed numerical input (shape, symmetry, non-finite entries)."""


class FactorizationError(ArithmeticError):
    """A factorization could not be completed (rank deficiency, not SPD)."""


class CutLocusError(ValueError):
    """Two subspaces have a principal angle at (or numerically near) pi/2."""


class StepTooLargeError(ArithmeticError):
    """The reduced resolvent system of a Cayley-type retraction is singular."""


class DegenerateCurvatureError(ArithmeticError):
    """Second directional derivative is not positive; no Hessian step exists."""


class ContractError(ValueError):
    """A caller violated an operation precondition (e.g. non-descent direction)."""


class ConfigError(ValueError):
    """Invalid experiment or solver configuration."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
