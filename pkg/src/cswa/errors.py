"""Exception types shared across the package.

The CLI maps these onto exit codes: parameter/parse/shape problems exit 2,
numeric divergence exits 3.
"""


class CswaError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(CswaError, ValueError):
    """A parameter, range, or configuration value violates its contract."""


class ShapeError(CswaError, ValueError):
    """Matrix dimensions do not agree."""


class ParseError(CswaError, ValueError):
    """An input file does not match the expected schema."""


class NumericError(CswaError, ArithmeticError):
    """The optimization produced non-finite values (step size too large).

    ``iteration`` and ``chain_id`` are filled in by whichever layer knows
    them, so a diverging run aborts with full provenance.
    """

    def __init__(self, message: str, iteration: int | None = None,
                 chain_id: int | None = None):
        super().__init__(message)
        self.iteration = iteration
        self.chain_id = chain_id

    def __str__(self) -> str:
        where = []
        if self.chain_id is not None:
            where.append(f"chain {self.chain_id}")
        if self.iteration is not None:
            where.append(f"iteration {self.iteration}")
        base = super().__str__()
        return f"{base} ({', '.join(where)})" if where else base
