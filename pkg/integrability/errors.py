"""
Exception hierarchy shared by the library, the CLI and the HTTP blueprint.

Every error knows the process exit code and the HTTP status it maps to, so
the two outer surfaces never need their own lookup tables.
"""


class IntegrabilityError(Exception):
    """Base class for all errors raised by this package."""
    exit_code = 3
    http_status = 422
    kind = "error"

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self):
        payload = {"kind": self.kind, "message": self.message}
        if self.details:
            payload["details"] = self.details
        return payload


# --- Usage / parse errors (exit 2) ---

class UsageError(IntegrabilityError):
    """Invalid run configuration, domain or quadrature setting."""
    exit_code = 2
    http_status = 400
    kind = "usage"


class ParseError(UsageError):
    kind = "parse"

    def __init__(self, message, offset=None, text=None):
        details = {}
        if offset is not None:
            details["offset"] = offset
        super().__init__(message, **details)
        self.offset = offset
        self.text = text

    def __str__(self):
        if self.offset is None or self.text is None:
            return self.message
        # one-line diagnostic pointing at the offending byte
        return f"{self.message} at offset {self.offset}: {self.text[:self.offset]}<<>>{self.text[self.offset:]}"


class ExpressionSyntaxError(ParseError):
    kind = "syntax"


class UnknownIdentifierError(ParseError):
    kind = "unknown-identifier"


class NonIntegerExponentError(ParseError):
    kind = "non-integer-exponent"


class SeparationError(UsageError):
    """T mentions a coordinate or V mentions a momentum."""
    kind = "separation"


class MethodMismatchError(UsageError):
    """Leapfrog requested for a Hamiltonian that is not of the form T(p) + V(x)."""
    kind = "method-mismatch"


# --- Domain / degenerate errors (exit 3) ---

class DomainError(IntegrabilityError):
    """Evaluation left the domain of an expression (ln of non-positive value, division by zero)."""
    kind = "domain"

    def __init__(self, message, subtree=None, point=None):
        details = {}
        if subtree is not None:
            details["subtree"] = subtree
        if point is not None:
            details["point"] = list(point)
        super().__init__(message, **details)
        self.subtree = subtree
        self.point = point

    def at(self, point):
        """Return a copy of this error bound to a sample point."""
        return type(self)(self.message, subtree=self.subtree, point=point)


class PathDomainError(DomainError):
    kind = "path-domain"


class DegenerateHamiltonianError(IntegrabilityError):
    """H has a vanishing gradient on every sample: it is a constant function."""
    kind = "degenerate"


# --- Invariant construction ---

class UnsupportedClassError(IntegrabilityError):
    """The symbolic path only handles polynomial Hamiltonians."""
    kind = "unsupported-class"


class NonExactError(IntegrabilityError):
    """The Cauchy-Riemann one-form is not exact: the conditions are violated."""
    exit_code = 1
    kind = "non-exact"
