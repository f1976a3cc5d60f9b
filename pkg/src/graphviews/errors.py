"""Exception hierarchy shared by all graphviews modules.

Validation problems (bad input data, malformed queries, infeasible
requests) derive from ValidationError and map to CLI exit code 2.
Resource-cap problems derive from BudgetExceededError and map to exit
code 3.
"""


class GraphViewsError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(GraphViewsError):
    """Input failed a structural or semantic check."""

    def __init__(self, message: str, *, line: int | None = None):
        super().__init__(message)
        self.line = line

    def __str__(self) -> str:
        base = super().__str__()
        if self.line is not None:
            return f"line {self.line}: {base}"
        return base


class BudgetExceededError(GraphViewsError):
    """A configured exploration or materialization cap was hit."""


# graph store
class UnknownVertexTypeError(ValidationError):
    pass


class UnknownEdgeTripleError(ValidationError):
    pass


class DanglingEdgeEndpointError(ValidationError):
    pass


class DuplicateIdError(ValidationError):
    pass


class MalformedRowError(ValidationError):
    pass


class UnknownVertexError(ValidationError):
    pass


# query language
class QuerySyntaxError(ValidationError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class UnboundNameError(ValidationError):
    pass


class UnsupportedConstructError(ValidationError):
    pass


# cost model
class DomainError(ValidationError):
    pass


class HeterogeneousInputError(ValidationError):
    pass


# executor
class TypeNotInSchemaError(ValidationError):
    pass


class PropertyTypeMismatchError(ValidationError):
    pass


# view enumeration / rewriting
class NameEliminatedButReferencedError(ValidationError):
    pass


class RewriteInfeasibleError(ValidationError):
    """The view cannot reproduce the query's results exactly."""


# view manager
class MixedTypeAggregationError(ValidationError):
    pass


class CorruptCatalogError(ValidationError):
    pass


# generators / CLI
class InvalidParamsError(ValidationError):
    pass
