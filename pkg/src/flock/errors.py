"""Exception hierarchy shared across the engine."""


class FlockError(Exception):
    """Base class for all engine errors."""

    code = "error"


# --- catalog ---------------------------------------------------------------

class DuplicateResource(FlockError):
    code = "duplicate_resource"


class InvalidDefinition(FlockError):
    code = "invalid_definition"


class NotFound(FlockError):
    code = "not_found"


class VersionNotFound(FlockError):
    code = "version_not_found"


# --- sql frontend ----------------------------------------------------------

class SqlError(FlockError):
    code = "sql_error"


class SyntaxError_(SqlError):
    """Parse failure carrying source position and an expected-token hint."""

    code = "syntax_error"

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class BindingError(SqlError):
    code = "binding_error"


class UnknownResource(SqlError):
    code = "unknown_resource"


class MisplacedAggregate(SqlError):
    code = "misplaced_aggregate"


class GenerationFailed(FlockError):
    """Natural-language-to-SQL generation produced no parseable statement."""

    code = "generation_failed"


# --- engine ----------------------------------------------------------------

class IoError(FlockError):
    code = "io_error"


class RaggedRow(FlockError):
    code = "ragged_row"


class ExecError(FlockError):
    """Execution failure wrapping the plan node where it occurred."""

    code = "exec_error"

    def __init__(self, node_id: int, message: str):
        super().__init__(f"node {node_id}: {message}")
        self.node_id = node_id


# --- provider --------------------------------------------------------------

class ProviderError(FlockError):
    """Typed provider failure. ``kind`` drives retry and batch-shrink policy."""

    code = "provider_error"

    CONTEXT_OVERFLOW = "ContextOverflow"
    RATE_LIMITED = "RateLimited"
    TRANSIENT = "Transient"
    FATAL = "Fatal"

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind

    @property
    def retryable(self) -> bool:
        return self.kind in (self.RATE_LIMITED, self.TRANSIENT)


class UnknownModel(FlockError):
    code = "unknown_model"


# --- prompting / functions -------------------------------------------------

class HeterogeneousRows(FlockError):
    code = "heterogeneous_rows"


class TemplateError(FlockError):
    code = "template_error"


class DomainError(FlockError):
    code = "domain_error"


# --- retrieval -------------------------------------------------------------

class DuplicateDocId(FlockError):
    code = "duplicate_doc_id"


class DimensionMismatch(FlockError):
    code = "dimension_mismatch"


class ZeroVector(FlockError):
    code = "zero_vector"
