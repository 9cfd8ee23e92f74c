"""Exception hierarchy shared across the engine."""


class MilpforgeError(Exception):
    """Base class for all engine errors."""


# --- state ---------------------------------------------------------------

class DuplicateSymbol(MilpforgeError):
    pass


class InvalidShape(MilpforgeError):
    pass


class InvalidSymbol(MilpforgeError):
    pass


class UnknownClause(MilpforgeError):
    pass


class StatusRegression(MilpforgeError):
    """Clause status moved backwards outside an explicit reset."""


class UnknownSymbol(MilpforgeError):
    pass


class ShapeMismatch(MilpforgeError):
    pass


class SchemaViolation(MilpforgeError):
    """Malformed persisted file. Carries the JSON path of the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


# --- model IR ------------------------------------------------------------

class ParseError(MilpforgeError):
    """Formulation text rejected by the linear grammar. Carries a source span."""

    def __init__(self, message, span=None):
        if span is not None:
            message = f"{message} (at {span[0]}..{span[1]})"
        super().__init__(message)
        self.span = span


class NonlinearTerm(ParseError):
    pass


class MissingData(MilpforgeError):
    def __init__(self, symbol):
        super().__init__(f"no data bound for '{symbol}'")
        self.symbol = symbol


class IndexOutOfRange(MilpforgeError):
    pass


class UnrepresentableAnnotation(MilpforgeError):
    pass


# --- llm gateway ---------------------------------------------------------

class MissingPlaceholder(MilpforgeError):
    def __init__(self, name):
        super().__init__(f"unbound placeholder '{name}'")
        self.name = name


class Unparseable(MilpforgeError):
    """LLM output never produced a valid structured block within the retry budget."""

    def __init__(self, attempts):
        super().__init__(f"unparseable after {len(attempts)} attempts")
        self.attempts = attempts


class TransportError(MilpforgeError):
    pass


class TranscriptMiss(MilpforgeError):
    def __init__(self, fingerprint, template):
        super().__init__(f"transcript has no entry for {template}:{fingerprint}")
        self.fingerprint = fingerprint
        self.template = template


# --- pipeline ------------------------------------------------------------

class PipelineError(MilpforgeError):
    pass


class NoObjectiveFound(PipelineError):
    pass


class ObjectiveConflict(PipelineError):
    pass


class StagePrecondition(PipelineError):
    pass


class DebugExhausted(PipelineError):
    def __init__(self, attempts, last_failure):
        super().__init__(f"debugging gave up after {attempts} attempts: {last_failure}")
        self.attempts = attempts
        self.last_failure = last_failure


# --- error correction ----------------------------------------------------

class UnknownTarget(MilpforgeError):
    pass


class InvalidPayload(MilpforgeError):
    pass


# --- solver --------------------------------------------------------------

class EngineUnavailable(MilpforgeError):
    pass


class EngineFailure(MilpforgeError):
    """Engine reported an error; carries the raw engine message."""

    def __init__(self, raw):
        super().__init__(raw)
        self.raw = raw


class LpSyntaxError(MilpforgeError):
    def __init__(self, line, column, message):
        super().__init__(f"line {line}, col {column}: {message}")
        self.line = line
        self.column = column


# --- sifting -------------------------------------------------------------

class MissingDuals(MilpforgeError):
    pass


class RestrictedInfeasible(MilpforgeError):
    pass


class IterationLimit(MilpforgeError):
    pass


# --- equivalence ---------------------------------------------------------

class SearchBudgetExceeded(MilpforgeError):
    pass
