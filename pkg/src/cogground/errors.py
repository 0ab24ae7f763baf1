"""Exception hierarchy shared across the package.

Two broad families matter for the CLI exit-code contract: validation
errors (bad input data or configuration, exit code 1) and runtime errors
(transport failures, protocol violations, exit code 2).
"""


class CogError(Exception):
    """Base class for all package errors."""


class ValidationError(CogError):
    """Bad input data or configuration."""


class RuntimeFailure(CogError):
    """Operational failure while executing an otherwise valid request."""


# -- corpus ----------------------------------------------------------------

class CorpusParseError(ValidationError):
    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class DuplicateIdError(ValidationError):
    pass


class DanglingReferenceError(ValidationError):
    pass


class EmptyInputError(ValidationError):
    pass


# -- scorer ----------------------------------------------------------------

class ScorerError(RuntimeFailure):
    pass


class TransportError(ScorerError):
    pass


class MalformedResponseError(ScorerError):
    pass


class OutOfRangeScoreError(ScorerError):
    def __init__(self, value, index=None):
        where = "" if index is None else f" at index {index}"
        super().__init__(f"score {value!r}{where} outside [0, 1]")
        self.value = value
        self.index = index


class BatchScoreError(ScorerError):
    """Wraps the first failing element of a batch with its index."""

    def __init__(self, index, cause):
        super().__init__(f"batch element {index} failed: {cause}")
        self.index = index
        self.cause = cause


class MissingProvenanceError(ValidationError):
    pass


# -- fusion ----------------------------------------------------------------

class ContributionDomainError(ValidationError):
    pass


class EmptyConceptListError(ValidationError):
    pass


class UnknownConceptError(ValidationError):
    pass


# -- contrastive -----------------------------------------------------------

class DimensionMismatchError(ValidationError):
    pass


# -- eval ------------------------------------------------------------------

class InsufficientNegativesError(ValidationError):
    pass


class PositiveMissingError(RuntimeFailure):
    pass


# -- service ---------------------------------------------------------------

class DuplicateItemError(ValidationError):
    pass


class ItemNotFoundError(ValidationError):
    pass


class AlreadyDecidedError(ValidationError):
    pass
