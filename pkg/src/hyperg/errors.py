"""Exception hierarchy shared across the package."""


class HypergError(Exception):
    """Base class for all package errors."""


class MalformedJson(HypergError):
    pass


class MalformedCsv(HypergError):
    pass


class RaggedRows(HypergError):
    pass


class EmptyTable(HypergError):
    pass


class AugmenterUnavailable(HypergError):
    pass


class EmptyCompletion(HypergError):
    pass


class NotAPermutation(HypergError):
    pass


class ShapeMismatch(HypergError):
    pass


class EmptySegment(HypergError):
    pass


class NonFiniteValue(HypergError):
    pass


class MissingMarker(HypergError):
    pass


class DuplicateMarker(HypergError):
    pass


class LogNotEnabled(HypergError):
    pass


class LengthMismatch(HypergError):
    pass


class EmptyCorpus(HypergError):
    pass


class InvalidSpec(HypergError):
    pass
