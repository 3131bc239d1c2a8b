"""Exception hierarchy shared by every cadlabel module."""


class CadLabelError(Exception):
    """Base class for all library errors."""


class ValidationError(CadLabelError):
    """Input data violates a documented contract."""


class EmptyMesh(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IndexOutOfRange(ParseError):
    pass


class ManifestError(ValidationError):
    pass


class UnmatchedObject(ManifestError):
    pass


class AmbiguousObject(ManifestError):
    pass


class ClassUnknown(ManifestError):
    pass


class CloudFormatError(ValidationError):
    pass


class BadMagic(CloudFormatError):
    pass


class BadVersion(CloudFormatError):
    pass


class BadHeader(CloudFormatError):
    pass


class TruncatedFile(CloudFormatError):
    pass


class IntensityOutOfRange(CloudFormatError):
    pass


class LabelOutOfRange(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class UnlabeledPoint(ValidationError):
    pass


class TaxonomyMismatch(ValidationError):
    pass


class EmptyMatrix(ValidationError):
    pass


class ZeroTotal(ValidationError):
    pass


class OverlapError(ValidationError):
    pass


class InvariantViolation(CadLabelError):
    """An internal consistency check failed; indicates a bug."""
