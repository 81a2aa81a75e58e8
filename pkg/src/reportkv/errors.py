"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class ReportKVError(Exception):
    """Base class for all domain errors raised by reportkv."""


class SchemaError(ReportKVError):
    """A schema file could not be parsed or failed validation."""

    def __init__(self, message: str, violations=None, path: str | None = None, line: int | None = None):
        super().__init__(message)
        self.violations = list(violations or [])
        self.path = path
        self.line = line


class ConflictError(SchemaError):
    """A scenario id is already present in the schema."""


class AmbiguousFieldError(ReportKVError):
    def __init__(self, surface: str, candidates):
        self.surface = surface
        self.candidates = list(candidates)
        names = ", ".join(f"{scope}:{key}" for scope, key in self.candidates)
        super().__init__(f"field name {surface!r} is ambiguous: {names}")


class OcrFormatError(ReportKVError):
    """Malformed OCR input. ``index`` names the offending segment when known."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"segment {index}: {message}")
        self.index = index


class OcrValidationError(OcrFormatError):
    pass


class ResponseParseError(ReportKVError):
    """A model response did not contain the expected fenced block."""

    def __init__(self, message: str, response: str):
        super().__init__(message)
        self.response = response


class NormalizationError(ReportKVError, ValueError):
    """Base for per-record failures; ``raw`` carries the offending text."""

    code = "normalization_error"

    def __init__(self, message: str, raw=None):
        super().__init__(message)
        self.raw = raw


class UnitError(NormalizationError):
    code = "unit_error"

    def __init__(self, source_unit: str, canonical_unit: str | None):
        super().__init__(f"cannot convert {source_unit!r} to {canonical_unit!r}", raw=source_unit)
        self.source_unit = source_unit
        self.canonical_unit = canonical_unit


class OptionError(NormalizationError):
    code = "option_error"


class CoercionError(NormalizationError):
    code = "type_error"


class GatewayError(ReportKVError):
    """Anything that went wrong talking to (or replaying) a model provider."""


class ProviderConfigError(GatewayError):
    pass


class TransportError(GatewayError):
    pass


class EmptyResponseError(GatewayError):
    pass


class CassetteMiss(GatewayError):
    def __init__(self, fingerprint: str):
        super().__init__(f"no cassette entry for fingerprint {fingerprint}")
        self.fingerprint = fingerprint
