"""Schema-guided key-value extraction from OCR'd medical reports."""

__version__ = "0.1.0"
