"""Exception types shared across the workbench."""


class TermforgeError(Exception):
    """Base class for all workbench errors."""


class AlignmentError(TermforgeError):
    """Parallel files disagree on line count."""


class EmptyCorpusError(TermforgeError):
    """An operation that needs data received an empty corpus."""


class LexiconFormatError(TermforgeError):
    """A lexicon TSV row could not be parsed or validated."""

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class SubwordFormatError(TermforgeError):
    """Malformed subword sequence or merge file."""


class ModelFormatError(TermforgeError):
    """A persisted model file is malformed or has the wrong version."""


class MarkupError(TermforgeError):
    """Annotated-input markup could not be parsed or is inconsistent."""


class TrainingDivergedError(TermforgeError):
    """Training produced a non-finite loss."""


class ConfigError(TermforgeError):
    """Pipeline configuration is missing or invalid."""
