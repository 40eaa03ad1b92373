"""Exception taxonomy shared across the package.

Grouped so the CLI can map failures onto stable exit codes:
usage problems -> 1, bad data -> 2, runtime/artifact problems -> 3.
"""


class SpecRNetError(Exception):
    """Base class for all package errors."""


class DataError(SpecRNetError):
    """Problems with user-supplied data (audio, manifests, score sets)."""


class ArtifactError(SpecRNetError):
    """Problems with produced artifacts (weight containers, checkpoints)."""


# --- audio / manifest ---------------------------------------------------

class MalformedWav(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class EmptyAfterTrim(DataError):
    pass


class NoBonafideDir(DataError):
    pass


class MissingClass(DataError):
    pass


# --- features / network -------------------------------------------------

class InputTooShort(DataError):
    pass


class ShapeMismatch(SpecRNetError):
    pass


class DegenerateBatch(SpecRNetError):
    pass


class NoForwardRecorded(SpecRNetError):
    pass


class OutputEmpty(SpecRNetError):
    pass


# --- metrics / experiments ----------------------------------------------

class SingleClass(DataError):
    pass


class EmptySplit(DataError):
    pass


class UnknownProtocol(SpecRNetError):
    pass


# --- weight container ----------------------------------------------------

class CorruptContainer(ArtifactError):
    pass


class CountMismatch(ArtifactError):
    pass


class VersionUnsupported(ArtifactError):
    pass
