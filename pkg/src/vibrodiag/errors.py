"""Exception types shared across the package.

Every error carries a ``cli_code`` so the command-line layer can emit a
machine-readable category (CONFIG, IO, PARSE, NUMERIC, CONTRACT) without
inspecting exception types one by one.
"""


class VibrodiagError(Exception):
    """Base class for all errors raised by this package."""

    cli_code = "CONTRACT"


class InvalidParam(VibrodiagError):
    """A parameter is outside its allowed range."""


class EmptySignal(VibrodiagError):
    """Signal shorter than the two samples any transform needs."""


class NonFinite(VibrodiagError):
    """NaN or infinity where finite values are required."""

    cli_code = "NUMERIC"


class TooFewSamples(VibrodiagError):
    """Fewer samples than summary statistics require."""


class EmptyBand(VibrodiagError):
    """Frequency band selects fewer than two spectrum bins."""


class TooFewRows(VibrodiagError):
    """Matrix operation needs more rows than were given."""


class SingularCovariance(VibrodiagError):
    """Covariance factorization failed even after regularization."""

    cli_code = "NUMERIC"


class TooFewPoints(VibrodiagError):
    """Clustering asked for more components than data points."""


class EmptyComponent(VibrodiagError):
    """A mixture component lost all responsibility mass."""


class EmptyCluster(VibrodiagError):
    """A cluster label in 1..k has no member rows."""


class SingleCluster(VibrodiagError):
    """Silhouette needs at least two clusters."""


class DimensionMismatch(VibrodiagError):
    """Query vector width differs from the fitted feature count."""


class SingleClass(VibrodiagError):
    """Classification needs at least two distinct labels."""


class NoOobCoverage(VibrodiagError):
    """No row was left out of every bootstrap sample."""


class ClassTooSmall(VibrodiagError):
    """A class has too few rows for a stratified split."""


class BandOutOfRange(VibrodiagError):
    """Spectrum does not cover the requested analysis band."""


class LengthMismatch(VibrodiagError):
    """Paired sequences have different lengths."""


class EmptyMatrix(VibrodiagError):
    """Confusion matrix has no observations."""


class ConfigError(VibrodiagError):
    """Run configuration is missing or inconsistent."""

    cli_code = "CONFIG"


class ParseError(VibrodiagError):
    """An input file does not match its documented schema."""

    cli_code = "PARSE"
