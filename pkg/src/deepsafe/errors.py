"""Exception types shared across the package."""


class DeepSafeError(Exception):
    """Base class for errors raised by this package."""


class NetworkFormatError(DeepSafeError):
    """Network file missing, malformed, or violating a structural invariant."""


class DatasetFormatError(DeepSafeError):
    """Dataset file missing, malformed, or inconsistent."""


class ClusteringError(DeepSafeError):
    """Clustering could not satisfy its contract (e.g. purity unreachable)."""


class VerifierError(DeepSafeError):
    """Internal verifier failure that must not be reported as a verdict."""
