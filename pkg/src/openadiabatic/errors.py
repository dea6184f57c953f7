"""Exception hierarchy shared by the package."""


class ModelError(ValueError):
    """Invalid model description, schedule, or dimension mismatch."""


class NonHermitianError(ModelError):
    """A quantity that must be Hermitian (or real in the coherence basis) is not."""


class JordanError(RuntimeError):
    """The Jordan decomposition could not be computed reliably."""


class StructureAmbiguityError(JordanError):
    """Rank decisions do not yield a consistent Segre characteristic.

    ``singular_values`` holds the singular values examined when the
    decision failed, so callers can pick a different ``tol_rank``.
    """

    def __init__(self, msg, singular_values=None):
        super().__init__(msg)
        self.singular_values = singular_values


class TrackingError(RuntimeError):
    """Decompositions at neighbouring grid nodes cannot be connected."""


class StructureChangeError(TrackingError):
    """Block sizes change between two grid nodes."""

    def __init__(self, msg, interval=None):
        super().__init__(msg)
        self.interval = interval


class EigenvalueCrossingError(StructureChangeError):
    """Two distinct eigenvalue paths come closer than the gap floor."""
