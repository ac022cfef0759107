"""Exception types shared across the engine."""


class CrosslakeError(Exception):
    """Base class for all engine errors."""


# -- corpus --
class MalformedCsv(CrosslakeError):
    pass


class EmptyTable(CrosslakeError):
    pass


class EmptyDocument(CrosslakeError):
    pass


# -- profiler --
class EmptySet(CrosslakeError):
    pass


class EmptyQuerySet(CrosslakeError):
    pass


class IncompatibleSignatures(CrosslakeError):
    pass


class DimensionMismatch(CrosslakeError):
    pass


# -- weak labeling --
class EmptyModality(CrosslakeError):
    pass


class MissingIndex(CrosslakeError):
    pass


class InsufficientGold(CrosslakeError):
    """Raised only when fallback is disabled; normally downgraded to a warning."""


class DegenerateMatrix(CrosslakeError):
    pass


class NonFiniteLoss(CrosslakeError):
    pass


# -- joint representation --
class NoTriplets(CrosslakeError):
    pass


# -- graph / queries --
class UnknownDE(CrosslakeError):
    pass


class IndexMissing(CrosslakeError):
    pass


class ModelMissing(CrosslakeError):
    pass


# -- evaluation --
class EmptyTruth(CrosslakeError):
    pass


class InvalidSpec(CrosslakeError):
    pass


# -- artifacts --
class ArtifactError(CrosslakeError):
    pass


class StaleArtifact(ArtifactError):
    pass
