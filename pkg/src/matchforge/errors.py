"""Exception hierarchy.

Every error carries the process exit status the command line maps it to.
"""


class MatchforgeError(Exception):
    exit_code = 1


class ConfigError(MatchforgeError):
    exit_code = 2


class DataError(MatchforgeError):
    exit_code = 3


class ModelError(MatchforgeError):
    exit_code = 4


class TraceError(MatchforgeError):
    exit_code = 5


# corpus
class DanglingReference(DataError):
    pass


class InsufficientData(DataError):
    pass


# ontology
class OntologyError(DataError):
    pass


class CycleDetected(OntologyError):
    pass


class DanglingUri(OntologyError):
    pass


class DuplicateUri(OntologyError):
    pass


class UnknownLanguage(OntologyError):
    pass


class UnknownUri(OntologyError):
    pass


# embedding / model
class EmptyChunk(DataError):
    pass


class NoChunks(DataError):
    pass


class DimensionMismatch(ModelError):
    pass


class NonFiniteLoss(ModelError):
    pass


class CheckpointError(ModelError):
    pass


# filtering
class InvalidPattern(ConfigError):
    pass


# metrics
class MetricError(DataError):
    pass


class SingleClass(MetricError):
    pass


class ZeroRelevant(MetricError):
    pass


class EmptyInput(MetricError):
    pass


class ZeroVector(MetricError):
    pass


# explain
class UnknownPairing(DataError):
    pass


class HiredNotRecommended(DataError):
    pass


# trace
class StorageFailure(TraceError):
    pass


class UnknownRef(TraceError):
    pass


class UnknownId(TraceError):
    pass


class MissingInput(TraceError):
    pass
