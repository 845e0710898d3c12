"""Exception taxonomy.

Two bases: DataError for anything wrong with input files or dataset
contents (CLI exit code 3), NumericError for numerical failures during
model building or training (CLI exit code 4).
"""


class EcgShapeGanError(Exception):
    pass


class DataError(EcgShapeGanError):
    pass


class NumericError(EcgShapeGanError):
    pass


# record ingestion
class MalformedHeader(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class TruncatedData(DataError):
    pass


class MalformedLine(DataError):
    pass


class NonMonotoneIndex(DataError):
    pass


class AnnotationOutOfRange(DataError):
    pass


class ChannelLengthMismatch(DataError):
    pass


# preprocessing
class InvalidCutoff(DataError):
    pass


class DegenerateSignal(DataError):
    pass


class EmptyClass(DataError):
    pass


# shape model
class TooFewSignals(DataError):
    pass


class DegenerateCluster(NumericError):
    pass


# autodiff / networks
class ShapeMismatch(NumericError):
    pass


class NonFiniteValue(NumericError):
    pass


class NotScalarOutput(NumericError):
    pass


class UnsupportedSecondOrder(NumericError):
    pass


# training
class NonFiniteLoss(NumericError):
    pass


# metrics
class EmptySequence(DataError):
    pass


class EmptySet(DataError):
    pass
