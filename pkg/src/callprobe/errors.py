"""Exception types shared across the toolkit."""


class CallprobeError(Exception):
    """Base class for all toolkit errors."""


class SignalTooShort(CallprobeError):
    """Waveform shorter than one analysis frame."""


class ConfigError(CallprobeError):
    """Inconsistent spectral or classifier configuration."""


class EmptySequence(CallprobeError):
    """An operation received a sequence with zero frames."""


class FormatError(CallprobeError):
    """Malformed store, manifest or checkpoint file."""


class DimMismatch(CallprobeError):
    """Embedding dimensionality disagrees within a store or with its manifest."""


class NonFiniteValue(CallprobeError):
    """NaN or Inf encountered where finite values are required."""


class ShapeMismatch(CallprobeError):
    """Model input incompatible with the parameter shapes."""


class NonTemporalInput(CallprobeError):
    """A recurrent probe was handed a sequence with no temporal ordering."""


class NonFiniteGradient(CallprobeError):
    """A training step produced NaN or Inf gradients."""


class NoCentreCall(CallprobeError):
    """No annotation overlaps the segment at all; labelling is impossible."""


class TooFewRecordings(CallprobeError):
    """Fewer source recordings than requested folds."""


class DegenerateClass(CallprobeError):
    """A ranking metric is undefined: the class has no positives (or no negatives)."""


class AllClassesDegenerate(CallprobeError):
    """Every class is degenerate; no macro metric can be formed."""


class LeakageError(CallprobeError):
    """A test-fold segment reached a training or development set."""


class SpecError(CallprobeError):
    """Invalid experiment specification file."""


class MissingLayerStore(SpecError):
    """A sweep references a layer store file that does not exist."""
