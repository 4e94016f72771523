"""
Error types
Every failure raised by the library derives from CosGaussError.
Argument-style failures also derive from ValueError so plain
`except ValueError` call sites keep working.
"""


class CosGaussError(Exception):
    """Base class for all cosgauss_frontend errors"""


class AudioFormatError(CosGaussError, ValueError):
    """The file is not a well-formed RIFF/WAVE file"""


class UnsupportedAudioError(CosGaussError, ValueError):
    """Well-formed WAV that is not 16-bit PCM mono"""


class TooShortError(CosGaussError, ValueError):
    """Not enough samples or frames for the requested operation"""


class FilterbankConfigError(CosGaussError, ValueError):
    """Invalid filterbank parameters or a frame shorter than the kernel"""


class ShapeMismatchError(CosGaussError, ValueError):
    """Array shapes do not satisfy an operation's contract"""


class EmptySequenceError(CosGaussError, ValueError):
    """A recurrent layer received a sequence of length zero"""


class GradientCheckError(CosGaussError):
    """The checked objective returned a non-finite value"""


class ManifestError(CosGaussError, ValueError):
    """Empty, malformed or single-class manifest"""


class CheckpointError(CosGaussError):
    """Base class for checkpoint problems"""


class CheckpointParseError(CheckpointError, ValueError):
    """Checkpoint file is not valid JSON or violates the schema"""


class UnsupportedCheckpointVersionError(CheckpointError):
    """Checkpoint format_version is not understood by this release"""


class IncompatibleCheckpointError(CheckpointError, ValueError):
    """Checkpoint parameters do not fit the target model"""


class ConfigError(CosGaussError, ValueError):
    """Unknown key, unparsable value or violated constraint in a config"""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class FoldFailedError(CosGaussError):
    """A cross-validation fold aborted; carries the failing fold id"""

    def __init__(self, fold_id: int, cause: Exception):
        super().__init__(f"fold {fold_id} failed: {type(cause).__name__}: {cause}")
        self.fold_id = fold_id
        self.cause = cause


class TrainingError(CosGaussError):
    """Training produced a non-finite loss"""
