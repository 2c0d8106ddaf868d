"""
Exception family shared by every module of the toolkit
"""


class MaskAttackError(Exception):
    """Base class for all toolkit errors"""


class AudioFormatError(MaskAttackError, ValueError):
    """WAV file violates the PCM16 mono contract

    Args:
        field (str): Name of the offending header field (e.g. "channels")
        value: The value found in the file
    """

    def __init__(self, field, value, message=None):
        self.field = field
        self.value = value
        super().__init__(message or f"Unsupported WAV {field}: {value}")


class DomainError(MaskAttackError, ValueError):
    """Argument outside the physical domain of a closed-form model"""


class RateMismatchError(MaskAttackError, ValueError):
    """Two clips combined with different sample rates"""


class ShapeError(MaskAttackError, ValueError):
    """Array shapes or lengths do not line up"""


class ConfigError(MaskAttackError, ValueError):
    """Invalid experiment configuration; key names the offending entry"""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class TrainingError(MaskAttackError):
    """Toy ASR training could not run"""


class PreconditionError(MaskAttackError):
    """An operation's input does not satisfy its precondition"""
