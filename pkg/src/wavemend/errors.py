"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so new error kinds should
subclass one of the classes below rather than raising bare exceptions.
"""


class WavemendError(Exception):
    """Base class for all package errors."""


class AudioFormatError(WavemendError):
    """A file is not the 16-bit PCM WAV this toolkit reads and writes."""


class DegenerateFrameError(WavemendError):
    """Levinson-Durbin hit a near-singular step; the frame is unusable."""


class BitstreamError(WavemendError):
    """A packed LPC bitstream is truncated or corrupt."""


class ConfigError(WavemendError):
    """Invalid or unreadable experiment configuration."""


class ConfigMismatchError(WavemendError):
    """Two checkpoints disagree on configuration they must share."""


class DependencyError(WavemendError):
    """A pipeline stage was run before the artifacts it depends on exist."""


class CapabilityError(WavemendError):
    """An external tool (codec, scoring binary) is not installed."""


class ExternalToolError(WavemendError):
    """An external command ran but failed; carries its diagnostics."""

    def __init__(self, message, returncode=None, stdout=None, stderr=None):
        super().__init__(message)
        self.returncode = returncode
        self.stdout = stdout
        self.stderr = stderr
