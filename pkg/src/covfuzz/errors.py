"""Exception types raised by the fuzzing toolkit."""


class CovfuzzError(Exception):
    """Base class for all toolkit errors."""


class MalformedHeaderError(CovfuzzError):
    """Container magic, header length, or header JSON is invalid."""


class TruncatedBlobError(CovfuzzError):
    """A parameter or sample blob ends before its declared length."""


class ShapeMismatchError(CovfuzzError):
    """Declared shapes are internally inconsistent or do not chain."""


class UnsupportedLayerError(CovfuzzError):
    """A layer kind outside the supported set was requested."""


class EmptyModelError(CovfuzzError):
    """A model container declared zero layers."""


class ProfileMismatchError(CovfuzzError):
    """Activation records do not match the neuron layout of the profile."""


class ConfigError(CovfuzzError):
    """A campaign or fixture configuration failed validation."""


class SearchExhaustedError(CovfuzzError):
    """The game tree has no selectable child left at the current root."""
