"""Exception types shared across the package."""


class HecnnError(Exception):
    """Base class for all package errors."""


class ParameterError(HecnnError, ValueError):
    pass


class LevelExhaustedError(HecnnError):
    """An operation needed a rescale but the ciphertext is at level 0."""


class LevelMismatchError(HecnnError):
    """Operands live at different levels."""


class ScaleMismatchError(HecnnError):
    """Operands carry incompatible scales."""


class KeyMismatchError(HecnnError):
    """Key material was generated under different parameters."""


class TransparentCiphertextError(HecnnError):
    """Multiplying by an exactly-zero plaintext would yield a keyless ciphertext."""


class EncodingOverflowError(HecnnError):
    """Scaled values do not fit the remaining modulus."""


class SingularFitError(HecnnError):
    """The least-squares system for a polynomial fit is rank deficient."""


class ShapeError(HecnnError, ValueError):
    """Tensor shapes do not chain through the model graph."""


class ModelFormatError(HecnnError, ValueError):
    """A model file is malformed."""


class UnfusedBatchNormError(HecnnError):
    """Level planning requires batch normalization to be fused away first."""


class UnfoldedPoolError(HecnnError):
    """The engine refuses average pooling whose 1/area factor was not folded."""


class PlanExceedsBudgetError(HecnnError):
    """The static level plan does not fit the parameter preset."""


class BackendMixError(HecnnError):
    """Handles from different backend instances were combined."""


class DataFormatError(HecnnError, ValueError):
    """A dataset file is malformed."""
