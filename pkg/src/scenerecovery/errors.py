"""Exception types shared across the package.

Most derive from ValueError so callers that only care about "bad input"
can catch the builtin; the concrete classes exist so tests and CLI code
can tell failure modes apart.
"""


class ShapeMismatch(ValueError):
    """Operands have incompatible shapes."""


class FormatError(ValueError):
    """File decoded, but not into the expected raster layout."""


class EmptyInput(ValueError):
    """An operation received an empty array."""


class DomainError(ValueError):
    """A value lies outside the mathematical domain of the operation."""


class DegenerateRange(ValueError):
    """A stretch was requested on a constant (zero-width) channel."""


class BadWindow(ValueError):
    """Window size is not a positive odd integer."""


class NegativeDepth(ValueError):
    """Depth map contains negative values."""


class MissingDepth(ValueError):
    """Scene kind requires a depth map and none was given."""


class EmptySet(ValueError):
    """A sampling set has no entries."""


class EmptyCorpus(ValueError):
    """No usable images found when building a dataset manifest."""


class ZeroVector(ValueError):
    """Cosine-style loss received a (near-)zero vector."""


class DegenerateAnchor(ValueError):
    """Contrastive loss denominator vanished (degraded == truth at a tap)."""


class ConfigMismatch(ValueError):
    """Checkpoint parameters do not fit the network configuration."""


class IndivisibleSpatialDims(ValueError):
    """Spatial dimensions violate the fusion network's divisibility rule."""


class ModelMissing(FileNotFoundError):
    """A required parameter/model file is absent."""


class TooSmall(ValueError):
    """Image is smaller than the metric's minimum supported size."""


class PairMismatch(ValueError):
    """Restored/truth directories do not contain aligned file pairs."""


class NonFiniteLoss(RuntimeError):
    """Training produced a NaN/Inf loss; carries the offending step index."""

    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value
