"""Exception types shared across the package.

Every error raised on a contract violation is a subclass of
:class:`FashionSynthError` so callers can catch the package's failures
without swallowing unrelated bugs.
"""


class FashionSynthError(Exception):
    """Base class for all package-specific errors."""


# --- array / domain-type validation ---

class ShapeMismatch(FashionSynthError):
    """An array does not have the shape the operation requires."""


class NonSimplex(FashionSynthError):
    """A per-pixel channel vector does not sum to 1 within tolerance."""


class NegativeEntry(FashionSynthError):
    """A probability array contains a negative entry."""


class NonOneHot(FashionSynthError):
    """Hard composition was given masks that are not exactly one-hot."""


class TooSmall(FashionSynthError):
    """Input raster is smaller than the downsampling target."""


class LengthMismatch(FashionSynthError):
    """A vector has the wrong length for its slot in the design coding."""


class EmptySkinRegion(UserWarning):
    """No skin pixels found; skin color dims fall back to 0.5."""


# --- text ---

class EmptyCaption(FashionSynthError):
    """Caption is empty or contains no usable tokens."""


# --- datasets ---

class DatasetError(FashionSynthError):
    """Base class for dataset ingestion failures; message names the file."""


class MissingSegmentation(DatasetError):
    pass


class CaptionMissing(DatasetError):
    pass


class PaletteViolation(DatasetError):
    pass


class DatasetEmpty(FashionSynthError):
    """Training was started with no records."""


# --- training / checkpoints ---

class NonFiniteLoss(FashionSynthError):
    """A loss became NaN or infinite; the training step is reported."""


class MissingCheckpoint(FashionSynthError):
    pass


class StageMismatch(FashionSynthError):
    """A checkpoint was trained for a different stage than requested."""


# --- baselines ---

class PriorShapeMismatch(FashionSynthError):
    """One-step prior has the wrong channel count for the variant."""


# --- evaluation ---

class TooFewIds(FashionSynthError):
    """Caption swapping needs at least two test ids."""


class NoPositives(FashionSynthError):
    """Average precision is undefined without a positive label."""


class InvalidPermutation(FashionSynthError):
    """An item's ranks are not a permutation of 1..#methods."""
