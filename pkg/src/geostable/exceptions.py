"""
Exception classes for geostable.

These exceptions are used throughout the geostable package to signal error conditions
during warp sampling, training, checkpointing, dataset I/O and evaluation.
"""


class GeostableError(Exception):
    """Base class for every error raised by geostable."""
    pass


class WarpSamplingError(GeostableError):
    """Raised when rejection sampling cannot produce a valid warp.

    The sampler retries a configurable number of times (default 100). Running
    out of retries means the warp configuration is over-constrained, e.g. a
    translation range so wide that the sampled crop almost never stays inside
    the mirror-padded canvas.
    """
    pass


class NonInvertibleWarpError(GeostableError, ValueError):
    """Raised when an affine warp has |det| <= 1e-6 and cannot be inverted."""
    pass


class DegenerateBatchError(GeostableError):
    """Raised when a pixel-pair batch cannot produce a useful loss.

    Examples:
        - fewer than two anchors whose warp image lands inside the second frame
        - a mined batch with no positive or no negative pairs
        - an objective evaluated over an empty selection
    """
    pass


class ConfigError(GeostableError, ValueError):
    """Raised when a configuration key or value is invalid.

    Covers unknown dotted keys, values that cannot be parsed into the type of
    the default, and values that violate an invariant (tau1 >= tau2,
    nonpositive rates, unknown loss variant, ...).
    """
    pass


class CheckpointError(GeostableError):
    """Raised when a checkpoint cannot be read or is malformed."""
    pass


class DatasetError(GeostableError):
    """Raised when a dataset directory is corrupt or incomplete.

    The message always names the offending path (index file or missing shard).
    """
    pass


class VersionMismatchError(GeostableError):
    """Raised when a checkpoint and a dataset (or a file and this library) disagree.

    Examples:
        - checkpoint written by an unsupported format version
        - dataset canvas not divisible by the checkpoint backbone stride
    """
    pass


class UsageError(GeostableError):
    """Raised for command-line usage problems (exit status 1)."""
    pass
