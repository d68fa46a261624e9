"""Exception types shared across the package."""


class UvSyncError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(UvSyncError, ValueError):
    """An argument violates a documented precondition."""


class ShapeMismatch(UvSyncError, ValueError):
    """Array shapes are inconsistent with each other or with the contract."""


class UvMissing(UvSyncError):
    """A mesh file carries no UV coordinates."""


class TopologyMismatch(UvSyncError):
    """Frames of a mesh sequence disagree on faces or UV layout."""


class DegenerateTimestep(UvSyncError, ValueError):
    """The requested timestep has alpha_bar == 1, so no noise to remove."""


class ProtocolError(UvSyncError):
    """The remote peer violated the bridge wire protocol framing."""


class BackendUnavailable(UvSyncError):
    """A denoising backend cannot be reached or reported a failure."""


class BridgeTimeout(UvSyncError, TimeoutError):
    """A bridge request did not complete within the configured timeout."""
