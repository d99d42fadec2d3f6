"""Exception hierarchy shared by all rasc modules."""


class RascError(Exception):
    """Base class for every error raised by rasc."""


class FormatError(RascError, ValueError):
    """A file or buffer does not follow the expected layout."""


class EntropyCodingError(RascError, ValueError):
    """Invalid symbols, models, or a corrupt/truncated bitstream."""


class TruncatedStreamError(EntropyCodingError):
    pass


class CodecError(RascError, ValueError):
    """Corrupt payload, wrong codec id, or model/payload mismatch."""


class WireError(RascError):
    """Malformed frame on the wire.

    ``position`` is the byte offset in the stream where the problem was found,
    when known.
    """

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} (at byte {position})")
        self.position = position


class StreamClosed(WireError):
    """Peer closed the stream cleanly on a frame boundary."""


class TruncatedFrame(WireError):
    """Stream ended in the middle of a frame."""
