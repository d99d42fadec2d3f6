"""Frame wire format: a fixed 52-byte little-endian header, then the payload."""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..errors import StreamClosed, TruncatedFrame, WireError

MAGIC = b"RASC"
VERSION = 1
HEADER = struct.Struct("<4sBBBBQQQQHHB3sI")
HEADER_SIZE = HEADER.size  # 52
MAX_PAYLOAD = 64 << 20

SENSOR_CAMERA = 0
SENSOR_LIDAR = 1

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class FrameHeader:
    sensor_type: int
    codec_id: int
    flags: int
    frame_id: int
    t_capture_ns: int
    t_encode_start_ns: int
    t_encode_end_ns: int
    width: int
    height: int
    channels: int
    payload_len: int

    def __post_init__(self):
        if self.sensor_type not in (SENSOR_CAMERA, SENSOR_LIDAR):
            raise WireError(f"unknown sensor type {self.sensor_type}")
        for name in ("codec_id", "flags", "channels"):
            if not 0 <= getattr(self, name) <= 0xFF:
                raise WireError(f"{name} out of range")
        for name in ("width", "height"):
            if not 0 <= getattr(self, name) <= 0xFFFF:
                raise WireError(f"{name} out of range")
        for name in ("frame_id", "t_capture_ns", "t_encode_start_ns", "t_encode_end_ns"):
            if not 0 <= getattr(self, name) <= _U64:
                raise WireError(f"{name} out of range")
        if not self.t_capture_ns <= self.t_encode_start_ns <= self.t_encode_end_ns:
            raise WireError("timestamps out of order")
        if not 0 <= self.payload_len <= MAX_PAYLOAD:
            raise WireError(f"payload length {self.payload_len} out of range")

    def pack(self) -> bytes:
        return HEADER.pack(
            MAGIC, VERSION, self.sensor_type, self.codec_id, self.flags, self.frame_id,
            self.t_capture_ns, self.t_encode_start_ns, self.t_encode_end_ns,
            self.width, self.height, self.channels, b"\0\0\0", self.payload_len,
        )

    @classmethod
    def unpack(cls, buf: bytes, position: int | None = None) -> "FrameHeader":
        if len(buf) < HEADER_SIZE:
            raise TruncatedFrame("short frame header", position)
        (magic, version, sensor, codec, flags, fid, tc, ts, te,
         w, h, ch, reserved, plen) = HEADER.unpack_from(buf)
        if magic != MAGIC:
            raise WireError(f"bad magic {magic!r}", position)
        if version != VERSION:
            raise WireError(f"unsupported wire version {version}", position)
        if reserved != b"\0\0\0":
            raise WireError("reserved header bytes are not zero", position)
        try:
            return cls(sensor, codec, flags, fid, tc, ts, te, w, h, ch, plen)
        except WireError as exc:
            raise WireError(str(exc), position) from None


def serialize_frame(header: FrameHeader, payload: bytes) -> bytes:
    if len(payload) != header.payload_len:
        raise WireError(f"payload is {len(payload)} bytes, header says {header.payload_len}")
    return header.pack() + bytes(payload)


class FrameReader:
    """Reads frames from a blocking binary source (``read(n)``-style or bytes).

    ``position`` is the stream offset of the next unread byte; errors carry
    the offset of the frame that failed.
    """

    def __init__(self, source, chunk: int = 1 << 16):
        if isinstance(source, (bytes, bytearray, memoryview)):
            self._buf = bytearray(source)
            self._read = None
        else:
            self._buf = bytearray()
            self._read = getattr(source, "read", None) or getattr(source, "recv")
        self._chunk = chunk
        self._eof = self._read is None
        self.position = 0

    def _fill(self, n: int) -> bool:
        while len(self._buf) < n and not self._eof:
            data = self._read(max(self._chunk, n - len(self._buf)))
            if not data:
                self._eof = True
                break
            self._buf += data
        return len(self._buf) >= n

    def _consume(self, n: int) -> bytes:
        out = bytes(self._buf[:n])
        del self._buf[:n]
        self.position += n
        return out

    def at_eof(self) -> bool:
        return not self._fill(1)

    def read_frame(self) -> tuple[FrameHeader, bytes]:
        start = self.position
        if not self._fill(HEADER_SIZE):
            if not self._buf:
                raise StreamClosed("stream closed at a frame boundary", start)
            raise TruncatedFrame(f"stream ended {len(self._buf)} bytes into a frame header", start)
        header = FrameHeader.unpack(bytes(self._buf[:HEADER_SIZE]), start)
        total = HEADER_SIZE + header.payload_len
        if not self._fill(total):
            raise TruncatedFrame(
                f"stream ended {len(self._buf) - HEADER_SIZE} of {header.payload_len} bytes into a payload", start)
        self._consume(HEADER_SIZE)
        return header, self._consume(header.payload_len)

    def skip_to_magic(self) -> bool:
        """Discard bytes up to the next magic after the current position."""
        if self._fill(1):
            self._consume(1)
        while True:
            i = self._buf.find(MAGIC)
            if i >= 0:
                self._consume(i)
                return True
            # keep a possible magic prefix at the tail
            keep = len(MAGIC) - 1
            if len(self._buf) > keep:
                self._consume(len(self._buf) - keep)
            if self._eof or not self._fill(len(self._buf) + 1):
                self._consume(len(self._buf))
                return False


def deserialize_frame(source) -> tuple[FrameHeader, bytes]:
    """Read exactly one frame from ``source`` (bytes or a readable stream)."""
    # byte-at-a-time refills so a stream is never read past the frame
    return FrameReader(source, chunk=1).read_frame()
