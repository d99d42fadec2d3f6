"""Sender and receiver services.

Sender: a capture/preprocess/encode/serialize worker hands finished frames to
a network worker through a bounded queue. Receiver: one loop per connection
that reads, decodes and optionally writes every frame.

All timestamps come from ``time.monotonic_ns``; the network stage is only
meaningful when both ends read the same clock (same host).
"""

from __future__ import annotations

import collections
import logging
import math
import socket
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .. import codecs
from ..codecs import CodecId, EncodedPayload
from ..datamodel import GridConfig, Image8, PointCloud, RangeGrid, load_artifact, save_artifact
from ..errors import RascError, StreamClosed, TruncatedFrame, WireError
from ..lidar import denormalize_grid, grid_to_pointcloud, normalize_grid, pointcloud_to_grid
from ..synthetic import synthetic_frame, synthetic_scan
from .timing import TimingRecord
from .wire import SENSOR_CAMERA, SENSOR_LIDAR, FrameHeader, FrameReader, serialize_frame

log = logging.getLogger(__name__)

QUEUE_CAPACITY = 4
MAX_FRAME_PIXELS = 1 << 22


# --------------------------------------------------------------------------
# sources


class SyntheticSource:
    """Cycles through a pool of pre-rendered synthetic frames or scans."""

    live = True

    def __init__(self, kind: str = "camera", frames: int | None = None, size: int = 256,
                 seed: int = 0, pool: int = 8):
        if kind not in ("camera", "lidar"):
            raise ValueError(f"unknown source kind {kind!r}")
        self.kind = kind
        self.frames = frames
        if kind == "camera":
            self._pool = [synthetic_frame(seed + i, size, size) for i in range(pool)]
        else:
            self._pool = [synthetic_scan(seed + i) for i in range(pool)]

    def __iter__(self):
        sensor = SENSOR_CAMERA if self.kind == "camera" else SENSOR_LIDAR
        i = 0
        while self.frames is None or i < self.frames:
            yield sensor, self._pool[i % len(self._pool)]
            i += 1


class ReplaySource:
    """Artifacts from a directory in name order; unreadable files are skipped."""

    live = False

    def __init__(self, directory, loop: bool = False):
        self.paths = sorted(p for p in Path(directory).iterdir() if p.is_file())
        if not self.paths:
            raise ValueError(f"no files in {directory}")
        self.loop = loop

    def __iter__(self):
        while True:
            yielded = False
            for p in self.paths:
                try:
                    obj = load_artifact(p)
                except (OSError, RascError, ValueError) as exc:
                    log.warning("skipping %s: %s", p, exc)
                    continue
                yielded = True
                yield (SENSOR_CAMERA if isinstance(obj, Image8) else SENSOR_LIDAR), obj
            if not (self.loop and yielded):
                return


# --------------------------------------------------------------------------
# encoder side


@dataclass
class CodecSettings:
    codec: CodecId = CodecId.BLOCK_DCT
    quality: int = 75
    model: codecs.AeModel | None = None
    grid: GridConfig = field(default_factory=GridConfig)


@dataclass
class EncodedFrame:
    frame_id: int
    wire: bytes
    record: TimingRecord


def encode_frame(frame_id: int, sensor: int, obj, settings: CodecSettings, now=time.monotonic_ns) -> EncodedFrame:
    t_capture = now()
    if isinstance(obj, PointCloud):
        obj = normalize_grid(pointcloud_to_grid(obj, settings.grid))
    elif isinstance(obj, RangeGrid):
        obj = normalize_grid(obj)
    t_start = now()
    payload = codecs.encode(obj, settings.codec, settings.quality, settings.model)
    t_end = now()
    blob = payload.to_bytes()
    header = FrameHeader(sensor, int(payload.codec), payload.flags, frame_id, t_capture, t_start, t_end,
                         payload.width, payload.height, payload.channels, len(blob))
    wire = serialize_frame(header, blob)
    t_ser = now()
    rec = TimingRecord(
        frame_id=frame_id,
        t_preprocess=(t_start - t_capture) / 1e6,
        t_encode=(t_end - t_start) / 1e6,
        t_serialize=(t_ser - t_end) / 1e6,
        t_network=math.nan,
        t_decode=math.nan,
        payload_bytes=len(blob),
        bpp=8.0 * len(blob) / (payload.width * payload.height),
        sensor_type=sensor,
        t_capture_ns=t_capture,
    )
    return EncodedFrame(frame_id, wire, rec)


class HandoffQueue:
    """Bounded single-producer/single-consumer queue.

    With ``drop_oldest`` a full queue discards its oldest frame to make room
    (freshness over completeness); otherwise the producer waits.
    """

    def __init__(self, capacity: int = QUEUE_CAPACITY, drop_oldest: bool = True):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.drop_oldest = drop_oldest
        self._items = collections.deque()
        self._cond = threading.Condition()
        self._closed = False
        self.dropped = 0

    def put(self, item) -> None:
        with self._cond:
            while len(self._items) >= self.capacity and not self._closed:
                if self.drop_oldest:
                    self._items.popleft()
                    self.dropped += 1
                else:
                    self._cond.wait()
            if self._closed:
                return
            self._items.append(item)
            self._cond.notify_all()

    def get(self):
        """Next item, or None once closed and drained."""
        with self._cond:
            while not self._items and not self._closed:
                self._cond.wait()
            if not self._items:
                return None
            item = self._items.popleft()
            self._cond.notify_all()
            return item

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def abort(self) -> None:
        with self._cond:
            self._items.clear()
            self._closed = True
            self._cond.notify_all()


@dataclass
class SenderResult:
    records: list
    dropped: int
    error: str | None = None


def run_sender(source, settings: CodecSettings, endpoint, *, duration: float | None = None,
               drop_oldest: bool | None = None, capacity: int = QUEUE_CAPACITY) -> SenderResult:
    """Encode and ship every frame of ``source`` to ``endpoint``.

    ``endpoint`` is a ``(host, port)`` pair or an already connected socket.
    Returns the records of frames actually handed to the transport. Live
    sources default to drop-oldest, file replay to lossless blocking.
    """
    if drop_oldest is None:
        drop_oldest = getattr(source, "live", True)
    if isinstance(endpoint, socket.socket):
        sock, own = endpoint, False
    else:
        sock, own = socket.create_connection(tuple(endpoint)), True
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    queue = HandoffQueue(capacity, drop_oldest)
    sent: list[TimingRecord] = []
    state = {"error": None}
    stop = threading.Event()

    def network_worker():
        while True:
            item = queue.get()
            if item is None:
                return
            try:
                sock.sendall(item.wire)
            except OSError as exc:
                state["error"] = f"connection lost: {exc}"
                stop.set()
                queue.abort()
                return
            sent.append(item.record)

    net = threading.Thread(target=network_worker, name="rasc-send", daemon=True)
    net.start()
    deadline = None if duration is None else time.monotonic() + duration
    try:
        for frame_id, (sensor, obj) in enumerate(source):
            if stop.is_set() or (deadline is not None and time.monotonic() >= deadline):
                break
            queue.put(encode_frame(frame_id, sensor, obj, settings))
    finally:
        queue.close()
        net.join()
        if own:
            try:
                sock.shutdown(socket.SHUT_WR)
            except OSError:
                pass
            sock.close()
    return SenderResult(sent, queue.dropped, state["error"])


# --------------------------------------------------------------------------
# decoder side


@dataclass
class ReceiverResult:
    records: list = field(default_factory=list)
    frame_ids: list = field(default_factory=list)
    malformed: int = 0
    decode_failures: int = 0
    truncated: bool = False


class Receiver:
    def __init__(self, model: codecs.AeModel | None = None, sink=None, shared_clock: bool = True,
                 max_pixels: int = MAX_FRAME_PIXELS, now=time.monotonic_ns):
        self.model = model
        self.sink = None if sink is None else Path(sink)
        if self.sink is not None:
            self.sink.mkdir(parents=True, exist_ok=True)
        self.shared_clock = shared_clock
        self.max_pixels = max_pixels
        self.now = now
        self.result = ReceiverResult()

    def _decode(self, header: FrameHeader, blob: bytes):
        if header.width * header.height > self.max_pixels:
            raise WireError(f"frame of {header.width}x{header.height} exceeds the receiver limit")
        payload = EncodedPayload.from_bytes(blob)
        if (int(payload.codec), payload.width, payload.height, payload.channels) != (
                header.codec_id, header.width, header.height, header.channels):
            raise WireError("frame header disagrees with its payload")
        if payload.is_grid != (header.sensor_type == SENSOR_LIDAR):
            raise WireError("sensor type disagrees with the payload kind")
        out = codecs.decode(payload, self.model)
        if header.sensor_type == SENSOR_LIDAR:
            out = grid_to_pointcloud(denormalize_grid(out))
        return out

    def handle(self, header: FrameHeader, blob: bytes, t_recv: int) -> TimingRecord | None:
        try:
            out = self._decode(header, blob)
        except (RascError, ValueError) as exc:
            log.debug("dropping frame %d: %s", header.frame_id, exc)
            self.result.decode_failures += 1
            return None
        t_done = self.now()
        net = (t_recv - header.t_encode_end_ns) / 1e6 if self.shared_clock else math.nan
        rec = TimingRecord(
            frame_id=header.frame_id,
            t_preprocess=(header.t_encode_start_ns - header.t_capture_ns) / 1e6,
            t_encode=(header.t_encode_end_ns - header.t_encode_start_ns) / 1e6,
            t_serialize=math.nan,
            t_network=max(net, 0.0) if not math.isnan(net) else net,
            t_decode=(t_done - t_recv) / 1e6,
            payload_bytes=len(blob),
            bpp=8.0 * len(blob) / max(1, header.width * header.height),
            sensor_type=header.sensor_type,
            t_capture_ns=header.t_capture_ns if self.shared_clock else 0,
            t_done_ns=t_done if self.shared_clock else 0,
        )
        self.result.records.append(rec)
        self.result.frame_ids.append(header.frame_id)
        if self.sink is not None:
            ext = "ppm" if isinstance(out, Image8) else "bin"
            save_artifact(out, self.sink / f"frame_{header.frame_id:08d}.{ext}")
        return rec

    def consume(self, reader: FrameReader, max_frames: int | None = None) -> ReceiverResult:
        """Process frames until the stream ends; malformed data is skipped."""
        while max_frames is None or len(self.result.records) < max_frames:
            try:
                header, blob = reader.read_frame()
            except StreamClosed:
                break
            except TruncatedFrame:
                self.result.truncated = True
                self.result.malformed += 1
                break
            except WireError:
                self.result.malformed += 1
                if not reader.skip_to_magic():
                    break
                continue
            self.handle(header, blob, self.now())
        return self.result


def run_receiver(listen, sink=None, model: codecs.AeModel | None = None, *, max_frames: int | None = None,
                 shared_clock: bool = True, ready: threading.Event | None = None,
                 listener: socket.socket | None = None) -> ReceiverResult:
    """Accept one connection on ``listen`` and process it to the end."""
    srv = listener
    if srv is None:
        srv = socket.create_server(tuple(listen))
    if ready is not None:
        ready.set()
    try:
        conn, _ = srv.accept()
    finally:
        if listener is None:
            srv.close()
    with conn:
        receiver = Receiver(model, sink, shared_clock)
        return receiver.consume(FrameReader(conn), max_frames)


def merge_records(sender: list, receiver: list) -> list:
    """Join by frame id: sender supplies serialisation time, receiver the rest.

    The receiver's network span starts at encode end, so the serialisation
    share is moved out of it; the stages then tile capture to decoded.
    """
    by_id = {r.frame_id: r for r in sender}
    out = []
    for r in receiver:
        s = by_id.get(r.frame_id)
        if s is None:
            continue
        net = r.t_network - s.t_serialize if not math.isnan(r.t_network) else math.nan
        out.append(TimingRecord(
            frame_id=r.frame_id, t_preprocess=r.t_preprocess, t_encode=r.t_encode,
            t_serialize=s.t_serialize, t_network=max(0.0, net) if not math.isnan(net) else net,
            t_decode=r.t_decode, payload_bytes=r.payload_bytes, bpp=r.bpp, sensor_type=r.sensor_type,
            t_capture_ns=r.t_capture_ns, t_done_ns=r.t_done_ns,
        ))
    return out
