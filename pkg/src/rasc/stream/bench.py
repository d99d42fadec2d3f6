"""Loopback benchmark: sender and receiver in one process over local TCP."""

from __future__ import annotations

import socket
import threading

from .pipeline import CodecSettings, merge_records, run_receiver, run_sender
from .timing import BenchReport, aggregate_timings


def loopback_bench(source, settings: CodecSettings, *, duration: float | None = None,
                   window_seconds: float = 300.0, sink=None, drop_oldest: bool | None = None):
    """Returns (report, merged per-frame records)."""
    if duration is not None and duration <= 0:
        raise ValueError("duration must be positive")
    listener = socket.create_server(("127.0.0.1", 0))
    port = listener.getsockname()[1]
    box = {}

    def serve():
        try:
            box["result"] = run_receiver(None, sink, settings.model, listener=listener)
        except BaseException as exc:  # surfaced to the caller below
            box["error"] = exc

    rx = threading.Thread(target=serve, name="rasc-recv", daemon=True)
    rx.start()
    try:
        sent = run_sender(source, settings, ("127.0.0.1", port), duration=duration, drop_oldest=drop_oldest)
        rx.join()
    finally:
        listener.close()
    if "error" in box:
        raise box["error"]
    recv = box["result"]
    merged = merge_records(sent.records, recv.records)
    report: BenchReport = aggregate_timings(merged, window_seconds, dropped=sent.dropped,
                                            malformed=recv.malformed + recv.decode_failures)
    return report, merged
