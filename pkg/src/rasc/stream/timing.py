"""Per-frame stage timings and their aggregation."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

STAGES = ("t_preprocess", "t_encode", "t_serialize", "t_network", "t_decode")


@dataclass(frozen=True)
class TimingRecord:
    """Stage durations in milliseconds.

    ``t_network`` is NaN when sender and receiver do not share a clock.
    ``t_capture_ns``/``t_done_ns`` bound the frame's life on a shared
    monotonic clock (0 when unknown) and are used for windowing and fps.
    """

    frame_id: int
    t_preprocess: float
    t_encode: float
    t_serialize: float
    t_network: float
    t_decode: float
    payload_bytes: int
    bpp: float
    sensor_type: int = 0
    t_capture_ns: int = 0
    t_done_ns: int = 0

    def __post_init__(self):
        for name in STAGES:
            v = getattr(self, name)
            if v < 0:
                raise ValueError(f"{name} is negative ({v})")
        if self.payload_bytes < 0 or self.bpp < 0:
            raise ValueError("payload size must be non-negative")

    @property
    def end_to_end(self) -> float:
        """Sum of the known stage durations (ms)."""
        vals = (getattr(self, s) for s in STAGES)
        return sum(v for v in vals if not math.isnan(v))

    @property
    def measured_end_to_end(self) -> float:
        """Capture-to-decoded wall time (ms); NaN without shared timestamps."""
        if not self.t_capture_ns or not self.t_done_ns:
            return math.nan
        return (self.t_done_ns - self.t_capture_ns) / 1e6


def percentile_nearest_rank(values, p: float) -> float:
    """Sample at 1-based rank ``floor(p * n / 100) + 1`` (capped at n).

    For 1..100 this puts p99 at 100: 99 % of the samples lie strictly below
    the reported value.
    """
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("no samples")
    rank = min(v.size, int(math.floor(p * v.size / 100.0)) + 1)
    return float(v[rank - 1])


@dataclass(frozen=True)
class StageStats:
    mean: float
    median: float
    p99: float


@dataclass(frozen=True)
class BenchReport:
    stages: dict
    end_to_end_mean: float
    measured_end_to_end_mean: float
    fps: float
    window_seconds: float
    frames: int
    elapsed_seconds: float
    dropped: int = 0
    malformed: int = 0

    @property
    def stage_sum(self) -> float:
        return sum(s.mean for s in self.stages.values() if not math.isnan(s.mean))

    def summary(self) -> str:
        lines = [f"frames {self.frames}  elapsed {self.elapsed_seconds:.3f} s  fps {self.fps:.2f}"
                 f"  dropped {self.dropped}  malformed {self.malformed}"]
        lines.append(f"{'stage':<14}{'mean':>10}{'median':>10}{'p99':>10}  (ms)")
        for name, s in self.stages.items():
            lines.append(f"{name:<14}{s.mean:>10.3f}{s.median:>10.3f}{s.p99:>10.3f}")
        lines.append(f"{'end_to_end':<14}{self.end_to_end_mean:>10.3f}")
        lines.append(f"{'measured':<14}{self.measured_end_to_end_mean:>10.3f}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stages"] = {k: asdict(v) for k, v in self.stages.items()}
        return d


def aggregate_timings(records, window_seconds: float = 300.0, elapsed_seconds: float | None = None,
                      dropped: int = 0, malformed: int = 0) -> BenchReport:
    """Stage statistics over the first ``window_seconds`` of captured frames.

    ``elapsed_seconds`` defaults to first capture to last completion of the
    frames inside the window.
    """
    records = list(records)
    if not records:
        raise ValueError("no timing records")
    if window_seconds <= 0:
        raise ValueError("window must be positive")
    stamped = [r for r in records if r.t_capture_ns]
    if stamped and elapsed_seconds is None:
        t0 = min(r.t_capture_ns for r in stamped)
        limit = t0 + window_seconds * 1e9
        records = [r for r in records if not r.t_capture_ns or r.t_capture_ns <= limit]
        stamped = [r for r in records if r.t_capture_ns]
        elapsed_seconds = (max(r.t_done_ns for r in stamped) - t0) / 1e9
    if elapsed_seconds is None or elapsed_seconds <= 0:
        raise ValueError("elapsed time unknown or non-positive")
    stages = {}
    for name in STAGES:
        vals = np.array([getattr(r, name) for r in records], dtype=np.float64)
        vals = vals[~np.isnan(vals)]
        if vals.size:
            stages[name] = StageStats(float(vals.mean()), float(np.median(vals)), percentile_nearest_rank(vals, 99))
        else:
            stages[name] = StageStats(math.nan, math.nan, math.nan)
    e2e = float(np.mean([r.end_to_end for r in records]))
    measured = np.array([r.measured_end_to_end for r in records])
    measured = float(measured[~np.isnan(measured)].mean()) if (~np.isnan(measured)).any() else math.nan
    return BenchReport(stages, e2e, measured, len(records) / elapsed_seconds, window_seconds,
                       len(records), elapsed_seconds, dropped, malformed)


def records_csv(records) -> str:
    names = [f.name for f in fields(TimingRecord)]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(names)
    for r in records:
        wr.writerow([getattr(r, n) for n in names])
    return buf.getvalue()
