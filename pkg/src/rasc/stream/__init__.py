"""Framed sensor streaming with per-stage timing."""

from .pipeline import (
    CodecSettings,
    HandoffQueue,
    Receiver,
    ReceiverResult,
    ReplaySource,
    SenderResult,
    SyntheticSource,
    encode_frame,
    merge_records,
    run_receiver,
    run_sender,
)
from .timing import BenchReport, StageStats, TimingRecord, aggregate_timings, percentile_nearest_rank, records_csv
from .wire import (
    HEADER_SIZE,
    MAGIC,
    SENSOR_CAMERA,
    SENSOR_LIDAR,
    FrameHeader,
    FrameReader,
    deserialize_frame,
    serialize_frame,
)
