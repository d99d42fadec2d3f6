"""Compression and streaming of camera frames and lidar scans."""

__version__ = "0.1.0"
