"""Minimal-cost railway network design for strategic timetables."""

__version__ = "0.1.0"
