"""Slot-level downlink MAC simulator with a per-UE credit gate."""

__version__ = "0.1.0"
