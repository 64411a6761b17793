"""Statistical timing for voltage-overscaled combinational logic."""

__version__ = "0.1.0"
