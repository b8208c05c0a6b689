"""Communication-closure checking and round-based compilation of asynchronous protocols."""

__version__ = "0.1.0"
