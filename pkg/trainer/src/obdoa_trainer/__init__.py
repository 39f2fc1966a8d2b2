"""Two-stage trainer for the unrolled one-bit DOA network."""

__version__ = "0.1.0"
