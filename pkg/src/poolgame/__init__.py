"""Nash equilibria among competing pooling-network players."""

__version__ = "0.1.0"
