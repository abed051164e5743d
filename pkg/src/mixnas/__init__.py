"""Multi-epsilon architecture search with categorical distributions and natural gradients."""

__version__ = "0.1.0"
