"""Two-tower one-class collaborative filtering with one-sided backpropagation."""

__version__ = "0.1.0"
