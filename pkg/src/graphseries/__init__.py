"""Time series prediction for graphs in kernel and dissimilarity spaces."""

__version__ = "0.1.0"
