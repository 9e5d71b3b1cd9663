"""Multi-view foul classification with similarity-attention view pooling."""

__version__ = "0.1.0"
