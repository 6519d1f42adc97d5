"""Cross-lingual meta-learning for low-resource sequence-to-sequence tasks."""

__version__ = "0.1.0"
