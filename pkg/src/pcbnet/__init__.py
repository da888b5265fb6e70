"""pcbnet: pre-crime behavior segments, dataset assembly, and a from-scratch
3D CNN classifier for suspicious-behavior clips."""

__version__ = "0.1.0"
