"""Multi-fidelity surrogate modelling with trust-weighted augmentation"""

__version__ = "0.1.0"
