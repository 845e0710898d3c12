"""Statistical-shape-prior conditional WGAN-GP for ECG heartbeat synthesis."""

__version__ = "0.1.0"
