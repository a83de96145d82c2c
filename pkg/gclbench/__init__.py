"""gclbench: graph self-supervised learning benchmark engine."""

__version__ = "0.1.0"
