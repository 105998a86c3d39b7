"""Low-dose CT enhancement: simulation, model, training, and evaluation."""

__version__ = "0.1.0"
