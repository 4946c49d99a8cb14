"""Random current tools for the nearest-neighbour Ising model and Griffiths-Simon block models."""

__version__ = "0.1.0"
