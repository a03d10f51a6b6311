"""Representation learning for sequential linear bandits in changing environments."""
__version__ = "0.1.0"
