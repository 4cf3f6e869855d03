"""scclab: an executable laboratory for secure compartmentalizing compilation."""

__version__ = "0.1.0"
