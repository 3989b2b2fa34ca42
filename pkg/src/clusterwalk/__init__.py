"""Random walk attracted by the open clusters of subcritical site percolation."""
__version__ = "0.1.0"
