"""Lattice experiments for higher Atiyah-Patodi-Singer index pairings."""

__version__ = "0.1.0"
