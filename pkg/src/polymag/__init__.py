"""Lowest local energies and semiclassical bounds for magnetic Neumann Laplacians on polyhedra."""

__version__ = "0.1.0"
