"""Mixed and primal finite elements for the relaxed micromorphic continuum in 2D."""

__version__ = "0.1.0"
