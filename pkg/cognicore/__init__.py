"""Cognicore: a knowledge base that mines probabilistic laws, clusters
objects into invariants and learns from the outcomes of its own advice."""
from .const import NAME, VERSION

__version__ = VERSION

__all__ = ["NAME", "__version__"]
