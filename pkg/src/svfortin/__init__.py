"""Local Fortin projection for the Scott-Vogelius pair on 2D triangulations.

Submodules are imported on first attribute access so that the command line
can fix thread counts before numpy is loaded.
"""

from importlib import import_module

__version__ = "0.1.0"

_SUBMODULES = ("mesh", "singularity", "polynomials", "linalg", "fespaces", "fields", "catalog",
               "quasi_interp", "correction", "fortin", "harness", "cli")

__all__ = list(_SUBMODULES) + ["__version__"]


def __getattr__(name):
    if name in _SUBMODULES:
        return import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
