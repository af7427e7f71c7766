"""Sofic covering-dimension utilities."""

__version__ = "0.1.0"

__all__ = [
    "groups",
    "sofic",
    "lp_linalg",
    "eps_dim",
    "almost_equiv",
    "pipeline",
    "tree_calculus",
    "betti",
    "config",
    "outputs",
    "cache",
    "acceptance",
]
