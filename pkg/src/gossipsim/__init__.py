"""Exact simulation of gossip and small-world spread processes on flat spaces."""
from .geometry import ManifoldSpec
from .branching import ProcessParams

__all__ = ["ManifoldSpec", "ProcessParams"]
