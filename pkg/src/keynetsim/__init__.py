"""keynetsim: discrete-event simulator for trusted-node QKD networks."""

from ._engine import COMPILED

__version__ = "0.1.0"
__all__ = ["COMPILED", "__version__"]
