"""Modelling, simulation and analysis toolkit for entanglement-based BBM92
quantum key distribution over hybrid fiber and mid-infrared free-space links."""
from ._validation import ParameterError

__version__ = "0.1.0"

__all__ = ["ParameterError", "__version__"]
