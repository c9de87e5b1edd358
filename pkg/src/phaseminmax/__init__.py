"""Mountain-pass solutions of the periodic Allen-Cahn equation and their certificates."""

from .geometry import ScalarField, TorusDomain
from .potential import DoubleWell

__all__ = ["DoubleWell", "ScalarField", "TorusDomain"]
__version__ = "0.1.0"
