"""scanmend: unpaired point-cloud completion.

Point-set autoencoders define latent manifolds of partial and complete
shapes; a small adversarial network maps partial codes to complete codes.
Everything runs on numpy; shapes come from a procedural scan synthesizer.
"""

from .pointset import PointSet, normalize_unit_sphere
from .rng import Rng

__version__ = "0.1.0"

__all__ = ["PointSet", "Rng", "normalize_unit_sphere", "__version__"]
