"""Pseudo-labeling of indoor point clouds from classed CAD meshes."""

import warnings

# numba probes an old system TBB on import of parallel kernels and falls back
# to another threading layer; the warning is noise
warnings.filterwarnings("ignore", message=".*TBB.*")

__version__ = "0.1.0"

from .errors import CadLabelError  # noqa: E402
from .taxonomy import GOLD, SILVER, UNLABELED, gold, silver  # noqa: E402

__all__ = ["CadLabelError", "GOLD", "SILVER", "UNLABELED", "gold", "silver", "__version__"]
