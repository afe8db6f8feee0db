"""Vascular tree morphometry from 3D voxel volumes."""
import os

os.environ.setdefault("NUMBA_THREADING_LAYER_PRIORITY", "omp tbb workqueue")

__version__ = "0.1.0"

from .errors import *  # noqa: E402,F401,F403
from .volume import (  # noqa: E402,F401
    BinaryMask,
    DistanceField,
    Volume3D,
    distance_transform,
    neighbors,
)
