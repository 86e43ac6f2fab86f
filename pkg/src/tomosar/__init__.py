"""Subsurface tomographic SAR simulation, focusing and nest detection."""

import os

# numba's TBB layer is unavailable on many hosts; pick one that always works
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

__version__ = "0.1.0"
