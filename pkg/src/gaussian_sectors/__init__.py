"""Variance of Gaussian-prime angles in sectors: measurement and predictions."""

import os

# the default TBB layer warns about version mismatches on common installs
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

__version__ = "0.1.0"
