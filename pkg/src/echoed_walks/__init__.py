"""Echo-reinforced random walks: simulators with their closed-form and limit-law companions."""

__version__ = "0.1.0"

import os as _os

import numba as _numba

# The OpenMP layer avoids noisy fallbacks from old TBB builds; an explicit
# NUMBA_THREADING_LAYER setting still wins.
if "NUMBA_THREADING_LAYER" not in _os.environ:
    _numba.config.THREADING_LAYER = "omp"
