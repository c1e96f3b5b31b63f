"""Shared test environment.

BLAS thread pools are pinned to one thread before numpy loads so that the
timed acceptance criteria measure single-core behavior; dataset synthesis
still fans out across Python threads (the workers release the GIL inside
vectorized kernels).
"""

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")
os.environ.setdefault("SCANMEND_THREADS", "4")
