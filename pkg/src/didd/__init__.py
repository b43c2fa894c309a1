"""didd: domain intersection / domain difference.

Three encoders split images from two domains into a shared content code and
two domain-specific codes; a single decoder translates by swapping the
domain-specific part. Everything runs on a small tape-based autodiff engine
over NumPy, with compiled kernels for the convolution inner loops when the
extension is available.

Thread control: the BLAS thread count is pinned before NumPy is first
imported, because training determinism is only guaranteed single-threaded.
Set DIDD_THREADS to override (default "1").
"""

import os
import sys

_threads = os.environ.get("DIDD_THREADS", "1")
if "numpy" not in sys.modules:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"
