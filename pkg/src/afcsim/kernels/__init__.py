"""Hot numeric kernels with a compiled core and a pure-Python fallback.

The compiled Cython extension is preferred when available; otherwise the
numpy implementation is selected at import time.  Both compute identical
results (direct time-domain convolution); ``benchmarks/bench_kernels.py``
compares their throughput.
"""

from . import _fallback

try:
    from . import _ckernels as _impl

    BACKEND = "compiled"
except ImportError:  # extension not built
    _impl = _fallback
    BACKEND = "python"


def causal_convolve(kernel, signal):
    """Full linear convolution via the active backend."""
    return _impl.causal_convolve(kernel, signal)


def available_backends():
    """Map of backend name -> convolution callable, for tests and benchmarks."""
    out = {"python": _fallback.causal_convolve}
    if BACKEND == "compiled":
        out["compiled"] = _impl.causal_convolve
    return out
