"""Pure-numpy fallback for the compiled convolution kernel."""

import numpy as np


def causal_convolve(kernel, signal):
    """Full linear convolution (direct summation, no FFT).

    ``numpy.convolve`` always uses the direct time-domain algorithm, so this
    stays an independent cross-check of the FFT propagation path.
    """
    h = np.ascontiguousarray(kernel, dtype=np.complex128)
    x = np.ascontiguousarray(signal, dtype=np.complex128)
    return np.convolve(h, x)
