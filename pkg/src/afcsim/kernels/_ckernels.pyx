# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernel: direct time-domain causal convolution.

This is the only super-linear inner loop in the simulator.  It backs the
time-domain cross-check of the frequency-domain pulse propagation, where a
causal impulse response (length up to ~10^4 samples) is convolved with a
full time trace (up to ~10^5 samples).
"""
import numpy as np


def causal_convolve(kernel, signal):
    """Full linear convolution of two complex arrays (direct summation).

    Equivalent to ``numpy.convolve(kernel, signal)`` but implemented as an
    explicit O(M*N) loop.  Output length is ``len(kernel) + len(signal) - 1``.
    """
    cdef const double complex[::1] h = np.ascontiguousarray(kernel, dtype=np.complex128)
    cdef const double complex[::1] x = np.ascontiguousarray(signal, dtype=np.complex128)
    cdef Py_ssize_t m = h.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t out_len = m + n - 1
    out = np.zeros(out_len, dtype=np.complex128)
    cdef double complex[::1] y = out
    cdef Py_ssize_t i, j, lo, hi
    cdef double complex acc
    for i in range(out_len):
        lo = i - n + 1
        if lo < 0:
            lo = 0
        hi = i + 1
        if hi > m:
            hi = m
        acc = 0
        for j in range(lo, hi):
            acc = acc + h[j] * x[i - j]
        y[i] = acc
    return out
