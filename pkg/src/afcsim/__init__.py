"""afcsim: telecom-photon up-conversion and comb-storage pipeline simulator.

Deterministic component models (converter, spectral hole burning, causal
pulse propagation) drive a Monte Carlo photon-counting backend; analysis
routines extract efficiencies, signal-to-noise ratios and the
single-photon-equivalent input mu_1.
"""

from .kernels import BACKEND as kernel_backend

__version__ = "0.1.0"
__all__ = ["kernel_backend", "__version__"]
