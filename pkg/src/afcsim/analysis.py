"""Figures of merit extracted from count histograms.

Signal-to-noise ratio points with Poisson error propagation, the
origin-forced linear fit that yields the single-photon-equivalent input
``mu_1`` (the mean input photon number at which SNR = 1), and efficiency
ratios between histograms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SnrPoint",
    "MuOneFit",
    "NoSignalError",
    "snr",
    "fit_mu1",
    "efficiency_from_histograms",
    "write_results_table",
]


class NoSignalError(ValueError):
    """All SNR points vanish; no slope can be extracted."""


@dataclass(frozen=True)
class SnrPoint:
    """One measured point: SNR = (S - N)/N with Poisson one-sigma error.

    ``s_counts`` are raw signal-window counts; ``n_counts`` is the noise
    estimate after rescaling to the signal window (``n_raw`` holds the raw
    counts behind it, for error propagation).
    """

    mu_in: float
    s_counts: float
    n_counts: float
    snr: float
    sigma: float
    infinite: bool = False


def snr(s_counts: float, n_raw: float, norm: float = 1.0, mu_in: float = 0.0) -> SnrPoint:
    """Build an SNR point from raw window counts.

    ``n_raw`` are the counts in the noise window and ``norm`` rescales them
    to the signal-window length (N = n_raw * norm).  A zero noise estimate
    is flagged as infinite SNR rather than divided through.
    """
    if s_counts < 0 or n_raw < 0:
        raise ValueError("counts must be >= 0")
    n = n_raw * norm
    if n == 0:
        return SnrPoint(mu_in, s_counts, 0.0, math.inf, math.nan, infinite=True)
    value = (s_counts - n) / n
    # first-order propagation of Poisson errors on both windows
    var = s_counts / n**2 + (s_counts**2 / n**4) * n_raw * norm**2
    return SnrPoint(mu_in, s_counts, n, value, math.sqrt(var))


@dataclass(frozen=True)
class MuOneFit:
    """Origin-forced linear fit SNR = slope * mu; mu_1 = 1/slope."""

    slope: float
    slope_sigma: float
    mu1: float
    mu1_sigma: float
    weighted: bool = True


def fit_mu1(points, weighted: bool = True) -> MuOneFit:
    """Least squares through the origin on (mu_in, SNR) points.

    Weighted (1/sigma^2) by default; an unweighted mode is kept for exact
    replication studies.  Points flagged as infinite are rejected.
    """
    pts = [p for p in points if not p.infinite]
    if not pts:
        raise NoSignalError("no finite SNR points to fit")
    x = np.array([p.mu_in for p in pts])
    y = np.array([p.snr for p in pts])
    if np.all(y == 0):
        raise NoSignalError("all SNR points are zero")
    if weighted:
        sig = np.array([p.sigma for p in pts])
        if np.any(~np.isfinite(sig)) or np.any(sig <= 0):
            raise ValueError("weighted fit needs finite positive sigmas")
        w = 1.0 / sig**2
    else:
        w = np.ones_like(x)
    sxx = float(np.sum(w * x * x))
    if sxx == 0:
        raise NoSignalError("all points sit at mu_in = 0")
    slope = float(np.sum(w * x * y)) / sxx
    if slope <= 0:
        raise NoSignalError(f"non-positive fitted slope {slope}")
    if weighted:
        slope_sigma = 1.0 / math.sqrt(sxx)
    else:
        dof = max(len(pts) - 1, 1)
        resid = float(np.sum((y - slope * x) ** 2)) / dof
        slope_sigma = math.sqrt(resid / sxx)
    mu1 = 1.0 / slope
    mu1_sigma = slope_sigma / slope**2
    return MuOneFit(slope, slope_sigma, mu1, mu1_sigma, weighted)


def efficiency_from_histograms(
    input_hist,
    output_hist,
    input_window_ns,
    output_window_ns,
    correction: float = 1.0,
):
    """Window-sum ratio between two histograms, with Poisson error.

    ``correction`` moves the result to the configured reference plane (for
    example dividing out the detector efficiency only).  Returns
    (efficiency, sigma).
    """
    from .counting import window_sum

    if abs(input_hist.bin_size_ns - output_hist.bin_size_ns) > 1e-9:
        raise ValueError("histograms use different bin sizes")
    n_in, _, _ = window_sum(input_hist, input_window_ns)
    n_out, _, _ = window_sum(output_hist, output_window_ns)
    if n_in == 0:
        raise ValueError("empty input window")
    scale = output_hist.pulses / input_hist.pulses if input_hist.pulses else 1.0
    eta = (n_out / (n_in * scale)) * correction
    sigma = eta * math.sqrt(1.0 / n_out + 1.0 / n_in) if n_out > 0 else eta * math.sqrt(1.0 / n_in)
    return eta, sigma


def write_results_table(rows, path, fit: MuOneFit | None = None, footer: str = "") -> None:
    """Text rows (scenario_id, mu_in, S, N, SNR, sigma) plus a fit summary."""
    with open(path, "w") as fh:
        fh.write("scenario_id,mu_in,S,N,snr,sigma\n")
        for sid, p in rows:
            fh.write(
                f"{sid},{p.mu_in:.6g},{p.s_counts:.6g},{p.n_counts:.6g},"
                f"{p.snr:.6g},{p.sigma:.6g}\n"
            )
        if fit is not None:
            fh.write(
                f"# fit slope={fit.slope:.6g} slope_sigma={fit.slope_sigma:.6g} "
                f"mu1={fit.mu1:.6g} mu1_sigma={fit.mu1_sigma:.6g}\n"
            )
        if footer:
            fh.write(f"# {footer}\n")
