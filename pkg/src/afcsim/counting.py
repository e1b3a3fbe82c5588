"""Monte Carlo photon-counting backend.

Turns deterministic per-pulse intensities into stochastic start-stop
histograms: per time bin the counts are Poisson with mean
``pulses * (detector_efficiency * signal + noise + dark)``, accumulated
over independent lots with per-lot derived seeds so the merged histogram is
independent of execution order.  Detection windows, shutter intervals and
pump gating shape the expected rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conversion import PumpGate

__all__ = [
    "DetectionConfig",
    "CountHistogram",
    "simulate_counts",
    "window_sum",
    "apply_gating",
    "bin_rates",
    "write_histogram",
    "read_histogram",
]


@dataclass(frozen=True)
class DetectionConfig:
    """Start-stop detection parameters.

    Windows are (start, stop) in ns on the histogram time axis.  The noise
    window defaults to a 2.36 us stretch well after the pulse; counts taken
    there are rescaled to the signal-window length for comparison.
    """

    detector_efficiency: float = 0.60
    dark_rate_hz: float = 10.0
    bin_size_ns: float = 10.24
    pulses_total: int = 1_200_000
    pulse_rate_hz: float = 5e4
    lots: int = 200
    pulses_per_lot: int = 6000
    n_bins: int = 1200
    t0_ns: float = 0.0
    signal_window_ns: tuple[float, float] = (1300.0, 1700.0)
    noise_window_ns: tuple[float, float] = (8980.0, 11340.0)
    shutter_closed_ns: tuple = ()

    def __post_init__(self):
        if self.lots * self.pulses_per_lot != self.pulses_total:
            raise ValueError(
                f"lots * pulses_per_lot = {self.lots * self.pulses_per_lot} "
                f"!= pulses_total = {self.pulses_total}"
            )
        if self.bin_size_ns <= 0 or self.n_bins <= 0:
            raise ValueError("bin size and bin count must be > 0")
        span = (self.t0_ns, self.t0_ns + self.n_bins * self.bin_size_ns)
        for name, win in (("signal", self.signal_window_ns), ("noise", self.noise_window_ns)):
            if win[0] < span[0] - 1e-9 or win[1] > span[1] + 1e-9 or win[1] <= win[0]:
                raise ValueError(f"{name} window {win} outside histogram span {span}")
        if not 0 < self.detector_efficiency <= 1:
            raise ValueError("detector efficiency must be in (0, 1]")

    @property
    def bin_edges_ns(self) -> np.ndarray:
        return self.t0_ns + np.arange(self.n_bins + 1) * self.bin_size_ns

    @property
    def bin_centers_ns(self) -> np.ndarray:
        return self.t0_ns + (np.arange(self.n_bins) + 0.5) * self.bin_size_ns


@dataclass(frozen=True)
class CountHistogram:
    """Detected counts per bin plus the ensemble bookkeeping."""

    bin_edges_ns: np.ndarray
    counts: np.ndarray
    pulses: int
    seed: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.bin_edges_ns, dtype=float)
        c = np.asarray(self.counts)
        if c.size != e.size - 1:
            raise ValueError("counts must have one entry per bin")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "bin_edges_ns", e)
        object.__setattr__(self, "counts", np.asarray(c, dtype=np.int64))

    @property
    def bin_size_ns(self) -> float:
        return float(self.bin_edges_ns[1] - self.bin_edges_ns[0])


def bin_rates(times_ns: np.ndarray, rate_per_ns: np.ndarray, edges_ns: np.ndarray) -> np.ndarray:
    """Integrate a sampled rate (per ns) over histogram bins.

    Uses the cumulative trapezoid of the sampled curve so energy is
    conserved when the sampling grid is finer or coarser than the bins.
    Outside the sampled range the rate is zero.
    """
    t = np.asarray(times_ns, dtype=float)
    r = np.asarray(rate_per_ns, dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (r[1:] + r[:-1]) * np.diff(t))])
    at_edges = np.interp(edges_ns, t, cum, left=0.0, right=cum[-1])
    return np.diff(at_edges)


def apply_gating(
    noise_per_bin: np.ndarray,
    bin_centers_ns: np.ndarray,
    gate: PumpGate | None,
    suppression: float,
) -> np.ndarray:
    """Divide the pump-induced noise floor by the suppression inside the gate.

    Dark counts are added separately in :func:`simulate_counts` and are
    never gated.
    """
    if gate is None or suppression == 1.0:
        return np.asarray(noise_per_bin, dtype=float).copy()
    out = np.asarray(noise_per_bin, dtype=float).copy()
    gated = gate.is_gated(bin_centers_ns)
    out[gated] /= suppression
    return out


def _shutter_open(config: DetectionConfig) -> np.ndarray:
    open_mask = np.ones(config.n_bins, dtype=bool)
    centers = config.bin_centers_ns
    for lo, hi in config.shutter_closed_ns:
        open_mask &= ~((centers >= lo) & (centers < hi))
    return open_mask


def simulate_counts(
    signal_per_bin: np.ndarray,
    noise_per_bin: np.ndarray,
    config: DetectionConfig,
    seed,
    lot_scale: np.ndarray | None = None,
) -> CountHistogram:
    """Accumulate the start-stop histogram over all lots.

    ``signal_per_bin`` is the expected photon number reaching the detector
    per pulse per bin (detector efficiency is applied here);
    ``noise_per_bin`` is the expected noise count per pulse per bin at the
    detector (already containing any path or gating factors).  ``seed`` may
    be an int or tuple; lot k draws from an independent stream derived from
    (seed, k), so the merged result does not depend on execution order.
    ``lot_scale`` optionally rescales the per-lot expectation to inject
    inter-lot preparation variation (default: none).
    """
    sig = np.asarray(signal_per_bin, dtype=float)
    noi = np.asarray(noise_per_bin, dtype=float)
    if sig.shape != (config.n_bins,) or noi.shape != (config.n_bins,):
        raise ValueError("per-bin expectation arrays must match the bin count")
    if np.any(sig < 0) or np.any(noi < 0):
        raise ValueError("expected counts per bin must be >= 0")
    dark = config.dark_rate_hz * config.bin_size_ns * 1e-9
    lam = config.detector_efficiency * sig + noi + dark
    lam = np.where(_shutter_open(config), lam, 0.0)
    seed_t = seed if isinstance(seed, tuple) else (int(seed),)
    scales = np.ones(config.lots) if lot_scale is None else np.asarray(lot_scale, dtype=float)
    if scales.shape != (config.lots,):
        raise ValueError("lot_scale must provide one factor per lot")
    counts = np.zeros(config.n_bins, dtype=np.int64)
    for lot in range(config.lots):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_t + (lot,))))
        counts += rng.poisson(config.pulses_per_lot * scales[lot] * lam)
    return CountHistogram(
        config.bin_edges_ns,
        counts,
        config.pulses_total,
        seed_t,
        meta={"bin_size_ns": config.bin_size_ns},
    )


def window_sum(hist: CountHistogram, window_ns, ref_window_ns: float | None = None):
    """Integer counts in a window plus the rescaling to a reference length.

    The window is aligned to the nearest bin edges; the actually used window
    is reported back.  Returns (counts, normalized counts, actual window).
    """
    edges = hist.bin_edges_ns
    lo, hi = window_ns
    if hi <= lo:
        raise ValueError(f"empty window {window_ns}")
    i0 = int(np.clip(np.rint((lo - edges[0]) / hist.bin_size_ns), 0, edges.size - 1))
    i1 = int(np.clip(np.rint((hi - edges[0]) / hist.bin_size_ns), 0, edges.size - 1))
    if i1 <= i0:
        raise ValueError(f"window {window_ns} collapses after bin alignment")
    actual = (float(edges[i0]), float(edges[i1]))
    counts = int(hist.counts[i0:i1].sum())
    if ref_window_ns is None:
        normalized = float(counts)
    else:
        normalized = counts * ref_window_ns / (actual[1] - actual[0])
    return counts, normalized, actual


def write_histogram(hist: CountHistogram, path) -> None:
    """Text format: header (bin size, pulses, seed), rows (bin_start_ns, counts).

    Bit-exact across runs with identical seeds: counts are integers and the
    grid is written with fixed precision.
    """
    with open(path, "w") as fh:
        seed_str = ",".join(str(s) for s in hist.seed)
        fh.write(f"# bin_size_ns={float(hist.bin_size_ns)!r} pulses={hist.pulses} seed={seed_str}\n")
        for start, c in zip(hist.bin_edges_ns[:-1], hist.counts):
            fh.write(f"{float(start)!r} {int(c)}\n")


def read_histogram(path) -> CountHistogram:
    with open(path) as fh:
        header = fh.readline().strip()
        fields = dict(item.split("=") for item in header.lstrip("# ").split())
        starts, counts = [], []
        for line in fh:
            a, b = line.split()
            starts.append(float(a))
            counts.append(int(b))
    bin_size = float(fields["bin_size_ns"])
    edges = np.array(starts + [starts[-1] + bin_size])
    seed = tuple(int(s) for s in fields["seed"].split(","))
    return CountHistogram(edges, np.array(counts), int(fields["pulses"]), seed)
