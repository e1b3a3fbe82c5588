"""Scenario orchestration: wiring the component models into experiment runs.

Three canonical drivers mirror the measured figures: a pump-power sweep of
the converter (efficiency, noise and SNR versus power), the three-path
comparison (converter only, transparency window, stored-and-retrieved) that
yields mu_1 per path, and the storage-time sweep (echo/total efficiency and
SNR versus storage time).

Two scalars are calibrated against measured anchors, exactly once each:
the quadratic noise coefficient ``alpha`` (converter-only SNR = 2.70 at
mu_in = 1 and 144 mW pump in a 400 ns window) and the comb depth scale
(echo efficiency 19.8% for 140 ns pulses at 1.6 us storage).  Everything
else is predicted.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .. import analysis, counting, holeburning as hb, propagation as prop
from ..conversion import (
    NoiseModel,
    PumpGate,
    chain_transmission,
    conversion_efficiency,
    total_efficiency,
)
from .config import Scenario, scenario_hash

__all__ = [
    "CalibrationError",
    "Calibration",
    "MemoryPipeline",
    "CaseResult",
    "calibrate_alpha",
    "calibrate_depth_scale",
    "calibrate",
    "run_cases",
    "run_fig2",
    "run_fig3",
    "run_fig4",
    "write_case_table",
    "write_fig2_table",
    "write_fig4_table",
]

SNR_ANCHOR = 2.70  # converter-only SNR at mu_in = 1, 144 mW, 400 ns window
AFC_EFFICIENCY_ANCHOR = 0.198  # echo efficiency, 140 ns pulses, 1.6 us storage
_CASE_INDEX = {"fc_only": 0, "pit": 1, "echo": 2}


class CalibrationError(RuntimeError):
    """A calibration anchor cannot be reached with the configured model."""


@dataclass(frozen=True)
class Calibration:
    alpha: float
    depth_scale: float


def calibrate_alpha(scn: Scenario) -> float:
    """Fix the quadratic noise coefficient from the converter-only anchor.

    With beta = 0, the noise in the reference window at the anchor pump
    power must satisfy SNR = signal/noise = 2.70 for one input photon per
    pulse, so alpha = (signal/2.70 - dark counts) / P^2.
    """
    p = scn.run.pump_power_w
    eta_dev = conversion_efficiency(scn.converter, p)
    signal = 1.0 * eta_dev * scn.detection.detector_efficiency
    dark = scn.noise.dark_rate_hz * scn.noise.ref_window_ns * 1e-9
    target_noise = signal / SNR_ANCHOR - dark
    if target_noise <= 0:
        raise CalibrationError("dark counts alone exceed the anchor noise level")
    return target_noise / p**2


class MemoryPipeline:
    """Prepared storage medium: profiles, transfer functions, envelopes.

    Preparation (pit, burn-back, cleaning) runs once; combs for different
    storage times are tailored from the same prepared feature.
    """

    def __init__(self, scn: Scenario):
        self.scn = scn
        mem, comb = scn.memory, scn.comb
        self._ens0 = hb.fresh_ensemble(
            scn.hyperfine,
            scn.crystal.d_max,
            mem.grid_span_mhz,
            mem.grid_resolution_mhz,
        )
        self._pit_only = hb.burn_pit(
            self._ens0, mem.pit_center_mhz, mem.pit_width_mhz, mem.prep_fluence
        )
        self._prepared = None
        shift = (
            scn.hyperfine.ground_energies_mhz[0] - scn.hyperfine.ground_energies_mhz[2]
        )
        self.comb_center_mhz = (
            comb.center_mhz
            if comb.center_mhz is not None
            else mem.pit_center_mhz + mem.sweep_offset_mhz - shift
        )

    @property
    def prepared(self):
        if self._prepared is None:
            mem = self.scn.memory
            self._prepared = hb.prepare_feature(
                self._ens0,
                mem.pit_center_mhz,
                mem.pit_width_mhz,
                mem.sweep_offset_mhz,
                mem.sweep_width_mhz,
                mem.prep_fluence,
                mem.prep_cycles,
                mem.target_excited,
            )
        return self._prepared

    def comb_spec(self, storage_time_us: float) -> hb.CombSpec:
        c = self.scn.comb
        return hb.CombSpec.from_storage_time(
            storage_time_us,
            c.finesse_target,
            c.gamma_min_mhz,
            self.comb_center_mhz,
            c.bandwidth_mhz,
            c.lineshape,
            c.d0,
        )

    def tailored_profile(self, storage_time_us: float, depth_scale: float):
        spec = self.comb_spec(storage_time_us)
        ens = hb.tailor_comb(self.prepared, spec, self.scn.comb.gamma_min_mhz, depth_scale)
        res = ens.resolution_mhz
        freqs = np.arange(-20.0, 32.0 + res, res) + self.scn.memory.pit_center_mhz
        return hb.absorption_profile(ens, freqs), spec

    def pit_profile(self):
        res = self._pit_only.resolution_mhz
        freqs = np.arange(-20.0, 20.0 + res, res) + self.scn.memory.pit_center_mhz
        return hb.absorption_profile(self._pit_only, freqs)

    def _pulse(self, grid, mu=1.0):
        p = self.scn.pulse
        maker = prop.gaussian_pulse if p.shape == "gaussian" else prop.square_pulse
        return maker(grid, p.fwhm_ns, mu, 0.0, p.carrier_detuning_mhz)

    def echo_solution(self, storage_time_us: float, depth_scale: float):
        """Unit-input propagation through the tailored comb.

        Returns (output envelope, echo efficiency, comb spec, profile).
        """
        profile, spec = self.tailored_profile(storage_time_us, depth_scale)
        grid = prop.simulation_grid(storage_time_us, spec.gamma_mhz)
        tf = prop.transfer_function(profile, grid, self.comb_center_mhz, spec.gamma_mhz)
        pulse = self._pulse(grid)
        out = prop.propagate(pulse, tf)
        window_us = self.scn.detection.signal_window_length_ns * 1e-3
        eta = prop.afc_efficiency(pulse, tf, storage_time_us, window_us, 0.0, output=out)
        return out, eta, spec, profile

    def pit_transmission(self) -> float:
        profile = self.pit_profile()
        grid = prop.simulation_grid(0.0, 1.0)
        tf = prop.transfer_function(profile, grid, self.scn.memory.pit_center_mhz, 1.0)
        pulse = self._pulse(grid)
        window_us = self.scn.detection.signal_window_length_ns * 1e-3
        return prop.transparency_transmission(pulse, tf, window_us)


def calibrate_depth_scale(
    scn: Scenario,
    pipeline: MemoryPipeline | None = None,
    target: float = AFC_EFFICIENCY_ANCHOR,
    tol: float = 5e-4,
) -> float:
    """Fix the comb depth scale so the anchor scenario hits the echo target.

    The echo efficiency grows monotonically with tooth depth below the
    reabsorption optimum, so a bisection on the depth scale converges; the
    achieved-depth ceiling makes the anchor unreachable only if the
    preparation yield is too low, which is reported as an error.
    """
    pipe = pipeline or MemoryPipeline(scn)
    anchor_scn = replace(
        scn,
        pulse=replace(scn.pulse, fwhm_ns=140.0),
        detection=replace(scn.detection, signal_window_length_ns=400.0),
    )
    anchor = MemoryPipeline(anchor_scn)
    anchor._prepared = pipe.prepared  # share the preparation work

    def eta(scale):
        return anchor.echo_solution(1.6, scale)[1]

    lo, hi = 1e-3, 1.0
    eta_hi = eta(hi)
    if eta_hi < target - tol:
        raise CalibrationError(
            f"echo efficiency at full depth is {eta_hi:.4f} < target {target}; "
            "preparation yield too low for the requested anchor"
        )
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        v = eta(mid)
        if abs(v - target) <= tol:
            return mid
        if v < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def calibrate(scn: Scenario, pipeline: MemoryPipeline | None = None) -> Calibration:
    """Run both documented calibration routines (the only fitted scalars)."""
    alpha = scn.noise.alpha if scn.noise.alpha > 0 else calibrate_alpha(scn)
    if scn.comb.depth_scale is not None:
        depth = scn.comb.depth_scale
    else:
        depth = calibrate_depth_scale(scn, pipeline)
    return Calibration(alpha, depth)


# ---------------------------------------------------------------------------
# expected detector rates per case


def _noise_model(scn: Scenario, calib: Calibration) -> NoiseModel:
    if scn.noise.alpha > 0:
        return scn.noise
    return replace(scn.noise, alpha=calib.alpha)


def _pulse_shape_per_ns(scn: Scenario, edges_ns):
    """Unit-area input pulse shape integrated over histogram bins."""
    p = scn.pulse
    t = np.linspace(edges_ns[0], edges_ns[-1], 8 * (edges_ns.size - 1))
    if p.shape == "gaussian":
        sig = p.fwhm_ns / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        rate = np.exp(-((t - p.peak_time_ns) ** 2) / (2.0 * sig**2))
        rate /= sig * math.sqrt(2.0 * math.pi)
    else:
        rate = ((t >= p.peak_time_ns - p.fwhm_ns / 2) & (t < p.peak_time_ns + p.fwhm_ns / 2)) / (
            p.fwhm_ns
        )
    return counting.bin_rates(t, rate, edges_ns)


def _detection_for(scn: Scenario, case: str, tau_us: float) -> counting.DetectionConfig:
    det = scn.detection
    peak = scn.pulse.peak_time_ns
    w = det.signal_window_length_ns
    if case == "echo":
        center = peak + tau_us * 1e3
        signal_window = (center - w / 2.0, center + w / 2.0)
        gate_start = peak + tau_us * 1e3 - det.gate_lead_ns
        noise_window = (gate_start, gate_start + det.gate_duration_ns)
    else:
        signal_window = (peak - w / 2.0, peak + w / 2.0)
        noise_window = (
            peak + det.noise_window_offset_ns,
            peak + det.noise_window_offset_ns + det.noise_window_length_ns,
        )
    end = max(signal_window[1], noise_window[1]) + 500.0
    n_bins = int(math.ceil(end / det.bin_size_ns))
    return counting.DetectionConfig(
        detector_efficiency=det.detector_efficiency,
        dark_rate_hz=scn.noise.dark_rate_hz,
        bin_size_ns=det.bin_size_ns,
        pulses_total=det.pulses_total,
        pulse_rate_hz=det.pulse_rate_hz,
        lots=det.lots,
        pulses_per_lot=det.pulses_per_lot,
        n_bins=n_bins,
        signal_window_ns=signal_window,
        noise_window_ns=noise_window,
    )


@dataclass
class CaseRates:
    """Per-pulse expected rates on the histogram bins, for one (case, mu)."""

    config: counting.DetectionConfig
    signal_per_bin: np.ndarray  # photons at the detector (efficiency applied later)
    noise_per_bin: np.ndarray  # counts at the detector, darks excluded
    eta_dev: float
    eta_afc: float | None = None
    eta_trans: float | None = None
    gate: PumpGate | None = None


def _case_rates(
    scn: Scenario,
    case: str,
    mu: float,
    calib: Calibration,
    pipeline: MemoryPipeline | None,
    tau_us: float,
) -> CaseRates:
    noise_model = _noise_model(scn, calib)
    p = scn.run.pump_power_w
    eta_dev = conversion_efficiency(scn.converter, p)
    cfg = _detection_for(scn, case, tau_us)
    edges = cfg.bin_edges_ns
    pump_rate = noise_model.pump_noise_per_pulse(p) / noise_model.ref_window_ns  # counts/ns
    mem_path = chain_transmission(scn.losses, "memory_path", "detector")

    if case == "fc_only":
        signal = mu * eta_dev * _pulse_shape_per_ns(scn, edges)
        noise = np.full(cfg.n_bins, pump_rate * cfg.bin_size_ns)
        return CaseRates(cfg, signal, noise, eta_dev)

    if pipeline is None:
        raise ValueError(f"case {case!r} needs a prepared memory pipeline")

    if case == "pit":
        t_pit = pipeline.pit_transmission()
        signal = mu * eta_dev * t_pit * mem_path * _pulse_shape_per_ns(scn, edges)
        survival = prop.noise_filter_fraction(
            pipeline.pit_profile(),
            noise_model.noise_bandwidth_ghz,
            "d1_line",
            scn.crystal.d1_line_width_ghz,
            scn.crystal.d1_line_depth,
        )
        noise = np.full(cfg.n_bins, pump_rate * survival * mem_path * cfg.bin_size_ns)
        return CaseRates(cfg, signal, noise, eta_dev, eta_trans=t_pit)

    # echo case
    out, eta_afc, spec, profile = pipeline.echo_solution(tau_us, calib.depth_scale)
    t_ns = scn.pulse.peak_time_ns + out.times_us * 1e3
    out_rate = out.intensity() * 1e-3  # photons per ns for unit input
    signal = mu * eta_dev * mem_path * counting.bin_rates(t_ns, out_rate, edges)

    gate = PumpGate(
        scn.pulse.peak_time_ns + tau_us * 1e3 - scn.detection.gate_lead_ns,
        scn.detection.gate_duration_ns,
    )
    centers = cfg.bin_centers_ns
    supp = np.where(gate.is_gated(centers), noise_model.gating_suppression, 1.0)
    bw = noise_model.noise_bandwidth_ghz
    direct_leak = scn.memory.pit_width_mhz * 1e-3 / bw + max(
        0.0, 1.0 - scn.crystal.d2_line_width_ghz / bw
    )
    stored_leak = prop.noise_filter_fraction(profile, bw, "comb_band", echo_efficiency=eta_afc)
    supp_delayed = np.where(gate.is_gated(centers - tau_us * 1e3), noise_model.gating_suppression, 1.0)
    noise_rate = pump_rate * mem_path * (direct_leak / supp + stored_leak / supp_delayed)
    noise = noise_rate * cfg.bin_size_ns
    return CaseRates(cfg, signal, noise, eta_dev, eta_afc=eta_afc, gate=gate)


# ---------------------------------------------------------------------------
# drivers


@dataclass
class CaseResult:
    case: str
    tau_us: float
    points: list
    fit: analysis.MuOneFit | None
    eta_dev: float
    eta_afc: float | None
    eta_trans: float | None
    eta_tot_measured: tuple | None  # (value, sigma) at the largest mu
    histograms: dict


def _measure_point(scn, rates: CaseRates, case_idx: int, pt_idx: int, mu: float):
    seed = scn.run.seed
    sig_hist = counting.simulate_counts(
        rates.signal_per_bin, rates.noise_per_bin, rates.config, (seed, case_idx, pt_idx, 0)
    )
    if rates.gate is not None:
        # gated path: the noise estimate comes from an input-blocked run
        # integrated over the whole pump-off interval
        blocked = counting.simulate_counts(
            np.zeros_like(rates.signal_per_bin),
            rates.noise_per_bin,
            rates.config,
            (seed, case_idx, pt_idx, 1),
        )
        n_raw, _, actual = counting.window_sum(blocked, rates.config.noise_window_ns)
    else:
        blocked = None
        n_raw, _, actual = counting.window_sum(sig_hist, rates.config.noise_window_ns)
    s_counts, _, sig_actual = counting.window_sum(sig_hist, rates.config.signal_window_ns)
    norm = (sig_actual[1] - sig_actual[0]) / (actual[1] - actual[0])
    point = analysis.snr(s_counts, n_raw, norm, mu)
    return point, sig_hist, blocked


def run_cases(scn: Scenario, calibration: Calibration | None = None) -> list[CaseResult]:
    """Run the configured optical paths over the mu sweep at each storage time."""
    needs_memory = any(c != "fc_only" for c in scn.run.cases)
    pipeline = MemoryPipeline(scn) if needs_memory else None
    calib = calibration or calibrate(scn, pipeline)
    results = []
    for tau_idx, tau in enumerate(scn.run.storage_times_us):
        for case in scn.run.cases:
            if case != "echo" and tau_idx > 0:
                continue  # non-echo paths do not depend on the storage time
            points, hists = [], {}
            eta_afc = eta_trans = None
            eta_tot = None
            for j, mu in enumerate(scn.run.mu_values):
                rates = _case_rates(scn, case, mu, calib, pipeline, tau)
                eta_afc, eta_trans = rates.eta_afc, rates.eta_trans
                pt, sig_hist, blocked = _measure_point(
                    scn, rates, _CASE_INDEX[case] + 10 * tau_idx, j, mu
                )
                points.append(pt)
                hists[(case, tau, mu)] = sig_hist
                if case == "echo" and mu == max(scn.run.mu_values):
                    s_counts, _, _ = counting.window_sum(sig_hist, rates.config.signal_window_ns)
                    denom = mu * rates.config.pulses_total * rates.config.detector_efficiency
                    eta_tot = (s_counts / denom, math.sqrt(max(s_counts, 1)) / denom)
            fit = analysis.fit_mu1(points) if points else None
            results.append(
                CaseResult(
                    case,
                    tau,
                    points=points,
                    fit=fit,
                    eta_dev=conversion_efficiency(scn.converter, scn.run.pump_power_w),
                    eta_afc=eta_afc,
                    eta_trans=eta_trans,
                    eta_tot_measured=eta_tot,
                    histograms=hists,
                )
            )
    return results


def run_fig3(scn: Scenario, calibration: Calibration | None = None):
    """Three-path comparison at fixed pump power; returns the case results."""
    return run_cases(scn, calibration)


def run_fig2(scn: Scenario, calibration: Calibration | None = None):
    """Pump-power sweep: device efficiency, noise per pulse in the signal
    window, and SNR at mu_in = 1.  Rows ordered by pump power."""
    calib = calibration or Calibration(
        scn.noise.alpha if scn.noise.alpha > 0 else calibrate_alpha(scn), 1.0
    )
    powers = scn.run.pump_powers_w or tuple(np.linspace(0.0, 0.36, 11).round(4))
    mu = scn.run.mu_values[0] if scn.run.mu_values else 1.0
    rows = []
    for i, p in enumerate(sorted(powers)):
        scn_p = replace(scn, run=replace(scn.run, pump_power_w=float(p)))
        rates = _case_rates(scn_p, "fc_only", mu, calib, None, 0.0)
        pt, sig_hist, _ = _measure_point(scn_p, rates, 100, i, mu)
        n_win, _, actual = counting.window_sum(sig_hist, rates.config.noise_window_ns)
        w_sig = rates.config.signal_window_ns
        noise_per_pulse = (
            n_win * ((w_sig[1] - w_sig[0]) / (actual[1] - actual[0])) / rates.config.pulses_total
        )
        noise_sigma = (
            math.sqrt(max(n_win, 1))
            * ((w_sig[1] - w_sig[0]) / (actual[1] - actual[0]))
            / rates.config.pulses_total
        )
        rows.append(
            {
                "pump_power_w": float(p),
                "eta_dev": rates.eta_dev,
                "noise_per_pulse": noise_per_pulse,
                "noise_sigma": noise_sigma,
                "snr": pt.snr,
                "snr_sigma": pt.sigma,
            }
        )
    return rows


def run_fig4(scn: Scenario, calibration: Calibration | None = None):
    """Storage-time sweep with the tooth-width floor; echo path only."""
    pipeline = MemoryPipeline(scn)
    calib = calibration or calibrate(scn, pipeline)
    mem_path = chain_transmission(scn.losses, "memory_path", "detector")
    rows = []
    for i, tau in enumerate(scn.run.storage_times_us):
        mu = scn.storage_mu(i)
        rates = _case_rates(scn, "echo", mu, calib, pipeline, tau)
        pt, sig_hist, blocked = _measure_point(scn, rates, 200, i, mu)
        eta_tot = total_efficiency(rates.eta_dev, mem_path, rates.eta_afc)
        mu1 = mu / pt.snr if pt.snr > 0 else math.inf
        rows.append(
            {
                "storage_time_us": tau,
                "mu_in": mu,
                "eta_afc": rates.eta_afc,
                "eta_tot": eta_tot,
                "snr": pt.snr,
                "snr_sigma": pt.sigma,
                "mu1_est": mu1,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# table output


def _footer(scn: Scenario) -> str:
    return f"scenario={scenario_hash(scn)} seed={scn.run.seed}"


def write_case_table(results, scn: Scenario, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case", "storage_time_us", "mu_in", "S", "N", "snr", "sigma"])
        for res in results:
            for pt in res.points:
                writer.writerow(
                    [
                        res.case,
                        f"{res.tau_us:g}",
                        f"{pt.mu_in:g}",
                        f"{pt.s_counts:g}",
                        f"{pt.n_counts:.6g}",
                        f"{pt.snr:.6g}",
                        f"{pt.sigma:.6g}",
                    ]
                )
        for res in results:
            if res.fit is not None:
                fh.write(
                    f"# {res.case} tau={res.tau_us:g}us mu1={res.fit.mu1:.6g} "
                    f"mu1_sigma={res.fit.mu1_sigma:.3g} slope={res.fit.slope:.6g}\n"
                )
        fh.write(f"# {_footer(scn)}\n")


def write_fig2_table(rows, scn: Scenario, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["pump_power_w", "eta_dev", "noise_per_pulse", "noise_sigma", "snr", "snr_sigma"]
        )
        for r in rows:
            writer.writerow(
                [
                    f"{r['pump_power_w']:g}",
                    f"{r['eta_dev']:.6g}",
                    f"{r['noise_per_pulse']:.6g}",
                    f"{r['noise_sigma']:.3g}",
                    f"{r['snr']:.6g}",
                    f"{r['snr_sigma']:.3g}",
                ]
            )
        fh.write(f"# {_footer(scn)}\n")


def write_fig4_table(rows, scn: Scenario, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["storage_time_us", "mu_in", "eta_afc", "eta_tot", "snr", "snr_sigma", "mu1_est"]
        )
        for r in rows:
            writer.writerow(
                [
                    f"{r['storage_time_us']:g}",
                    f"{r['mu_in']:g}",
                    f"{r['eta_afc']:.6g}",
                    f"{r['eta_tot']:.6g}",
                    f"{r['snr']:.6g}",
                    f"{r['snr_sigma']:.3g}",
                    f"{r['mu1_est']:.6g}",
                ]
            )
        fh.write(f"# {_footer(scn)}\n")
