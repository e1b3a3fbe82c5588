"""Waveguide up-converter model.

Covers the sum-frequency conversion efficiency versus pump power, the
multiplicative optical loss chain between reference planes, pump-induced
noise generation, and temporal pump gating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "ConverterParams",
    "LossChain",
    "NoiseModel",
    "PumpGate",
    "conversion_efficiency",
    "noise_counts_per_pulse",
    "chain_transmission",
    "total_efficiency",
    "pump_schedule",
    "sum_frequency_wavelength",
]

_PHASE_TOL_RAD = 1e-9


@dataclass(frozen=True)
class ConverterParams:
    """Nonlinear-waveguide converter parameters.

    ``p_max_w`` is derived from ``(length_cm, eta_n)`` so that the stored
    triple always satisfies L * sqrt(P_max * eta_n) = pi/2.
    """

    length_cm: float = 2.6
    eta_n_per_w_cm2: float = 1.0  # normalized efficiency, fraction/(W cm^2)
    eta_dev_max: float = 0.22
    p_max_w: float | None = None

    def __post_init__(self):
        if self.length_cm <= 0:
            raise ValueError(f"waveguide length must be > 0, got {self.length_cm}")
        if self.eta_n_per_w_cm2 <= 0:
            raise ValueError(f"eta_n must be > 0, got {self.eta_n_per_w_cm2}")
        if not 0 < self.eta_dev_max <= 1:
            raise ValueError(f"eta_dev_max must be in (0, 1], got {self.eta_dev_max}")
        derived = (math.pi / (2.0 * self.length_cm)) ** 2 / self.eta_n_per_w_cm2
        if self.p_max_w is None:
            object.__setattr__(self, "p_max_w", derived)
        else:
            phase = self.length_cm * math.sqrt(self.p_max_w * self.eta_n_per_w_cm2)
            if abs(phase - math.pi / 2.0) > _PHASE_TOL_RAD:
                raise ValueError(
                    "p_max_w inconsistent with (length_cm, eta_n): "
                    f"phase {phase:.12f} rad differs from pi/2 by more than {_PHASE_TOL_RAD}"
                )


def conversion_efficiency(params: ConverterParams, pump_power_w: float) -> float:
    """Device efficiency eta_max * sin^2(L sqrt(P eta_n)) at pump power P."""
    if pump_power_w < 0:
        raise ValueError(f"pump power must be >= 0, got {pump_power_w}")
    arg = params.length_cm * math.sqrt(pump_power_w * params.eta_n_per_w_cm2)
    return params.eta_dev_max * math.sin(arg) ** 2


@dataclass(frozen=True)
class LossChain:
    """Ordered multiplicative loss budget.

    ``stages`` is a sequence of (label, transmission) pairs ordered from the
    converter input toward the detector.  ``pump_coupling`` is recorded for
    bookkeeping only; it never enters any single-photon-level efficiency.
    """

    stages: tuple[tuple[str, float], ...] = (
        ("signal_coupling", 0.55),
        ("filter_stages", 0.71),
        ("fiber_coupling", 0.75),
        ("memory_path", 0.66),
        ("detector", 0.60),
    )
    pump_coupling: float = 0.36

    def __post_init__(self):
        labels = [label for label, _ in self.stages]
        if len(set(labels)) != len(labels):
            raise ValueError("loss chain labels must be unique")
        for label, t in self.stages:
            if not 0 < t <= 1:
                raise ValueError(f"transmission for {label!r} must be in (0, 1], got {t}")

    def index(self, label: str) -> int:
        for i, (name, _) in enumerate(self.stages):
            if name == label:
                return i
        raise KeyError(f"unknown loss-chain label {label!r}")


def chain_transmission(chain: LossChain, from_label: str, to_label: str | None = None) -> float:
    """Product of stage transmissions over [from_label, to_label).

    The interval is half-open: the stage named ``from_label`` is included,
    the stage named ``to_label`` is not (``None`` means through the end).
    This makes sub-chains compose exactly:
    ``chain(a, c) == chain(a, b) * chain(b, c)`` and ``chain(a, a) == 1``.
    """
    i = chain.index(from_label)
    j = len(chain.stages) if to_label is None else chain.index(to_label)
    if j < i:
        raise ValueError(f"{from_label!r} does not precede {to_label!r} in the chain")
    out = 1.0
    for _, t in chain.stages[i:j]:
        out *= t
    return out


@dataclass(frozen=True)
class NoiseModel:
    """Pump-induced noise plus detector dark counts.

    ``alpha``/``beta`` are the quadratic/linear pump-noise coefficients in
    counts per pulse (per W^2 and per W) referred to the model's reference
    integration window (``ref_window_ns``, 400 ns by default).  The noise
    spectrum is taken flat across ``noise_bandwidth_ghz``.
    """

    alpha: float = 0.0  # counts/pulse/W^2 within the reference window
    beta: float = 0.0  # counts/pulse/W within the reference window
    dark_rate_hz: float = 10.0
    noise_bandwidth_ghz: float = 10.0
    gating_suppression: float = 10.0
    ref_window_ns: float = 400.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.dark_rate_hz < 0:
            raise ValueError("noise coefficients and dark rate must be >= 0")
        if self.gating_suppression < 1:
            raise ValueError(f"gating_suppression must be >= 1, got {self.gating_suppression}")
        if self.noise_bandwidth_ghz <= 0 or self.ref_window_ns <= 0:
            raise ValueError("noise bandwidth and reference window must be > 0")

    def pump_noise_per_pulse(self, pump_power_w: float) -> float:
        """Ungated pump-induced counts per pulse in the reference window."""
        return self.alpha * pump_power_w**2 + self.beta * pump_power_w


def noise_counts_per_pulse(
    model: NoiseModel, pump_power_w: float, window_ns: float, gated: bool = False
) -> float:
    """Expected noise counts per pulse.

    Pump-induced counts (referred to the model's reference window) are
    divided by the gating suppression when ``gated``; dark counts scale with
    the given window and are never gated.
    """
    if window_ns <= 0:
        raise ValueError(f"window must be > 0, got {window_ns}")
    gating_factor = model.gating_suppression if gated else 1.0
    pump = model.pump_noise_per_pulse(pump_power_w) / gating_factor
    dark = model.dark_rate_hz * window_ns * 1e-9
    return pump + dark


def total_efficiency(eta_dev: float, eta_trans: float, eta_afc: float) -> float:
    """Total pipeline efficiency: exact product of the three factors."""
    for name, x in (("eta_dev", eta_dev), ("eta_trans", eta_trans), ("eta_afc", eta_afc)):
        if not 0 <= x <= 1:
            raise ValueError(f"{name} must be in [0, 1], got {x}")
    return eta_dev * eta_trans * eta_afc


@dataclass(frozen=True)
class PumpGate:
    """Step gating schedule: the pump is suppressed on [on_at, on_at + duration)."""

    gate_on_at_ns: float
    gate_duration_ns: float = field(default=0.0)

    def __post_init__(self):
        if self.gate_duration_ns < 0:
            raise ValueError("gate duration must be >= 0")

    @property
    def gate_off_at_ns(self) -> float:
        return self.gate_on_at_ns + self.gate_duration_ns

    def is_gated(self, t_ns):
        """Boolean gating flag, vectorized over time (ns)."""
        import numpy as np

        t = np.asarray(t_ns)
        return (t >= self.gate_on_at_ns) & (t < self.gate_off_at_ns)


def pump_schedule(gate_on_at_ns: float, gate_duration_ns: float) -> PumpGate:
    """Build the time-dependent gating flag used to shape the noise floor."""
    return PumpGate(gate_on_at_ns, gate_duration_ns)


def sum_frequency_wavelength(signal_nm: float, pump_nm: float) -> float:
    """Output wavelength of the three-wave process: 1/out = 1/signal + 1/pump."""
    if signal_nm <= 0 or pump_nm <= 0:
        raise ValueError("wavelengths must be > 0")
    return 1.0 / (1.0 / signal_nm + 1.0 / pump_nm)
