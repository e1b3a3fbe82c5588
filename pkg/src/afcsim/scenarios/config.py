"""Scenario configuration: schema, defaults, strict TOML ingestion.

A scenario bundles every knob of one simulated experiment run.  Loading is
strict: unknown keys are hard errors with field-level messages, and every
default that fills a missing key is logged.  The resolved scenario hashes
deterministically for output provenance footers.
"""

from __future__ import annotations

import ast
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from ..conversion import ConverterParams, LossChain, NoiseModel
from ..holeburning import EXCITED_LABELS, HyperfineStructure

log = logging.getLogger(__name__)

__all__ = [
    "Scenario",
    "ConfigError",
    "CrystalConfig",
    "MemoryPrepConfig",
    "CombConfig",
    "PulseConfig",
    "DetectionParams",
    "RunConfig",
    "load_scenario",
    "scenario_from_dict",
    "apply_overrides",
    "scenario_hash",
]


class ConfigError(ValueError):
    """Scenario file violates the schema; message carries the field path."""


@dataclass(frozen=True)
class CrystalConfig:
    """Storage-crystal bulk properties."""

    absorption_coeff_per_cm: float = 23.0
    length_cm: float = 0.5
    d1_line_width_ghz: float = 9.0  # weak-axis absorbing line seen by broadband noise
    d1_line_depth: float | None = None  # None -> fitted to the 33% noise reduction
    d2_line_width_ghz: float = 10.0  # storage-axis inhomogeneous line

    def __post_init__(self):
        if self.absorption_coeff_per_cm <= 0 or self.length_cm <= 0:
            raise ConfigError("crystal absorption coefficient and length must be > 0")

    @property
    def d_max(self) -> float:
        return self.absorption_coeff_per_cm * self.length_cm


@dataclass(frozen=True)
class MemoryPrepConfig:
    """Spectral-preparation sequence parameters."""

    pit_only: bool = False
    pit_center_mhz: float = 0.0
    pit_width_mhz: float = 12.0
    sweep_offset_mhz: float = 30.0
    sweep_width_mhz: float = 4.0
    prep_fluence: float = 30.0
    prep_cycles: int = 8
    target_excited: str = "3/2e"
    grid_span_mhz: tuple[float, float] = (-40.0, 65.0)
    grid_resolution_mhz: float = 0.002

    def __post_init__(self):
        if self.pit_width_mhz <= 0 or self.sweep_width_mhz < 0:
            raise ConfigError("pit width must be > 0 and sweep width >= 0")
        if self.target_excited not in EXCITED_LABELS:
            raise ConfigError(f"memory.target_excited must be one of {EXCITED_LABELS}")
        if self.prep_cycles < 1:
            raise ConfigError("memory.prep_cycles must be >= 1")


@dataclass(frozen=True)
class CombConfig:
    """Comb tailoring parameters; center defaults to the burn-back feature."""

    bandwidth_mhz: float = 4.0
    lineshape: str = "square"
    finesse_target: float = 3.0
    gamma_min_mhz: float = 0.09
    d0: float = 0.0
    center_mhz: float | None = None
    depth_scale: float | None = None  # None -> calibrated

    def __post_init__(self):
        if self.lineshape not in ("square", "gaussian"):
            raise ConfigError(f"comb.lineshape must be 'square' or 'gaussian'")
        if self.finesse_target <= 1:
            raise ConfigError("comb.finesse_target must be > 1")
        if self.gamma_min_mhz <= 0:
            raise ConfigError("comb.gamma_min_mhz must be > 0")


@dataclass(frozen=True)
class PulseConfig:
    shape: str = "gaussian"
    fwhm_ns: float = 140.0
    carrier_detuning_mhz: float = 0.0  # relative to the comb center
    peak_time_ns: float = 1500.0

    def __post_init__(self):
        if self.shape not in ("gaussian", "square"):
            raise ConfigError("pulse.shape must be 'gaussian' or 'square'")
        if self.fwhm_ns <= 0:
            raise ConfigError("pulse.fwhm_ns must be > 0")


@dataclass(frozen=True)
class DetectionParams:
    """Detection bookkeeping; windows are derived per case at run time."""

    detector_efficiency: float = 0.60
    bin_size_ns: float = 10.24
    pulses_total: int = 1_200_000
    pulse_rate_hz: float = 5.0e4
    lots: int = 200
    pulses_per_lot: int = 6000
    signal_window_length_ns: float = 400.0
    noise_window_offset_ns: float = 7480.0
    noise_window_length_ns: float = 2360.0
    gate_lead_ns: float = 600.0
    gate_duration_ns: float = 5000.0

    def __post_init__(self):
        if self.lots * self.pulses_per_lot != self.pulses_total:
            raise ConfigError(
                "detection.lots * detection.pulses_per_lot must equal detection.pulses_total"
            )


@dataclass(frozen=True)
class RunConfig:
    seed: int = 20150914
    pump_power_w: float = 0.144
    pump_powers_w: tuple = ()  # efficiency/noise sweep when non-empty
    mu_values: tuple = (0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
    storage_times_us: tuple = (1.6,)
    mu_per_storage: tuple = ()  # defaults to 1.0 per storage time
    cases: tuple = ("fc_only", "pit", "echo")

    def __post_init__(self):
        for c in self.cases:
            if c not in ("fc_only", "pit", "echo"):
                raise ConfigError(f"run.cases entry {c!r} not one of fc_only/pit/echo")
        if self.mu_per_storage and len(self.mu_per_storage) != len(self.storage_times_us):
            raise ConfigError("run.mu_per_storage must match run.storage_times_us in length")


@dataclass(frozen=True)
class Scenario:
    converter: ConverterParams = field(default_factory=ConverterParams)
    losses: LossChain = field(default_factory=LossChain)
    noise: NoiseModel = field(default_factory=NoiseModel)
    hyperfine: HyperfineStructure = field(default_factory=HyperfineStructure)
    crystal: CrystalConfig = field(default_factory=CrystalConfig)
    memory: MemoryPrepConfig = field(default_factory=MemoryPrepConfig)
    comb: CombConfig = field(default_factory=CombConfig)
    pulse: PulseConfig = field(default_factory=PulseConfig)
    detection: DetectionParams = field(default_factory=DetectionParams)
    run: RunConfig = field(default_factory=RunConfig)

    def storage_mu(self, i: int) -> float:
        if self.run.mu_per_storage:
            return self.run.mu_per_storage[i]
        return 1.0


_SECTIONS = {
    "converter": (ConverterParams, {"length_cm", "eta_n_per_w_cm2", "eta_dev_max", "p_max_w"}),
    "noise": (
        NoiseModel,
        {
            "alpha",
            "beta",
            "dark_rate_hz",
            "noise_bandwidth_ghz",
            "gating_suppression",
            "ref_window_ns",
        },
    ),
    "hyperfine": (
        HyperfineStructure,
        {
            "ground_splittings_mhz",
            "excited_splittings_mhz",
            "oscillator_strengths",
            "t1_optical_us",
            "t1_spin_s",
        },
    ),
    "crystal": (CrystalConfig, None),
    "memory": (MemoryPrepConfig, None),
    "comb": (CombConfig, None),
    "pulse": (PulseConfig, None),
    "detection": (DetectionParams, None),
    "run": (RunConfig, None),
}


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _build_section(name, cls, allowed, data):
    fields = {f.name for f in dataclasses.fields(cls)}
    allowed = allowed or fields
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{name}]: " + ", ".join(sorted(unknown)))
    kwargs = {k: _tuplify(v) for k, v in data.items()}
    for f in dataclasses.fields(cls):
        if f.name in allowed and f.name not in kwargs:
            default = (
                f.default
                if f.default is not dataclasses.MISSING
                else (f.default_factory() if f.default_factory is not dataclasses.MISSING else None)
            )
            log.info("scenario: [%s] %s defaulted to %r", name, f.name, default)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def _build_losses(data):
    allowed = {"pump_coupling", "stages"}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError("unknown key(s) in [losses]: " + ", ".join(sorted(unknown)))
    kwargs = {}
    if "pump_coupling" in data:
        kwargs["pump_coupling"] = data["pump_coupling"]
    else:
        log.info("scenario: [losses] pump_coupling defaulted to 0.36")
    if "stages" in data:
        stages = []
        for i, st in enumerate(data["stages"]):
            extra = set(st) - {"label", "transmission"}
            if extra:
                raise ConfigError(
                    f"unknown key(s) in [losses.stages][{i}]: " + ", ".join(sorted(extra))
                )
            if "label" not in st or "transmission" not in st:
                raise ConfigError(f"[losses.stages][{i}] needs 'label' and 'transmission'")
            stages.append((st["label"], st["transmission"]))
        kwargs["stages"] = tuple(stages)
    else:
        log.info("scenario: [losses] stages defaulted")
    try:
        return LossChain(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[losses]: {exc}") from exc


def scenario_from_dict(data: dict) -> Scenario:
    """Build a fully validated scenario, applying and logging defaults."""
    known = set(_SECTIONS) | {"losses"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError("unknown top-level section(s): " + ", ".join(sorted(unknown)))
    kwargs = {}
    for name, (cls, allowed) in _SECTIONS.items():
        if name in data:
            if not isinstance(data[name], dict):
                raise ConfigError(f"[{name}] must be a table")
            kwargs[name] = _build_section(name, cls, allowed, data[name])
        else:
            log.info("scenario: section [%s] defaulted entirely", name)
            kwargs[name] = _build_section(name, cls, allowed, {})
    kwargs["losses"] = _build_losses(data.get("losses", {}))
    return Scenario(**kwargs)


def load_scenario(path) -> Scenario:
    """Read a TOML scenario file; an empty file yields the baseline scenario."""
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    return scenario_from_dict(data)


def apply_overrides(data: dict, overrides) -> dict:
    """Apply dotted ``section.key=value`` overrides to a raw config dict."""
    out = json.loads(json.dumps(data))  # deep copy of plain data
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        path, raw = item.split("=", 1)
        try:
            value = ast.literal_eval(raw)
        except (ValueError, SyntaxError):
            value = raw
        keys = path.split(".")
        node = out
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override path {path!r} crosses a non-table entry")
        node[keys[-1]] = value
    return out


def scenario_hash(scn: Scenario) -> str:
    blob = json.dumps(dataclasses.asdict(scn), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
