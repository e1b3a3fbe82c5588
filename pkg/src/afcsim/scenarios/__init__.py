"""Scenario configuration and experiment drivers."""

from importlib import resources

from .config import (
    CombConfig,
    ConfigError,
    CrystalConfig,
    DetectionParams,
    MemoryPrepConfig,
    PulseConfig,
    RunConfig,
    Scenario,
    apply_overrides,
    load_scenario,
    scenario_from_dict,
    scenario_hash,
)
from .runners import (
    AFC_EFFICIENCY_ANCHOR,
    Calibration,
    CalibrationError,
    CaseResult,
    MemoryPipeline,
    SNR_ANCHOR,
    calibrate,
    calibrate_alpha,
    calibrate_depth_scale,
    run_cases,
    run_fig2,
    run_fig3,
    run_fig4,
    write_case_table,
    write_fig2_table,
    write_fig4_table,
)

__all__ = [name for name in dir() if not name.startswith("_")]


def preset_path(name: str):
    """Path to a shipped preset scenario (fig2, fig3 or fig4)."""
    ref = resources.files("afcsim.presets").joinpath(f"{name}.toml")
    if not ref.is_file():
        raise ConfigError(f"no preset named {name!r}")
    return ref
