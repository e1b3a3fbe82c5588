"""Spectral preparation of an inhomogeneously broadened hyperfine ensemble.

Models pit creation, burn-back, class cleaning and comb tailoring for a
three-ground / three-excited hyperfine system embedded in a broad (GHz)
inhomogeneous line.  Ions are parameterized by a reference detuning
``nu`` (the frequency of their lowest-ground-to-lowest-excited transition);
each ion carries population fractions over the three ground states, and a
transition (g, e) of an ion at ``nu`` absorbs at ``nu + offset(g, e)``.
At any probe detuning, nine ion classes (ground x excited assignment)
contribute; the per-class populations are shifted views of the same state.

Level conventions follow the storage material: the upper ground sublevel is
+-1/2g (splittings 10.2 and 17.3 MHz downward) and the lowest excited
sublevel is +-1/2e (splittings 4.8 and 4.6 MHz upward).  With these signs a
burn-back sweep placed above the pit returns population to the +-1/2g and
+-3/2g states absorbing inside the pit.

Burning dynamics are steady-state rate equations: preparation is slow
compared to the optical lifetime and fast compared to the ground-state
lifetime, so each band burn is an exponential approach (in the fluence
parameter) to the pumping fixed point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .propagation import SpectralFunction

__all__ = [
    "GROUND_LABELS",
    "EXCITED_LABELS",
    "HyperfineStructure",
    "IonEnsemble",
    "CombSpec",
    "PreparationOrderError",
    "GridSpanError",
    "fresh_ensemble",
    "burn_bands",
    "burn_pit",
    "burn_back",
    "clean_class",
    "tailor_comb",
    "prepare_feature",
    "absorption_profile",
    "absorption_components",
    "class_populations",
    "state_totals",
    "dump_profile",
    "load_profile",
]

GROUND_LABELS = ("1/2g", "3/2g", "5/2g")
EXCITED_LABELS = ("1/2e", "3/2e", "5/2e")

# Pump-rate scale per unit fluence and unit oscillator strength, fixed so the
# slowest escape channel (two pumped states exchanging population with
# one-third escape branching, uniform strengths) decays exactly as
# exp(-fluence).
RATE_SCALE = 9.0

_UNBURNED = 1.0 / 3.0


class PreparationOrderError(RuntimeError):
    """A preparation step was applied before its prerequisite."""


class GridSpanError(ValueError):
    """A burn band (including hyperfine images) falls outside the ion grid."""


@dataclass(frozen=True)
class HyperfineStructure:
    """Hyperfine level structure and relative transition strengths.

    ``oscillator_strengths[g][e]`` is the relative strength of the g -> e
    transition; each ground-state row sums to one.  The optical and spin
    population lifetimes are recorded to justify the steady-state treatment
    (preparation is ~ms, far longer than T1_opt and far shorter than
    T1_spin); they do not enter the fixed-point dynamics.
    """

    ground_splittings_mhz: tuple[float, float] = (10.2, 17.3)
    excited_splittings_mhz: tuple[float, float] = (4.8, 4.6)
    oscillator_strengths: tuple = (
        (_UNBURNED, _UNBURNED, _UNBURNED),
        (_UNBURNED, _UNBURNED, _UNBURNED),
        (_UNBURNED, _UNBURNED, _UNBURNED),
    )
    t1_optical_us: float = 164.0
    t1_spin_s: float = 100.0

    def __post_init__(self):
        if any(s <= 0 for s in self.ground_splittings_mhz + self.excited_splittings_mhz):
            raise ValueError("hyperfine splittings must be > 0")
        w = np.asarray(self.oscillator_strengths, dtype=float)
        if w.shape != (3, 3) or np.any(w < 0):
            raise ValueError("oscillator strengths must be a non-negative 3x3 matrix")
        if not np.allclose(w.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("each oscillator-strength row must sum to 1")
        if self.t1_optical_us <= 0 or self.t1_spin_s <= 0:
            raise ValueError("lifetimes must be > 0")

    @property
    def ground_energies_mhz(self) -> np.ndarray:
        """Energies of (1/2g, 3/2g, 5/2g); the +-1/2g sublevel sits on top."""
        s01, s12 = self.ground_splittings_mhz
        return np.array([s01 + s12, s12, 0.0])

    @property
    def excited_energies_mhz(self) -> np.ndarray:
        """Energies of (1/2e, 3/2e, 5/2e); the +-1/2e sublevel sits lowest."""
        s01, s12 = self.excited_splittings_mhz
        return np.array([0.0, s01, s01 + s12])

    @property
    def offsets_mhz(self) -> np.ndarray:
        """offsets[g, e]: transition detuning relative to the ion reference."""
        return self.excited_energies_mhz[None, :] - self.ground_energies_mhz[:, None]

    @property
    def strengths(self) -> np.ndarray:
        return np.asarray(self.oscillator_strengths, dtype=float)

    @property
    def branching(self) -> np.ndarray:
        """branching[e, m]: decay probability from excited e into ground m."""
        w = self.strengths
        col = w.sum(axis=0)
        return (w / col[None, :]).T


@dataclass(frozen=True)
class IonEnsemble:
    """Ground-state populations versus ion reference detuning.

    ``populations[g, i]`` is the fraction of ions at ``centers_mhz[i]`` in
    ground state g; columns sum to one (closed system).  ``d_max`` is the
    optical depth of the unburned line (absorption coefficient x length).
    """

    centers_mhz: np.ndarray
    populations: np.ndarray
    d_max: float = 11.5
    structure: HyperfineStructure = field(default_factory=HyperfineStructure)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.centers_mhz, dtype=float)
        p = np.asarray(self.populations, dtype=float)
        if p.shape != (3, c.size):
            raise ValueError("populations must have shape (3, n_centers)")
        object.__setattr__(self, "centers_mhz", c)
        object.__setattr__(self, "populations", p)

    @property
    def resolution_mhz(self) -> float:
        return float(self.centers_mhz[1] - self.centers_mhz[0])

    def validate(self):
        p = self.populations
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("population fractions must stay within [0, 1]")
        if not np.allclose(p.sum(axis=0), 1.0, rtol=0, atol=1e-9):
            raise ValueError("ground-state populations must sum to 1 at every detuning")


def fresh_ensemble(
    structure: HyperfineStructure | None = None,
    d_max: float = 11.5,
    span_mhz: tuple[float, float] = (-40.0, 65.0),
    resolution_mhz: float = 0.002,
) -> IonEnsemble:
    """Unburned ensemble: equal thermal population in all three ground states."""
    structure = structure or HyperfineStructure()
    n = int(round((span_mhz[1] - span_mhz[0]) / resolution_mhz)) + 1
    centers = span_mhz[0] + np.arange(n) * resolution_mhz
    pops = np.full((3, n), _UNBURNED)
    return IonEnsemble(centers, pops, d_max, structure)


# ---------------------------------------------------------------------------
# band burning (steady-state rate equations)


def _check_bands_on_grid(ens: IonEnsemble, bands) -> None:
    offs = ens.structure.offsets_mhz
    lo_needed = min(b[0] for b in bands) - float(offs.max())
    hi_needed = max(b[1] for b in bands) - float(offs.min())
    if lo_needed < ens.centers_mhz[0] or hi_needed > ens.centers_mhz[-1]:
        raise GridSpanError(
            f"burn bands {bands} (with hyperfine images spanning "
            f"[{lo_needed:.1f}, {hi_needed:.1f}] MHz) exceed the ion grid "
            f"[{ens.centers_mhz[0]:.1f}, {ens.centers_mhz[-1]:.1f}] MHz"
        )


def burn_bands(ens: IonEnsemble, bands, fluence: float) -> IonEnsemble:
    """Steady-state optical pumping of every transition resonant in ``bands``.

    ``bands`` is a list of (lo, hi) detunings in MHz.  Every ion transition
    falling inside any band pumps its ground state at a rate proportional to
    its oscillator strength; decay redistributes population per the
    branching matrix.  The fixed point is approached as exp(-rate*fluence).
    Population is conserved exactly.
    """
    if fluence < 0:
        raise ValueError("fluence must be >= 0")
    if fluence == 0 or not bands:
        return ens
    _check_bands_on_grid(ens, bands)
    st = ens.structure
    offs = st.offsets_mhz
    w = st.strengths
    beta = st.branching
    nu = ens.centers_mhz
    n = nu.size

    in_band = np.zeros((3, 3, n), dtype=bool)
    for g in range(3):
        for e in range(3):
            pos = nu + offs[g, e]
            for lo, hi in bands:
                in_band[g, e] |= (pos >= lo) & (pos <= hi)

    # pattern id per grid point -> group identical 3x3 generators
    bits = in_band.reshape(9, n)
    pattern = np.zeros(n, dtype=np.int64)
    for k in range(9):
        pattern |= bits[k].astype(np.int64) << k
    pops = ens.populations.copy()
    for pid in np.unique(pattern):
        if pid == 0:
            continue
        idx = np.nonzero(pattern == pid)[0]
        mask = np.array([(pid >> k) & 1 for k in range(9)], dtype=float).reshape(3, 3)
        rates = RATE_SCALE * w * mask  # rates[g, e]
        a = np.zeros((3, 3))
        for g in range(3):
            for e in range(3):
                r = rates[g, e]
                if r == 0.0:
                    continue
                a[:, g] += r * beta[e]
                a[g, g] -= r
        prop = expm(a * fluence)
        pops[:, idx] = prop @ pops[:, idx]
    np.clip(pops, 0.0, 1.0, out=pops)
    return replace(ens, populations=pops, meta=dict(ens.meta))


def burn_pit(
    ens: IonEnsemble, center_mhz: float = 0.0, width_mhz: float = 12.0, fluence: float = 30.0
) -> IonEnsemble:
    """Create a transparency window by emptying every state absorbing in it."""
    if width_mhz <= 0:
        raise ValueError("pit width must be > 0")
    band = (center_mhz - width_mhz / 2.0, center_mhz + width_mhz / 2.0)
    out = burn_bands(ens, [band], fluence)
    meta = dict(out.meta)
    meta["pit_band"] = band
    return replace(out, meta=meta)


def burn_back(
    ens: IonEnsemble,
    sweep_center_mhz: float | None = None,
    sweep_width_mhz: float = 4.0,
    fluence: float = 30.0,
) -> IonEnsemble:
    """Sweep above the pit, returning population to states absorbing inside it.

    The default sweep sits +30 MHz from the pit center.  Ions pumped out of
    the lowest ground state land in the upper two; their transitions from
    those states fall inside the pit at class-determined positions.
    """
    if "pit_band" not in ens.meta:
        raise PreparationOrderError("burn_back requires a pit (run burn_pit first)")
    if sweep_width_mhz < 0:
        raise ValueError("sweep width must be >= 0")
    pit_lo, pit_hi = ens.meta["pit_band"]
    if sweep_center_mhz is None:
        sweep_center_mhz = (pit_lo + pit_hi) / 2.0 + 30.0
    if sweep_width_mhz == 0:
        return ens
    band = (sweep_center_mhz - sweep_width_mhz / 2.0, sweep_center_mhz + sweep_width_mhz / 2.0)
    out = burn_bands(ens, [band], fluence)
    meta = dict(out.meta)
    meta["sweep_band"] = band
    st = ens.structure
    shift = st.ground_energies_mhz[0] - st.ground_energies_mhz[2]  # 1/2g above 5/2g
    meta["feature_band"] = (band[0] - shift, band[1] - shift)
    return replace(out, meta=meta)


def _class_mask(ens: IonEnsemble, excited_idx: int) -> np.ndarray:
    """Ions whose lowest-ground transition to the given excited level was swept."""
    lo, hi = ens.meta["sweep_band"]
    e_en = ens.structure.excited_energies_mhz[excited_idx]
    nu = ens.centers_mhz
    return (nu >= lo - e_en) & (nu <= hi - e_en)


def _transfer(pops: np.ndarray, mask: np.ndarray, src: int, dst_weights: dict, fraction: float):
    moved = pops[src, mask] * fraction
    pops[src, mask] -= moved
    for dst, wgt in dst_weights.items():
        pops[dst, mask] += moved * wgt


def clean_class(
    ens: IonEnsemble, target_excited: str = "3/2e", fluence: float = 30.0
) -> IonEnsemble:
    """Isolate a single burn-back class in the upper ground state.

    Models the class-selective cleaning waveforms as targeted steady-state
    transfers on the burn-back family: the upper-ground population of the
    non-target classes and the middle-ground population of every class are
    pumped away, parking outside the working window (via the middle and
    lowest ground states).  Idempotent at the default fluence; population is
    conserved exactly.
    """
    if "sweep_band" not in ens.meta:
        raise PreparationOrderError("clean_class requires burn_back first")
    try:
        target_idx = EXCITED_LABELS.index(target_excited)
    except ValueError:
        raise ValueError(f"unknown excited level {target_excited!r}") from None
    frac = 1.0 - math.exp(-max(fluence, 0.0))
    pops = ens.populations.copy()
    for e_idx in range(3):
        mask = _class_mask(ens, e_idx)
        if not mask.any():
            continue
        if e_idx != target_idx:
            # empty the upper ground state of the other classes
            _transfer(pops, mask, 0, {1: 0.5, 2: 0.5}, frac)
        # empty the middle ground state of the whole family
        _transfer(pops, mask, 1, {2: 1.0}, frac)
    np.clip(pops, 0.0, 1.0, out=pops)
    meta = dict(ens.meta)
    meta["cleaned"] = True
    meta["target_excited"] = target_excited
    return replace(ens, populations=pops, meta=meta)


def prepare_feature(
    ens: IonEnsemble,
    pit_center_mhz: float = 0.0,
    pit_width_mhz: float = 12.0,
    sweep_offset_mhz: float = 30.0,
    sweep_width_mhz: float = 4.0,
    fluence: float = 30.0,
    cycles: int = 8,
    target_excited: str = "3/2e",
) -> IonEnsemble:
    """Full pit / burn-back / clean sequence.

    Repeating the burn-back and cleaning steps accumulates the target-class
    population in the upper ground state (each cycle recovers half of the
    parked population), converging geometrically to a single-class feature.
    """
    out = burn_pit(ens, pit_center_mhz, pit_width_mhz, fluence)
    for _ in range(max(1, cycles)):
        out = burn_back(out, pit_center_mhz + sweep_offset_mhz, sweep_width_mhz, fluence)
        out = clean_class(out, target_excited, fluence)
    return out


# ---------------------------------------------------------------------------
# comb tailoring


@dataclass(frozen=True)
class CombSpec:
    """Periodic comb carved into the prepared feature."""

    delta_mhz: float
    gamma_mhz: float
    center_mhz: float = 2.5
    bandwidth_mhz: float = 4.0
    lineshape: str = "square"
    d0: float = 0.0

    def __post_init__(self):
        if self.delta_mhz <= 0 or self.gamma_mhz <= 0:
            raise ValueError("tooth spacing and width must be > 0")
        if self.finesse <= 1:
            raise ValueError(f"comb finesse must be > 1, got {self.finesse:.3f}")
        if self.bandwidth_mhz / self.delta_mhz < 2:
            raise ValueError("comb bandwidth must hold at least two teeth")
        if self.d0 < 0:
            raise ValueError("background depth d0 must be >= 0")
        if self.lineshape not in ("square", "gaussian"):
            raise ValueError(f"unknown tooth lineshape {self.lineshape!r}")

    @property
    def finesse(self) -> float:
        return self.delta_mhz / self.gamma_mhz

    @property
    def storage_time_us(self) -> float:
        """Echo delay: one over the tooth spacing (ordinary frequency)."""
        return 1.0 / self.delta_mhz

    @classmethod
    def from_storage_time(
        cls,
        storage_time_us: float,
        finesse_target: float = 3.0,
        gamma_min_mhz: float = 0.09,
        center_mhz: float = 2.5,
        bandwidth_mhz: float = 4.0,
        lineshape: str = "square",
        d0: float = 0.0,
    ) -> "CombSpec":
        """Comb for a requested storage time; the achievable tooth width is
        floored at ``gamma_min_mhz``, which lowers the finesse at long times."""
        delta = 1.0 / storage_time_us
        gamma = max(delta / finesse_target, gamma_min_mhz)
        return cls(delta, gamma, center_mhz, bandwidth_mhz, lineshape, d0)

    def tooth_positions(self) -> np.ndarray:
        n_teeth = int(math.floor(self.bandwidth_mhz / self.delta_mhz))
        return self.center_mhz + (np.arange(n_teeth) - (n_teeth - 1) / 2.0) * self.delta_mhz

    def tooth_shape(self, freqs_mhz: np.ndarray) -> np.ndarray:
        """Target comb transmission-of-burning profile in [0, 1]."""
        f = np.asarray(freqs_mhz, dtype=float)
        shape = np.zeros_like(f)
        for t in self.tooth_positions():
            if self.lineshape == "square":
                shape = np.maximum(shape, (np.abs(f - t) <= self.gamma_mhz / 2.0) * 1.0)
            else:
                sig = self.gamma_mhz / (2.0 * math.sqrt(2.0 * math.log(2.0)))
                shape = np.maximum(shape, np.exp(-((f - t) ** 2) / (2.0 * sig**2)))
        return shape


def tailor_comb(
    ens: IonEnsemble,
    spec: CombSpec,
    gamma_min_mhz: float = 0.0,
    depth_scale: float = 1.0,
) -> IonEnsemble:
    """Burn periodic anti-tooth holes into the single-class feature.

    The residual tooth population follows the requested lineshape times
    ``depth_scale`` (the calibration handle for the effective peak depth).
    Burnt population parks half in the middle and half in the lowest ground
    state, whose transitions lie outside the working window.
    """
    if not ens.meta.get("cleaned"):
        raise PreparationOrderError("tailor_comb requires a cleaned single-class feature")
    if spec.gamma_mhz < gamma_min_mhz:
        raise ValueError(
            f"requested tooth width {spec.gamma_mhz:.4f} MHz lies below the "
            f"achievable floor {gamma_min_mhz:.4f} MHz"
        )
    if not 0 < depth_scale <= 1:
        raise ValueError("depth_scale must be in (0, 1]")
    if ens.resolution_mhz > spec.gamma_mhz / 32.0:
        raise ValueError(
            f"ion grid resolution {ens.resolution_mhz:.4f} MHz too coarse for "
            f"tooth width {spec.gamma_mhz:.4f} MHz"
        )
    target_idx = EXCITED_LABELS.index(ens.meta["target_excited"])
    st = ens.structure
    offset = st.offsets_mhz[0, target_idx]  # upper ground -> target excited
    mask = _class_mask(ens, target_idx)
    pops = ens.populations.copy()
    nu = ens.centers_mhz[mask]
    probe = nu + offset
    in_band = np.abs(probe - spec.center_mhz) <= spec.bandwidth_mhz / 2.0

    mult = np.ones(nu.size)
    shape = spec.tooth_shape(probe[in_band])
    # residual floor from the configured background depth d0
    d_feat = ens.d_max * st.strengths[0, target_idx] * pops[0, mask][in_band]
    floor = np.zeros_like(shape)
    nz = d_feat > 1e-12
    floor[nz] = np.minimum(1.0, spec.d0 / d_feat[nz])
    mult[in_band] = np.maximum(depth_scale * shape, floor)

    idx = np.nonzero(mask)[0]
    removed = pops[0, idx] * (1.0 - mult)
    pops[0, idx] -= removed
    pops[1, idx] += removed * 0.5
    pops[2, idx] += removed * 0.5
    np.clip(pops, 0.0, 1.0, out=pops)
    meta = dict(ens.meta)
    meta["comb_spec"] = spec
    meta["tooth_width_mhz"] = spec.gamma_mhz
    meta["tooth_spacing_mhz"] = spec.delta_mhz
    meta["comb_bandwidth_mhz"] = spec.bandwidth_mhz
    meta["comb_center_mhz"] = spec.center_mhz
    return replace(ens, populations=pops, meta=meta)


# ---------------------------------------------------------------------------
# projections


def _population_at(ens: IonEnsemble, state: int, centers: np.ndarray) -> np.ndarray:
    """Population of one ground state at arbitrary reference detunings.

    Outside the simulated grid the ensemble is unburned (1/3 per state).
    """
    return np.interp(
        centers, ens.centers_mhz, ens.populations[state], left=_UNBURNED, right=_UNBURNED
    )


def absorption_components(ens: IonEnsemble, freqs_mhz) -> dict:
    """Per-transition optical-depth contributions keyed by (ground, excited)."""
    f = np.asarray(freqs_mhz, dtype=float)
    st = ens.structure
    offs = st.offsets_mhz
    w = st.strengths
    out = {}
    for g in range(3):
        for e in range(3):
            pop = _population_at(ens, g, f - offs[g, e])
            out[(GROUND_LABELS[g], EXCITED_LABELS[e])] = ens.d_max * w[g, e] * pop
    return out


def absorption_profile(ens: IonEnsemble, freqs_mhz=None) -> SpectralFunction:
    """Project the ensemble onto an optical-depth spectrum d(f) >= 0."""
    if freqs_mhz is None:
        res = ens.resolution_mhz
        freqs_mhz = np.arange(-20.0, 20.0 + res, res)
    f = np.asarray(freqs_mhz, dtype=float)
    comp = absorption_components(ens, f)
    d = np.zeros_like(f)
    for v in comp.values():
        d += v
    d = np.clip(d, 0.0, ens.d_max)
    meta = {
        k: ens.meta[k]
        for k in ("tooth_width_mhz", "tooth_spacing_mhz", "comb_bandwidth_mhz", "comb_center_mhz")
        if k in ens.meta
    }
    return SpectralFunction(f, d, meta)


def class_populations(ens: IonEnsemble, ground: str, excited: str, detunings_mhz) -> np.ndarray:
    """Ground-state populations of the ion class whose (ground, excited)
    transition sits at the given probe detunings; shape (3, n)."""
    g = GROUND_LABELS.index(ground)
    e = EXCITED_LABELS.index(excited)
    centers = np.asarray(detunings_mhz, dtype=float) - ens.structure.offsets_mhz[g, e]
    return np.vstack([_population_at(ens, s, centers) for s in range(3)])


def state_totals(ens: IonEnsemble) -> np.ndarray:
    """Population summed over the grid, per ground state (conservation checks)."""
    return ens.populations.sum(axis=1)


def dump_profile(profile: SpectralFunction, path) -> None:
    """Two-column text dump (detuning_MHz, optical_depth)."""
    with open(path, "w") as fh:
        for f, d in zip(profile.freqs_mhz, np.real(profile.values)):
            fh.write(f"{f:.6f} {d:.12e}\n")


def load_profile(path) -> SpectralFunction:
    data = np.loadtxt(path)
    return SpectralFunction(data[:, 0], data[:, 1])
