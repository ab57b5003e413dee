"""q-averaged band-transfer probabilities, parameter sweeps and pulse optimization."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .lattice import BandStructure, LatticeConfig, band_is_bound, band_structure
from .pulses import (
    PulseSpec,
    displacement_matrix,
    gaussian_positions,
    make_pulse,
    propagate_gaussian,
    pulse_matrix,
)

# 5 degrees of relative beam phase
DX_STEP = 5.0 / 360.0
DEFAULT_DX_GRID = np.round(np.arange(0, 37) * DX_STEP, 12)
DEFAULT_TAU_GRID = np.round(np.arange(1, 51) * 0.02, 12)
DEFAULT_FWHM_GRID = np.round(np.arange(5, 31) * 0.02, 12)
REFINE = 10


@lru_cache(maxsize=64)
def cached_bands(config: LatticeConfig, n_q: int = 64) -> BandStructure:
    """Band structure memoized on the (frozen) config; identical to band_structure."""
    return band_structure(config, n_q)


def _working_bands(config: LatticeConfig, n_q: int) -> BandStructure:
    # pulses act in the complete plane-wave band basis; truncation happens at readout only
    return cached_bands(replace(config, num_bands=2 * config.num_plane_waves + 1), n_q)


def splitting_period(bands: BandStructure) -> float:
    return 1.0 / (bands.config.recoil_frequency * bands.mean_splitting)


@dataclass(frozen=True)
class CouplingResult:
    """p[i, j]: probability of ending in band j+1 when starting in band i+1 (i = 0, 1)."""

    p: np.ndarray
    spec: PulseSpec | None = None
    initial_band: int = 1

    @property
    def loss_from(self) -> np.ndarray:
        return 1.0 - self.p[:, 0] - self.p[:, 1]

    @property
    def loss(self) -> float:
        return float(self.loss_from[self.initial_band - 1])

    def __getattr__(self, name):
        # P11, P12, P21, P22, ... shortcuts
        if len(name) == 3 and name[0] == "P" and name[1:].isdigit():
            return float(self.p[int(name[1]) - 1, int(name[2]) - 1])
        raise AttributeError(name)


def probabilities_from_operator(op: np.ndarray, num_bands: int | None = None) -> np.ndarray:
    """Mean over q of |<j|O|i>|^2 for i in bands 1, 2; returns shape (2, num_bands)."""
    return np.mean(np.abs(op[..., :num_bands, :2]) ** 2, axis=0).T


def coupling_probabilities(
    config: LatticeConfig, spec: PulseSpec, initial_band: int = 1, n_q: int = 64
) -> CouplingResult:
    if initial_band not in (1, 2):
        raise ValueError(f"initial_band must be 1 or 2, got {initial_band}")
    bands = _working_bands(config, n_q)
    op = pulse_matrix(spec, bands, splitting_period(bands), config.recoil_frequency)
    return CouplingResult(probabilities_from_operator(op, config.num_bands), spec, initial_band)


def scan_displacement(
    config: LatticeConfig,
    kind: str,
    width: float | None = None,
    dx_grid=None,
    n_q: int = 64,
    **pulse_kw,
) -> list[CouplingResult]:
    """One CouplingResult per displacement, temporal parameter held fixed."""
    dx_grid = DEFAULT_DX_GRID if dx_grid is None else np.asarray(dx_grid, dtype=float)
    if np.any(dx_grid < 0) or np.any(dx_grid > 0.5):
        raise ValueError("dx_grid must lie within [0, 0.5]")
    return [
        coupling_probabilities(config, make_pulse(kind, float(dx), width, **pulse_kw), 1, n_q)
        for dx in dx_grid
    ]


def scan_delay(config: LatticeConfig, dx: float, tau_grid, n_q: int = 64) -> list[CouplingResult]:
    """Square pulse at fixed displacement, swept over scaled delay."""
    tau_grid = np.asarray(tau_grid, dtype=float)
    if np.any(tau_grid < 0):
        raise ValueError("tau_grid must be non-negative")
    bands = _working_bands(config, n_q)
    ops = _square_columns(bands, dx, tau_grid)
    out = []
    for tau, op in zip(tau_grid, ops):
        spec = PulseSpec("square", dx, delay_scaled=float(tau)) if tau > 0 else None
        out.append(CouplingResult(probabilities_from_operator(op, config.num_bands), spec))
    return out


def _square_columns(bands: BandStructure, dx: float, tau_grid) -> np.ndarray:
    """Square-pulse operators restricted to the first two columns, for many delays."""
    d = displacement_matrix(bands, dx)[..., :, :2]
    back = displacement_matrix(bands, -dx)
    period = splitting_period(bands)
    phases = np.exp(
        -2j * np.pi * bands.config.recoil_frequency * bands.energies[None] * period
        * np.asarray(tau_grid)[:, None, None]
    )
    return np.einsum("qjn,tqn,qni->tqji", back, phases, d)


def p12_surface(
    config: LatticeConfig, kind: str, amplitudes, widths=None, n_q: int = 64, **pulse_kw
) -> np.ndarray:
    """P(1 -> 2) on the amplitude x width grid (width axis of length 1 for single steps)."""
    bands = _working_bands(config, n_q)
    amplitudes = np.asarray(amplitudes, dtype=float)
    if kind == "single_step":
        out = np.empty((amplitudes.size, 1))
        for i, a in enumerate(amplitudes):
            out[i, 0] = np.mean(np.abs(displacement_matrix(bands, a)[:, 1, 0]) ** 2)
        return out
    widths = np.asarray(widths, dtype=float)
    out = np.empty((amplitudes.size, widths.size))
    if kind == "square":
        for i, a in enumerate(amplitudes):
            cols = _square_columns(bands, a, widths)
            out[i] = np.mean(np.abs(cols[:, :, 1, 0]) ** 2, axis=1)
        return out
    period = splitting_period(bands)
    ground = np.zeros(bands.energies.shape + (amplitudes.size,), dtype=complex)
    ground[:, 0, :] = 1.0
    for j, w in enumerate(widths):
        shape = make_pulse(kind, 0.5, float(w), **pulse_kw)
        traj = 2 * amplitudes[:, None] * gaussian_positions(shape, period)[None, :]
        cols = propagate_gaussian(bands, traj, shape.step_dt_s, ground, config.recoil_frequency)
        out[:, j] = np.mean(np.abs(cols[:, 1, :]) ** 2, axis=0)
    return out


def _argmax_small_amplitude(values: np.ndarray) -> tuple[int, int]:
    # first index in C order among near-ties: smallest amplitude, then smallest width
    flat = values.ravel()
    best = np.max(flat)
    k = int(np.flatnonzero(flat >= best - 1e-12)[0])
    return np.unravel_index(k, values.shape)


def _refined(grid: np.ndarray, centre: float, lo: float, hi: float) -> np.ndarray:
    step = grid[1] - grid[0] if grid.size > 1 else 0.0
    fine = centre + step * np.arange(-REFINE, REFINE + 1) / REFINE
    return np.unique(np.round(fine[(fine >= lo - 1e-12) & (fine <= hi + 1e-12)], 12))


@dataclass
class Optimum:
    spec: PulseSpec
    result: CouplingResult
    fine_steps: tuple[float, float | None]
    coarse_best: tuple[float, float | None] = field(default=(0.0, None))

    @property
    def p12(self) -> float:
        return self.result.P12


def optimize_pulse(
    config: LatticeConfig,
    kind: str,
    amplitude_grid=None,
    width_grid=None,
    n_q: int = 64,
    **pulse_kw,
) -> Optimum:
    """Exhaustive grid search maximizing P12, then one pass at 10x resolution."""
    amps = DEFAULT_DX_GRID if amplitude_grid is None else np.asarray(amplitude_grid, dtype=float)
    if kind == "single_step":
        widths = np.array([np.nan])
    elif width_grid is not None:
        widths = np.asarray(width_grid, dtype=float)
    else:
        widths = DEFAULT_TAU_GRID if kind == "square" else DEFAULT_FWHM_GRID
    if amps.size == 0 or widths.size == 0:
        raise ValueError("optimize_pulse needs non-empty search grids")

    coarse = p12_surface(config, kind, amps, widths, n_q, **pulse_kw)
    i, j = _argmax_small_amplitude(coarse)
    fine_a = _refined(amps, amps[i], amps.min(), amps.max())
    if kind == "single_step":
        fine_w = widths
    else:
        fine_w = _refined(widths, widths[j], widths.min(), widths.max())
    fine = p12_surface(config, kind, fine_a, fine_w, n_q, **pulse_kw)
    fi, fj = _argmax_small_amplitude(fine)
    width = None if kind == "single_step" else float(fine_w[fj])
    spec = make_pulse(kind, float(fine_a[fi]), width, **pulse_kw)
    steps = (
        (amps[1] - amps[0]) / REFINE if amps.size > 1 else 0.0,
        None if kind == "single_step" or widths.size < 2 else (widths[1] - widths[0]) / REFINE,
    )
    return Optimum(
        spec,
        coupling_probabilities(config, spec, 1, n_q),
        steps,
        (float(amps[i]), None if kind == "single_step" else float(widths[j])),
    )


@dataclass(frozen=True)
class DepthRow:
    s: float
    family: str
    A_opt: float
    W_opt: float | None
    P12_max: float
    tau_min_opt: float | None


def depth_scan(
    kind: str,
    s_grid,
    base: LatticeConfig | None = None,
    amplitude_grid=None,
    width_grid=None,
    n_q: int = 64,
    **pulse_kw,
) -> list[DepthRow]:
    """Optimal P12 per lattice depth.

    For square pulses tau_min_opt is the optimal delay searched within the
    first period (0, 1], i.e. the smallest optimum.
    """
    base = base or LatticeConfig(depth_s=18.0)
    rows = []
    for s in np.asarray(s_grid, dtype=float):
        cfg = base.with_depth(s)
        if not band_is_bound(cfg, 2, n_q):
            raise ValueError(f"band 2 is not bound at depth s={s:g}")
        opt = optimize_pulse(cfg, kind, amplitude_grid, width_grid, n_q, **pulse_kw)
        w = opt.spec.width
        rows.append(DepthRow(float(s), kind, opt.spec.amplitude, w, opt.p12, w if kind == "square" else None))
    return rows


@dataclass(frozen=True)
class LossCurve:
    family: str
    dx: np.ndarray
    p12: np.ndarray
    loss: np.ndarray

    def loss_at(self, p12: float) -> float:
        """Loss on the rising branch where P12 first reaches ``p12``.

        Targets above the branch maximum return the loss at the maximum.
        """
        k = int(np.argmax(self.p12))
        x, y = self.p12[: k + 1], self.loss[: k + 1]
        if p12 >= x[-1]:
            return float(y[-1])
        keep = np.concatenate([[True], np.diff(np.maximum.accumulate(x)) > 0])
        return float(np.interp(p12, x[keep], y[keep]))


def loss_vs_coupling(
    config: LatticeConfig, kind: str, width: float | None = None, dx_grid=None, n_q: int = 64, **pulse_kw
) -> LossCurve:
    """(P12, loss) traced by increasing displacement at a fixed temporal parameter."""
    dx_grid = np.linspace(0, 0.5, 181) if dx_grid is None else np.asarray(dx_grid, dtype=float)
    rows = scan_displacement(config, kind, width, dx_grid, n_q, **pulse_kw)
    return LossCurve(
        kind,
        dx_grid,
        np.array([r.P12 for r in rows]),
        np.array([r.loss for r in rows]),
    )


def mixed_state_loss(result: CouplingResult, weights=(0.5, 0.5)) -> float:
    """Population pushed into bands >= 3 from an incoherent mix of bands 1 and 2."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    return float(w @ result.loss_from)
