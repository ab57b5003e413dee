"""Band-basis operators for lattice displacements and free evolution.

All operators act at fixed quasi-momentum. Passing a :class:`BandStructure`
instead of a single :class:`BlochSolution` yields one matrix per grid point
(leading axis q); nothing ever mixes different q.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .lattice import BlochSolution

PulseKind = Literal["single_step", "square", "gaussian"]
KINDS = ("single_step", "square", "gaussian")
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))


@dataclass(frozen=True)
class PulseSpec:
    """A lattice-displacement waveform.

    amplitude is in lattice spacings; delay_scaled and fwhm_scaled are in
    units of the mean splitting period T12. ``truncation_sigmas`` sets the
    half-width of the sampled Gaussian window.
    """

    kind: PulseKind
    amplitude: float
    delay_scaled: float | None = None
    fwhm_scaled: float | None = None
    step_dt_s: float = 5e-6
    truncation_sigmas: float = 4.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown pulse kind {self.kind!r}; expected one of {KINDS}")
        if not -0.5 <= self.amplitude <= 0.5:
            raise ValueError(f"amplitude must lie in [-0.5, 0.5], got {self.amplitude}")
        if self.kind == "square":
            if self.delay_scaled is None or not self.delay_scaled > 0:
                raise ValueError("square pulse needs delay_scaled > 0")
        elif self.delay_scaled is not None:
            raise ValueError(f"delay_scaled is not a parameter of a {self.kind} pulse")
        if self.kind == "gaussian":
            if self.fwhm_scaled is None or not self.fwhm_scaled > 0:
                raise ValueError("gaussian pulse needs fwhm_scaled > 0")
            if self.step_dt_s <= 0 or self.truncation_sigmas <= 0:
                raise ValueError("step_dt_s and truncation_sigmas must be positive")
        elif self.fwhm_scaled is not None:
            raise ValueError(f"fwhm_scaled is not a parameter of a {self.kind} pulse")

    @property
    def width(self) -> float | None:
        """The temporal parameter (delay or FWHM), None for a single step."""
        return {"single_step": None, "square": self.delay_scaled, "gaussian": self.fwhm_scaled}[self.kind]

    def duration(self, period_s: float) -> float:
        if self.kind == "single_step":
            return 0.0
        if self.kind == "square":
            return self.delay_scaled * period_s
        return len(gaussian_positions(self, period_s)) * self.step_dt_s


def make_pulse(kind: str, amplitude: float, width: float | None = None, **kw) -> PulseSpec:
    """Build a PulseSpec from a family name and its (amplitude, width) pair."""
    if kind == "square":
        return PulseSpec(kind, amplitude, delay_scaled=width, **kw)
    if kind == "gaussian":
        return PulseSpec(kind, amplitude, fwhm_scaled=width, **kw)
    return PulseSpec(kind, amplitude, **kw)


@dataclass
class BandAmplitudes:
    q: float | np.ndarray
    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        if np.any(np.sum(np.abs(self.amps) ** 2, axis=-1) > 1 + 1e-9):
            raise ValueError("band amplitudes have squared norm > 1")

    @classmethod
    def band(cls, sol: BlochSolution, n: int) -> "BandAmplitudes":
        """Pure Bloch state of band n (1-based) at every q of ``sol``."""
        amps = np.zeros(sol.energies.shape, dtype=complex)
        amps[..., n - 1] = 1.0
        return cls(sol.q, amps)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amps) ** 2


def displacement_matrix(sol: BlochSolution, dx: float) -> np.ndarray:
    """<n|T(dx)|m> where T translates the wavefunction by dx lattice spacings."""
    m = sol.reciprocal_indices
    q = np.asarray(sol.q, dtype=float)
    phase = np.exp(-1j * np.pi * (q[..., None] + 2 * m) * dx)
    c = sol.coefficients
    return (c.conj() * phase[..., None, :]) @ np.swapaxes(c, -1, -2)


def free_evolution(sol: BlochSolution, t: float, recoil_frequency: float = 685.0) -> np.ndarray:
    """Diagonal of exp(-i H t / hbar) in the band basis."""
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return np.exp(-2j * np.pi * recoil_frequency * sol.energies * t)


def _evolve(diag: np.ndarray, op: np.ndarray) -> np.ndarray:
    return diag[..., :, None] * op


def gaussian_positions(spec: PulseSpec, period_s: float) -> np.ndarray:
    """Lattice positions held during each step_dt of a sampled Gaussian pulse."""
    sigma = spec.fwhm_scaled * period_s * FWHM_TO_SIGMA
    half = int(np.floor(spec.truncation_sigmas * sigma / spec.step_dt_s))
    t = np.arange(-half, half + 1) * spec.step_dt_s
    return spec.amplitude * np.exp(-(t**2) / (2 * sigma**2))


def pulse_matrix(
    spec: PulseSpec, sol: BlochSolution, period_s: float, recoil_frequency: float = 685.0
) -> np.ndarray:
    """Band-basis matrix of a whole pulse (bands truncated only at readout)."""
    if spec.kind == "single_step":
        return displacement_matrix(sol, spec.amplitude)
    if spec.kind == "square":
        d = displacement_matrix(sol, spec.amplitude)
        u = free_evolution(sol, spec.delay_scaled * period_s, recoil_frequency)
        return displacement_matrix(sol, -spec.amplitude) @ _evolve(u, d)
    nb = sol.energies.shape[-1]
    start = np.broadcast_to(np.eye(nb, dtype=complex), sol.energies.shape[:-1] + (nb, nb))
    return propagate_gaussian(sol, gaussian_positions(spec, period_s), spec.step_dt_s, start, recoil_frequency)


def propagate_gaussian(
    sol: BlochSolution,
    positions: np.ndarray,
    step_dt_s: float,
    state: np.ndarray,
    recoil_frequency: float = 685.0,
) -> np.ndarray:
    """Step band-basis columns through a piecewise-constant lattice trajectory.

    ``state`` has shape (..., num_bands, ncols) with ``...`` the q axes of
    ``sol``. ``positions`` is either one trajectory (steps,) shared by all
    columns or one per column (ncols, steps). Each step applies the position
    change and then evolves for step_dt_s; a final shift returns the lattice
    to rest.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    bra = sol.coefficients.conj()
    ket = np.swapaxes(sol.coefficients, -1, -2)
    k = (np.asarray(sol.q, dtype=float)[..., None] + 2 * sol.reciprocal_indices)[..., :, None]
    u = free_evolution(sol, step_dt_s, recoil_frequency)[..., None]
    prev = np.zeros(positions.shape[0])
    psi = state
    for p in positions.T:
        psi = u * (bra @ (np.exp(-1j * np.pi * k * (p - prev)) * (ket @ psi)))
        prev = p
    return bra @ (np.exp(1j * np.pi * k * prev) * (ket @ psi))


def apply_pulse(
    spec: PulseSpec,
    sol: BlochSolution,
    state: BandAmplitudes,
    period_s: float,
    recoil_frequency: float = 685.0,
) -> BandAmplitudes:
    """Act with a pulse on band amplitudes at the same quasi-momentum."""
    if not np.allclose(np.asarray(state.q), np.asarray(sol.q)):
        raise ValueError("state and Bloch solution belong to different quasi-momenta")
    op = pulse_matrix(spec, sol, period_s, recoil_frequency)
    return BandAmplitudes(state.q, np.einsum("...nm,...m->...n", op, state.amps))


def band_swap(num_bands: int) -> np.ndarray:
    """Ideal pi-pulse: exchange bands 1 and 2, identity elsewhere."""
    op = np.eye(num_bands, dtype=complex)
    op[[0, 1]] = op[[1, 0]]
    return op
