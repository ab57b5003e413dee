"""Band structure of a 1-D optical lattice in a truncated plane-wave basis.

Units: energies in recoil energies E_R, quasi-momentum in units of k_L
(Brillouin zone q in [-1, 1)), positions in lattice spacings a = pi/k_L.
The potential is U(x) = s E_R cos^2(k_L x); well minima sit at x = a/2 + l a.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import constants, integrate

H_PLANCK = constants.h
HBAR = constants.hbar
G_EARTH = constants.g


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class LatticeConfig:
    """Physical parameters of the lattice Hamiltonian."""

    depth_s: float
    recoil_frequency: float = 685.0
    wavelength_nm: float = 780.0
    beam_angle_deg: float = 49.6
    tilt_per_site: float = 2.86
    num_plane_waves: int = 15
    num_bands: int = 7
    lattice_spacing_m: float | None = None

    def __post_init__(self):
        if not self.depth_s >= 0:
            raise ValueError(f"depth_s must be >= 0, got {self.depth_s}")
        if self.num_bands < 2:
            raise ValueError(f"num_bands must be >= 2, got {self.num_bands}")
        if 2 * self.num_plane_waves + 1 < self.num_bands:
            raise ValueError(
                f"num_bands ({self.num_bands}) exceeds the {2 * self.num_plane_waves + 1} plane waves"
            )
        if self.recoil_frequency <= 0:
            raise ValueError("recoil_frequency must be positive")
        if self.lattice_spacing_m is not None:
            derived = np.pi / self.k_lattice
            if abs(self.lattice_spacing_m - derived) > 0.01 * derived:
                raise ValueError(
                    f"lattice_spacing_m={self.lattice_spacing_m:g} differs from pi/k_L={derived:g} by more than 1%"
                )

    @property
    def k_lattice(self) -> float:
        """k_L = (2 pi / lambda) sin(theta / 2), in 1/m."""
        return 2 * np.pi / (self.wavelength_nm * 1e-9) * np.sin(np.radians(self.beam_angle_deg) / 2)

    @property
    def spacing(self) -> float:
        if self.lattice_spacing_m is not None:
            return self.lattice_spacing_m
        return np.pi / self.k_lattice

    @property
    def recoil_energy(self) -> float:
        """E_R in joules."""
        return H_PLANCK * self.recoil_frequency

    @property
    def recoil_omega(self) -> float:
        """E_R / hbar in rad/s; multiplies energies in E_R units to give angular frequencies."""
        return 2 * np.pi * self.recoil_frequency

    @property
    def mass(self) -> float:
        """Atomic mass implied by E_R = hbar^2 k_L^2 / 2m."""
        return HBAR**2 * self.k_lattice**2 / (2 * self.recoil_energy)

    def with_depth(self, depth_s: float) -> "LatticeConfig":
        from dataclasses import replace

        return replace(self, depth_s=float(depth_s))


@dataclass(frozen=True)
class BlochSolution:
    """Eigenpairs at one quasi-momentum (or a stack of them).

    ``coefficients[..., n, k]`` is the weight of plane wave exp(i (q + 2 m_k) k_L x)
    in band n, with m_k = -M..M.
    """

    q: np.ndarray | float
    energies: np.ndarray
    coefficients: np.ndarray

    @property
    def num_bands(self) -> int:
        return self.energies.shape[-1]

    @property
    def reciprocal_indices(self) -> np.ndarray:
        nk = self.coefficients.shape[-1]
        m = (nk - 1) // 2
        return np.arange(-m, m + 1)


@dataclass(frozen=True)
class BandStructure(BlochSolution):
    """Bloch solutions on a uniform grid covering [-1, 1) once.

    Arrays carry a leading q axis, so every band-basis operator in
    :mod:`washboard.pulses` applies to the whole grid at once.
    """

    config: LatticeConfig | None = field(default=None, compare=False)

    @property
    def q_grid(self) -> np.ndarray:
        return self.q

    def __len__(self) -> int:
        return len(self.q)

    def __getitem__(self, i: int) -> BlochSolution:
        return BlochSolution(float(self.q[i]), self.energies[i], self.coefficients[i])

    @property
    def solutions(self) -> list[BlochSolution]:
        return [self[i] for i in range(len(self))]

    @cached_property
    def mean_splitting(self) -> float:
        """q-averaged E2 - E1 in E_R."""
        return float(np.mean(self.energies[:, 1] - self.energies[:, 0]))


def uniform_q_grid(n_q: int) -> np.ndarray:
    """n_q points covering [-1, 1) exactly once (midpoint-free periodic rule)."""
    if n_q < 2:
        raise ValueError(f"n_q must be >= 2, got {n_q}")
    return -1.0 + 2.0 * np.arange(n_q) / n_q


def hamiltonian(depth_s: float, q, num_plane_waves: int) -> np.ndarray:
    """Plane-wave Hamiltonian in E_R. Broadcasts over an array of q."""
    q = np.asarray(q, dtype=float)
    m = np.arange(-num_plane_waves, num_plane_waves + 1)
    nk = m.size
    h = np.zeros(q.shape + (nk, nk))
    idx = np.arange(nk)
    h[..., idx, idx] = (q[..., None] + 2 * m) ** 2 + depth_s / 2
    h[..., idx[:-1], idx[1:]] = depth_s / 4
    h[..., idx[1:], idx[:-1]] = depth_s / 4
    return h


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    # vecs[..., k, n]: rotate the largest |c| (lowest index on ties) to real positive
    mag = np.round(np.abs(vecs), 12)
    k = np.argmax(mag, axis=-2)
    pick = np.take_along_axis(vecs, k[..., None, :], axis=-2)
    phase = pick / np.abs(pick)
    return vecs / phase


def _diagonalize(config: LatticeConfig, q) -> tuple[np.ndarray, np.ndarray]:
    h = hamiltonian(config.depth_s, q, config.num_plane_waves)
    try:
        e, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise SolverError(
            f"eigensolver failed at q={q}, depth_s={config.depth_s}: {exc}"
        ) from exc
    nb = config.num_bands
    e = e[..., :nb]
    v = _fix_phase(v[..., :, :nb].astype(complex))
    if not np.all(np.isfinite(e)):
        raise SolverError(f"non-finite eigenvalues at q={q}, depth_s={config.depth_s}")
    return e, np.swapaxes(v, -1, -2)


def solve_bands(config: LatticeConfig, q: float) -> BlochSolution:
    """Lowest ``config.num_bands`` Bloch eigenpairs at quasi-momentum q."""
    if abs(q) > 1:
        raise ValueError(f"|q| must be <= 1, got {q}")
    e, c = _diagonalize(config, float(q))
    return BlochSolution(float(q), e, c)


def band_structure(config: LatticeConfig, n_q: int = 64) -> BandStructure:
    q = uniform_q_grid(n_q)
    e, c = _diagonalize(config, q)
    return BandStructure(q, e, c, config)


def mean_splitting_period(config: LatticeConfig, n_q: int = 64) -> float:
    """h divided by the q-averaged splitting of the lowest two bands, in seconds."""
    bands = band_structure(config, n_q)
    return 1.0 / (config.recoil_frequency * bands.mean_splitting)


def band_is_bound(config: LatticeConfig, band: int, n_q: int = 64) -> bool:
    """True unless the whole band lies above the barrier top (E > s E_R).

    ``band`` is 1-based.
    """
    bands = band_structure(config, n_q)
    return bool(np.min(bands.energies[:, band - 1]) < config.depth_s)


def bloch_wavefunction(sol: BlochSolution, x) -> np.ndarray:
    """Bloch functions evaluated at x (units of a, potential frame).

    Returns shape (..., num_bands, len(x)); normalized to unit mean |psi|^2 per period.
    """
    x = np.asarray(x, dtype=float)
    m = sol.reciprocal_indices
    q = np.asarray(sol.q, dtype=float)
    waves = np.exp(1j * np.pi * (q[..., None, None] + 2 * m[:, None]) * x)  # (..., K, X)
    return np.einsum("...nk,...kx->...nx", sol.coefficients, waves)


def _smooth_gauge(bands: BandStructure, band: int) -> np.ndarray:
    # Real value (odd n) or real slope (even n) at the well centre, so the
    # phase is continuous in q and the Wannier function is localized.
    c = bands.coefficients[:, band - 1, :]
    m = bands.reciprocal_indices
    k = bands.q[:, None] + 2 * m
    centre = np.exp(1j * np.pi * k * 0.5)
    if band % 2 == 1:
        ref = np.sum(c * centre, axis=1)
    else:
        ref = np.sum(1j * k * c * centre, axis=1) / 1j
    ref = np.where(np.abs(ref) > 1e-12, ref, 1.0)
    return c * (np.abs(ref) / ref)[:, None]


def wannier(config: LatticeConfig, band: int, site: int, x_grid, n_q: int = 64) -> np.ndarray:
    """Wannier function w_{band,site} sampled on x_grid.

    x_grid is in units of a, measured from the minimum of well 0, so site l
    is centred at x = l. Normalized so that sum |w|^2 dx = 1 on the grid.
    """
    if not 1 <= band <= config.num_bands:
        raise ValueError(f"band must be in 1..{config.num_bands}, got {band}")
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("x_grid must be a 1-D array with at least two points")
    dx = float(np.min(np.diff(x)))
    if dx <= 0 or 1.0 / np.max(np.diff(x)) < 16:
        raise ValueError("x_grid too coarse: need at least 16 points per lattice period")
    bands = band_structure(config, n_q)
    c = _smooth_gauge(bands, band)
    m = bands.reciprocal_indices
    k = bands.q[:, None] + 2 * m  # (Q, K)
    xp = x + 0.5  # potential frame
    psi = np.einsum("qk,qkx->qx", c, np.exp(1j * np.pi * k[:, :, None] * xp))
    w = np.mean(psi * np.exp(-1j * np.pi * bands.q * site)[:, None], axis=0)
    norm = np.sqrt(integrate.trapezoid(np.abs(w) ** 2, x))
    return w / norm


@dataclass(frozen=True)
class LZResult:
    band: np.ndarray  # lower band n of the n -> n+1 transition
    gap: np.ndarray  # E_G in E_R
    rate_hz: np.ndarray
    lifetime_s: np.ndarray


def lz_lifetimes(config: LatticeConfig, n_q: int = 64) -> LZResult:
    """Landau-Zener escape rates n -> n+1 in the gravity-tilted lattice.

    Gamma = nu_B exp(-pi^2 a E_G^2 / (h^2 g n)), nu_B = F a / h, with E_G the
    minimum direct gap over q (zone edge included). g is taken from the tilt
    per site and the mass implied by E_R, which reduces the exponent to
    pi^2 (E_G/E_R)^2 / (8 n tilt).
    """
    if config.tilt_per_site <= 0:
        raise ValueError("tilt_per_site must be positive")
    bands = band_structure(config, n_q)
    edge = solve_bands(config, 1.0)
    e = np.vstack([bands.energies, edge.energies[None, :]])
    n = np.arange(1, config.num_bands)
    gap = np.min(np.diff(e, axis=1), axis=0)
    a = config.spacing
    force_a = config.tilt_per_site * config.recoil_energy  # F a in J
    g = force_a / (config.mass * a)
    nu_b = force_a / H_PLANCK
    eg = gap * config.recoil_energy
    rate = nu_b * np.exp(-(np.pi**2) * a * eg**2 / (H_PLANCK**2 * g * n))
    return LZResult(n, gap, rate, 1.0 / rate)
