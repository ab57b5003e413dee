"""Harmonic-oscillator limits used as cross-checks for the lattice model.

Displacements are expressed the way the lattice code expresses them: in units
of a lattice-equivalent spacing a = pi s^(1/4) sigma, sigma = sqrt(hbar/m omega),
with delays in units of the oscillator period.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .lattice import HBAR, LatticeConfig, mean_splitting_period
from .pulses import PulseSpec, gaussian_positions


class TruncationError(RuntimeError):
    pass


@dataclass(frozen=True)
class HoConfig:
    omega: float
    depth_s: float
    mass: float = 1.409993e-25

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")

    @classmethod
    def from_lattice(cls, config: LatticeConfig) -> "HoConfig":
        """Oscillator whose frequency equals the q-averaged 1-2 splitting of the lattice."""
        return cls(2 * np.pi / mean_splitting_period(config), config.depth_s, config.mass)

    @property
    def x0(self) -> float:
        return np.sqrt(HBAR / (2 * self.mass * self.omega))

    @property
    def p0(self) -> float:
        return np.sqrt(HBAR * self.mass * self.omega / 2)

    @property
    def sigma(self) -> float:
        return np.sqrt(HBAR / (self.mass * self.omega))

    @property
    def spacing(self) -> float:
        return np.pi * self.depth_s**0.25 * self.sigma

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega

    def xi(self, dx: float) -> float:
        """Dimensionless displacement p0 d / hbar for d = dx * spacing."""
        return self.p0 * dx * self.spacing / HBAR


def ho_single_step_coupling(xi):
    """|<1|D|0>|^2 = xi^2 exp(-xi^2)."""
    xi = np.asarray(xi, dtype=float)
    return xi**2 * np.exp(-(xi**2))


def ho_square_delay_angle(dx_over_r1):
    """cos(theta) of the optimal phase-space rotation between the two kicks.

    Below dx = r1/2 no rotation reaches the first excited circle; the best
    choice is then theta = pi.
    """
    r = np.asarray(dx_over_r1, dtype=float)
    with np.errstate(divide="ignore"):
        c = 1.0 - 1.0 / (2.0 * r**2)
    return np.clip(np.where(r < 0.5, -1.0, c), -1.0, 1.0)


def fock_displacement(beta: float, n_levels: int) -> np.ndarray:
    """Exact matrix elements <m|D(beta)|n> for real beta, truncated to n_levels."""
    m = np.arange(n_levels)[:, None]
    n = np.arange(n_levels)[None, :]
    lo, hi = np.minimum(m, n), np.maximum(m, n)
    x = beta * beta
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = 0.5 * (gammaln(lo + 1) - gammaln(hi + 1))
        power = np.where(hi - lo == 0, 1.0, np.abs(beta) ** (hi - lo))
        sign = np.where(m >= n, np.sign(beta) ** (m - n), (-np.sign(beta)) ** (n - m))
    sign = np.where(beta == 0, (m == n).astype(float), sign)
    return np.exp(log_ratio - x / 2) * power * sign * eval_genlaguerre(lo, hi - lo, x)


def ho_fock_simulation(cfg: HoConfig, spec: PulseSpec, n_levels: int = 40) -> np.ndarray:
    """Level populations after a pulse acting on the ground state."""
    if n_levels < 10:
        raise ValueError("n_levels must be >= 10")
    levels = np.arange(n_levels)

    def kick(dx):
        return fock_displacement(cfg.xi(dx), n_levels)

    def rotate(t):
        return np.exp(-1j * cfg.omega * t * levels)

    psi = np.zeros(n_levels, dtype=complex)
    psi[0] = 1.0
    if spec.kind == "single_step":
        psi = kick(spec.amplitude) @ psi
    elif spec.kind == "square":
        psi = kick(-spec.amplitude) @ (rotate(spec.delay_scaled * cfg.period) * (kick(spec.amplitude) @ psi))
    else:
        prev = 0.0
        step = rotate(spec.step_dt_s)
        for p in gaussian_positions(spec, cfg.period):
            psi = step * (kick(p - prev) @ psi)
            prev = p
        psi = kick(-prev) @ psi
    pops = np.abs(psi) ** 2
    leak = 1.0 - pops.sum()
    if leak > 1e-6 or pops[-1] > 1e-6:
        raise TruncationError(f"{n_levels} levels insufficient: norm leak {leak:.2e}")
    return pops


def ho_square_optimum(beta: float, n_levels: int = 40, n_theta: int = 2001) -> tuple[float, float]:
    """Rotation angle maximizing P(0 -> 1) for kicks of +-beta; returns (theta, P01)."""
    theta = np.linspace(0, np.pi, n_theta)
    d = fock_displacement(beta, n_levels)
    back = fock_displacement(-beta, n_levels)
    col = d[:, 0]
    levels = np.arange(n_levels)
    amps = np.exp(-1j * np.outer(theta, levels)) * col
    p01 = np.abs(amps @ back[1]) ** 2
    k = int(np.argmax(p01))
    return float(theta[k]), float(p01[k])
