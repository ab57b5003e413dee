"""Ramsey-type oscillation traces and pulse echoes over an inhomogeneous ensemble.

Each ensemble member is a lattice of static depth drawn from a Gaussian; all
quasi-momenta are populated incoherently. A trace is the band-1 population
after prep displacement D(+a), free evolution, optional echo pulse, and the
readout displacement D(-a), averaged over q and members.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import optimize, signal, stats

from .coupling import cached_bands, splitting_period
from .lattice import BandStructure, LatticeConfig, _diagonalize, band_structure
from .pulses import PulseSpec, displacement_matrix, pulse_matrix

log = logging.getLogger(__name__)


class FitError(RuntimeError):
    pass


SAMPLING = ("quadrature", "stratified")


@dataclass(frozen=True)
class EnsembleSpec:
    """Gaussian distribution of static lattice depths.

    ``sampling="quadrature"`` places members on Gauss-Hermite nodes with their
    weights, which integrates the dephasing oscillations far more accurately
    than random draws; ``"stratified"`` draws one depth per equal-probability
    stratum from a Philox stream keyed by ``seed``.
    """

    center_depth_s: float
    depth_sigma_s: float = 0.0
    n_members: int = 1
    n_q: int = 64
    seed: int = 0
    lattice: LatticeConfig | None = None
    sampling: str = "quadrature"

    def __post_init__(self):
        if self.depth_sigma_s < 0:
            raise ValueError("depth_sigma_s must be >= 0")
        if self.n_members < 1:
            raise ValueError("n_members must be >= 1")
        if self.n_q < 1:
            raise ValueError("n_q must be >= 1")
        if self.sampling not in SAMPLING:
            raise ValueError(f"sampling must be one of {SAMPLING}")

    @property
    def base(self) -> LatticeConfig:
        if self.lattice is None:
            return LatticeConfig(depth_s=self.center_depth_s)
        return self.lattice.with_depth(self.center_depth_s)


@dataclass(frozen=True)
class EchoTrace:
    times: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    loss: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class EnvelopeFit:
    amplitude: float
    period_s: float
    gaussian_rms_s: float
    offset: float
    residual_norm: float
    phase: float = 0.0
    center_s: float = 0.0


def _member_draw(seed: int, counter: int) -> float:
    # Philox keyed by seed, one stream per member: order-independent
    return np.random.Generator(np.random.Philox(key=seed, counter=counter)).random()


@dataclass(frozen=True)
class Member:
    depth_s: float
    weight: float
    bands: BandStructure


def _bound(bands: BandStructure) -> bool:
    return bool(np.min(bands.energies[:, 1]) < bands.config.depth_s)


def _member(ens: EnsembleSpec, s: float, weight: float) -> Member:
    cfg = _full_basis(ens.base.with_depth(max(s, 0.0)))
    return Member(cfg.depth_s, weight, _bands_on(cfg, ens.n_q))


@lru_cache(maxsize=16)
def ensemble_members(ens: EnsembleSpec) -> tuple[Member, ...]:
    """Depths and weights of the ensemble, one band structure per member.

    Depths whose second band is unbound are rejected with a warning: dropped
    (weights renormalized) for quadrature, redrawn within the same stratum
    for stratified sampling.
    """
    n = ens.n_members
    if ens.depth_sigma_s == 0 or n == 1:
        return (_member(ens, ens.center_depth_s, 1.0),)
    if ens.sampling == "quadrature":
        z, w = np.polynomial.hermite_e.hermegauss(n)
        w = w / w.sum()
        members, rejected = [], []
        for zi, wi in zip(z, w):
            if wi < 1e-16:
                continue
            m = _member(ens, ens.center_depth_s + ens.depth_sigma_s * zi, wi)
            (members if _bound(m.bands) else rejected).append(m)
        lost = sum(m.weight for m in rejected)
        if rejected:
            msg = f"{len(rejected)} depths down to s={rejected[0].depth_s:.3f} leave band 2 unbound; weight {lost:.2e} rejected"
            if lost > 1e-6:
                warnings.warn(msg, stacklevel=2)
            else:
                log.debug(msg)
        if not members:
            raise RuntimeError(f"no bound member near s={ens.center_depth_s}")
        total = sum(m.weight for m in members)
        return tuple(replace(m, weight=m.weight / total) for m in members)
    members = []
    for j in range(n):
        for attempt in range(101):
            u = (j + _member_draw(ens.seed, j + attempt * n)) / n
            m = _member(ens, ens.center_depth_s + ens.depth_sigma_s * stats.norm.ppf(u), 1.0 / n)
            if _bound(m.bands):
                break
            warnings.warn(f"member {j}: band 2 unbound at s={m.depth_s:.3f}; resampling", stacklevel=2)
        else:
            raise RuntimeError(f"could not draw a bound member near s={ens.center_depth_s}")
        members.append(m)
    return tuple(members)


def _full_basis(cfg: LatticeConfig) -> LatticeConfig:
    # keep every band of the plane-wave basis so that traces conserve norm exactly
    return replace(cfg, num_bands=2 * cfg.num_plane_waves + 1)


def _bands_on(cfg: LatticeConfig, n_q: int) -> BandStructure:
    if n_q == 1:
        q = np.zeros(1)
        e, c = _diagonalize(cfg, q)
        return BandStructure(q, e, c, cfg)
    return band_structure(cfg, n_q)


def _center_period(ens: EnsembleSpec) -> float:
    return splitting_period(cached_bands(ens.base, 64))


def _evolved(bands: BandStructure, state: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """state (q, n) -> (q, n, t) evolved freely for each dt."""
    omega = 2 * np.pi * bands.config.recoil_frequency * bands.energies
    return state[:, :, None] * np.exp(-1j * omega[:, :, None] * dt[None, None, :])


def _unitarity_defect(op: np.ndarray) -> float:
    nb = op.shape[-1]
    return float(np.max(np.linalg.norm(np.swapaxes(op.conj(), -1, -2) @ op - np.eye(nb), ord=2, axis=(-2, -1))))


def _embed(op: np.ndarray, b: BandStructure) -> np.ndarray:
    """Explicit band-basis matrix padded with identity to every band, one copy per q."""
    nq, nb = b.energies.shape
    op = np.asarray(op, dtype=complex)
    k = op.shape[-1]
    if op.shape[-2:] != (k, k) or k > nb:
        raise ValueError(f"echo matrix must be square with at most {nb} bands, got {op.shape}")
    full = np.broadcast_to(np.eye(nb, dtype=complex), (nq, nb, nb)).copy()
    full[:, :k, :k] = op
    return full


def _prepared(b: BandStructure, prep_dx: float, two_band: bool) -> np.ndarray:
    psi0 = displacement_matrix(b, prep_dx)[:, :, 0]
    if two_band:
        # lossless reference: keep only the band-1/2 part of the prepared state
        psi0 = np.where(np.arange(psi0.shape[1]) < 2, psi0, 0)
        psi0 /= np.linalg.norm(psi0, axis=1, keepdims=True)
    return psi0


def _observe(b: BandStructure, prep_dx: float, state: np.ndarray, dt: np.ndarray) -> tuple[np.ndarray, float]:
    """Band-1/2 populations (q, 2, t) of ``state`` evolved by each dt, then read out.

    ``state`` is (q, n) for a pure state or (q, n, c) for an incoherent sum of
    c unnormalized columns. Bands whose amplitude never exceeds 1e-13 are
    skipped; the returned bound covers the population error this can cause.
    """
    if state.ndim == 2:
        state = state[:, :, None]
    mag = np.abs(state)
    active = np.flatnonzero(mag.max(axis=(0, 2)) > 1e-13)
    dropped = float(np.max(mag.sum(axis=1) - mag[:, active].sum(axis=1)))
    omega = 2 * np.pi * b.config.recoil_frequency * b.energies[:, active]
    phases = np.exp(-1j * omega[:, :, None] * dt[None, None, :])
    r = displacement_matrix(b, -prep_dx)[:, :2, active]
    amps = np.einsum("qjk,qkt,qkc->qjct", r, phases, state[:, active], optimize=True)
    return np.sum(np.abs(amps) ** 2, axis=2), state.shape[2] * (2 * dropped + dropped**2)


def _member_pops(b: BandStructure, psi0, prep_dx, times, before, pulse, start, end, period, dephase):
    """Band-1/2 populations (q, 2, t) for one member, and a bound on the norm defect.

    Every member uses the complete plane-wave band basis, so all operators are
    unitary up to roundoff; the populations of all bands sum to one within the
    summed unitarity defects of the operators applied.
    """
    pops = np.empty((b.energies.shape[0], 2, times.size))
    norm_err = float(np.max(np.abs(np.sum(np.abs(psi0) ** 2, axis=1) - 1.0)))
    norm_err += _unitarity_defect(displacement_matrix(b, -prep_dx))
    if before.any():
        pops[:, :, before], e = _observe(b, prep_dx, psi0, times[before])
        norm_err += e
    after = ~before
    if not after.any():
        return pops, norm_err
    op = _embed(pulse, b) if isinstance(pulse, np.ndarray) else pulse_matrix(pulse, b, period, b.config.recoil_frequency)
    norm_err += _unitarity_defect(op)
    # the pulse operator spans [start, end] including free evolution inside it
    at_pulse = _evolved(b, psi0, np.array([start]))[:, :, 0]
    lag = times[after] - end
    if dephase:
        # coherences erased at the pulse: incoherent sum over band populations
        w = np.abs(at_pulse) ** 2
        cols = w.max(axis=0) > 1e-16
        norm_err += float(np.max(w[:, ~cols].sum(axis=1)))
        mixed = op[:, :, cols] * np.sqrt(w[:, cols])[:, None, :]
        pops[:, :, after], e = _observe(b, prep_dx, mixed, lag)
        norm_err += e
    else:
        post = np.einsum("qjn,qn->qj", op, at_pulse)
        pops[:, :, after], e = _observe(b, prep_dx, post, lag)
        norm_err += e
    return pops, norm_err


def _pulse_mask(times: np.ndarray, dur: float, t0: float) -> np.ndarray:
    # samples strictly inside the pulse window are not observable
    return (times < t0 - dur / 2) | (times >= t0 + dur / 2)


def _run(ens, prep_dx, times, pulse=None, t0=None, dephase=False, two_band=False, keep=None):
    """Returns (mask of kept samples, p1, p2, bands >= 3, worst norm error)."""
    times = np.asarray(times, dtype=float)
    if not 0 < prep_dx <= 0.5:
        raise ValueError(f"prep_dx must lie in (0, 0.5], got {prep_dx}")
    members = ensemble_members(ens)
    period = _center_period(ens)
    if pulse is None:
        start = end = np.inf
        keep = np.ones(times.size, bool)
    else:
        if t0 is None:
            raise ValueError("t0 is required with an echo pulse")
        dur = pulse.duration(period) if isinstance(pulse, PulseSpec) else 0.0
        start, end = t0 - dur / 2, t0 + dur / 2
        if start < 0:
            raise ValueError("echo pulse would start before t=0")
        if keep is None:
            keep = _pulse_mask(times, dur, t0)
    kept = times[keep]
    before = np.ones(kept.size, bool) if pulse is None else kept < t0
    total = np.zeros((2, kept.size))
    worst = 0.0
    for mem in members:
        psi0 = _prepared(mem.bands, prep_dx, two_band)
        pops, err = _member_pops(mem.bands, psi0, prep_dx, kept, before, pulse, start, end, period, dephase)
        worst = max(worst, err)
        total += mem.weight * pops.mean(axis=0)
    return keep, total[0], total[1], 1.0 - total[0] - total[1], worst


def simulate_population_trace(ens: EnsembleSpec, prep_dx: float, times, two_band: bool = False) -> EchoTrace:
    """Band-1 population after prep D(prep_dx), free evolution and readout D(-prep_dx).

    ``two_band`` discards the prepared population outside bands 1 and 2
    (lossless reference case).
    """
    times = np.asarray(times, dtype=float)
    _, p1, p2, loss, worst = _run(ens, prep_dx, times, two_band=two_band)
    return EchoTrace(
        times, p1, p2, loss,
        {"prep_dx": prep_dx, "echo": None, "t0": None, "max_norm_error": worst, "two_band": two_band},
    )


def simulate_echo(
    ens: EnsembleSpec,
    prep_dx: float,
    echo,
    t0: float,
    times,
    baseline: str | None = None,
    late_t0: float = 4e-3,
    two_band: bool = False,
) -> EchoTrace:
    """Trace with an echo pulse centred at t0.

    ``echo`` is a PulseSpec or an explicit band-basis matrix applied
    instantaneously (e.g. :func:`washboard.pulses.band_swap`). Samples inside
    the pulse window are dropped. ``baseline`` selects a reference run with no
    surviving coherence: "dephased" zeroes coherences at the pulse, "late"
    applies the pulse at ``late_t0`` and re-times the result onto ``times``.
    The late variant relies on the ensemble sum staying dephased out to
    ``late_t0`` plus the record length, which takes a few hundred quadrature
    members; "dephased" is exact for any ensemble size.
    """
    times = np.asarray(times, dtype=float)
    if baseline == "late":
        if late_t0 <= t0:
            raise ValueError("late_t0 must exceed t0")
        shift = late_t0 - t0
        keep = _pulse_mask(times, _window(echo, ens), t0)
        keep, p1, p2, loss, worst = _run(ens, prep_dx, times + shift, echo, late_t0, two_band=two_band, keep=keep)
        # samples before the pulse carry no pulse-induced signal in a baseline
        pre = times[keep] < t0
        p1, p2, loss = (np.where(pre, np.nan, x) for x in (p1, p2, loss))
    elif baseline in (None, "dephased"):
        keep, p1, p2, loss, worst = _run(
            ens, prep_dx, times, echo, t0, dephase=baseline == "dephased", two_band=two_band
        )
    else:
        raise ValueError(f"unknown baseline mode {baseline!r}")
    meta = {
        "prep_dx": prep_dx,
        "echo": echo if isinstance(echo, PulseSpec) else "matrix",
        "t0": t0,
        "baseline": baseline,
        "window": _window(echo, ens),
        "max_norm_error": worst,
        "two_band": two_band,
    }
    return EchoTrace(times[keep], p1, p2, loss, meta)


def _window(echo, ens: EnsembleSpec) -> float:
    return echo.duration(_center_period(ens)) if isinstance(echo, PulseSpec) else 0.0


def _model(t, offset, amp, period, phase, rms, center):
    return offset + amp * np.cos(2 * np.pi * (t - center) / period + phase) * np.exp(
        -((t - center) ** 2) / (2 * rms**2)
    )


def _spectral_peak(t: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """(frequency, amplitude estimate, phase) of the dominant non-DC component."""
    dt = float(np.median(np.diff(t)))
    y = y - y.mean()
    n = 8 * t.size
    spec = np.fft.rfft(y, n)
    freqs = np.fft.rfftfreq(n, dt)
    mag = np.abs(spec)
    mag[freqs < 1.5 / (t[-1] - t[0])] = 0
    k = int(np.argmax(mag))
    floor = np.median(np.abs(spec)) + 1e-300
    if mag[k] < 5 * floor:
        raise FitError("no spectral peak above the noise floor")
    return float(freqs[k]), float(2 * mag[k] / t.size), float(np.angle(spec[k]))


def fit_envelope(trace: EchoTrace, center_s: float = 0.0, free_center: bool = False, window=None) -> EnvelopeFit:
    """Least-squares fit of offset + A cos(2 pi (t-c)/T + phi) exp(-(t-c)^2 / 2 w^2).

    The fit starts from the peak of the zero-padded discrete spectrum, so the
    result is deterministic.
    """
    t, y = np.asarray(trace.times), np.asarray(trace.p1)
    ok = np.isfinite(y)
    if window is not None:
        ok &= (t >= window[0]) & (t <= window[1])
    t, y = t[ok], y[ok]
    if t.size < 8:
        raise FitError("too few samples to fit")
    if np.ptp(y) < 1e-12:
        return EnvelopeFit(0.0, np.nan, np.nan, float(y.mean()), 0.0, 0.0, center_s)
    f0, a0, _ = _spectral_peak(t, y)
    period0 = 1.0 / f0
    span = t[-1] - t[0]
    # linear solve for phase and amplitude at the initial period and width
    rms0 = span / 3
    env = np.exp(-((t - center_s) ** 2) / (2 * rms0**2))
    arg = 2 * np.pi * (t - center_s) / period0
    basis = np.column_stack([np.ones_like(t), np.cos(arg) * env, np.sin(arg) * env])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    amp0 = float(np.hypot(coef[1], coef[2])) or a0
    phase0 = float(np.arctan2(-coef[2], coef[1]))

    def residual(p):
        c = p[5] if free_center else center_s
        return _model(t, p[0], p[1], p[2], p[3], p[4], c) - y

    x0 = [coef[0], amp0, period0, phase0, rms0, center_s]
    if not free_center:
        x0 = x0[:5]
    sol = optimize.least_squares(residual, x0, x_scale="jac", method="lm", max_nfev=20000)
    offset, amp, period, phase, rms = sol.x[:5]
    if amp < 0:
        amp, phase = -amp, phase + np.pi
    phase = float((phase + np.pi) % (2 * np.pi) - np.pi)
    center = float(sol.x[5]) if free_center else center_s
    if abs(rms) > 3 * span:
        raise FitError(f"fitted envelope width {abs(rms):.3g}s far exceeds the {span:.3g}s record; no decay seen")
    return EnvelopeFit(
        float(amp), float(period), float(abs(rms)), float(offset),
        float(np.linalg.norm(sol.fun)), phase, center,
    )


def original_fit(trace: EchoTrace) -> EnvelopeFit:
    """Envelope of the oscillations before any echo pulse."""
    t0 = trace.metadata.get("t0")
    if t0 is None:
        return fit_envelope(trace)
    return fit_envelope(trace, window=(0.0, t0 - trace.metadata.get("window", 0.0) / 2))


def fit_echo(echo_trace: EchoTrace, baseline_trace: EchoTrace) -> tuple[EnvelopeFit, EnvelopeFit]:
    """(echo envelope fit around 2 t0, original-oscillation fit).

    The baseline is subtracted, then the difference is projected onto the
    original envelope shape centred at 2 t0. When that projection shows a
    revival, a bounded nonlinear fit refines centre, width and period.
    """
    if echo_trace.times.shape != baseline_trace.times.shape or not np.allclose(
        echo_trace.times, baseline_trace.times, rtol=0, atol=1e-12
    ):
        raise ValueError("echo and baseline traces have mismatched time grids")
    t0 = echo_trace.metadata["t0"]
    orig = original_fit(echo_trace)
    after = echo_trace.times > t0
    t = echo_trace.times[after]
    diff = echo_trace.p1[after] - baseline_trace.p1[after]
    centre = 2 * t0
    env = np.exp(-((t - centre) ** 2) / (2 * orig.gaussian_rms_s**2))
    arg = 2 * np.pi * (t - centre) / orig.period_s
    basis = np.column_stack([np.ones_like(t), np.cos(arg) * env, np.sin(arg) * env])
    coef, *_ = np.linalg.lstsq(basis, diff, rcond=None)
    lin_amp = float(np.hypot(coef[1], coef[2]))
    lin = EnvelopeFit(
        lin_amp, orig.period_s, orig.gaussian_rms_s, float(coef[0]),
        float(np.linalg.norm(basis @ coef - diff)), float(np.arctan2(-coef[2], coef[1])), centre,
    )
    if lin_amp < 0.02 * orig.amplitude:
        return lin, orig

    def residual(p):
        return _model(t, p[0], p[1], p[2], p[3], p[4], p[5]) - diff

    w0, T0 = orig.gaussian_rms_s, orig.period_s
    x0 = [lin.offset, lin.amplitude, T0, lin.phase, w0, centre]
    lo = [-1, 0, 0.8 * T0, -4 * np.pi, 0.2 * w0, centre - t0 / 2]
    hi = [1, 1, 1.2 * T0, 4 * np.pi, 5 * w0, centre + t0 / 2]
    sol = optimize.least_squares(residual, x0, bounds=(lo, hi), x_scale="jac", max_nfev=20000)
    offset, amp, period, phase, rms, c = sol.x
    fit = EnvelopeFit(
        float(amp), float(period), float(rms), float(offset),
        float(np.linalg.norm(sol.fun)), float((phase + np.pi) % (2 * np.pi) - np.pi), float(c),
    )
    return fit, orig


def echo_center(echo_trace: EchoTrace, baseline_trace: EchoTrace) -> float:
    """Lag of the cross-correlation peak between the subtracted echo and the
    original oscillation template (Gaussian envelope at the 1-2 frequency)."""
    orig = original_fit(echo_trace)
    t0 = echo_trace.metadata["t0"]
    if echo_trace.times.shape != baseline_trace.times.shape:
        raise ValueError("echo and baseline traces have mismatched time grids")
    after = echo_trace.times > t0
    t = echo_trace.times[after]
    diff = echo_trace.p1[after] - baseline_trace.p1[after]
    dt = float(np.median(np.diff(t)))
    half = int(4 * orig.gaussian_rms_s / dt)
    lag = np.arange(-half, half + 1) * dt
    kernel = np.exp(-0.5 * (lag / orig.gaussian_rms_s) ** 2 - 2j * np.pi * lag / orig.period_s)
    score = np.abs(signal.convolve(diff - diff.mean(), kernel, mode="same"))
    k = int(np.argmax(score))
    if 0 < k < t.size - 1:
        a, b, c = score[k - 1 : k + 2]
        k = k + 0.5 * (a - c) / (a - 2 * b + c)
    return float(t[0] + k * dt)


def echo_amplitude(echo_trace: EchoTrace, baseline_trace: EchoTrace) -> float:
    """Echo envelope amplitude relative to the original oscillation amplitude."""
    fit, orig = fit_echo(echo_trace, baseline_trace)
    return fit.amplitude / orig.amplitude


def default_times(t_end: float, dt: float = 2.5e-6) -> np.ndarray:
    return np.round(np.arange(0.0, t_end + dt / 2, dt), 12)


def calibrate_inhomogeneity(
    target_rms_s: float,
    center_depth_s: float,
    prep_dx: float = 1 / 6,
    n_members: int = 64,
    n_q: int = 32,
    seed: int = 0,
    sigma_max: float = 8.0,
    rtol: float = 2e-3,
    lattice: LatticeConfig | None = None,
    sampling: str = "quadrature",
) -> float:
    """Depth spread whose simulated trace decays with the target Gaussian rms width."""
    if not target_rms_s > 0:
        raise ValueError("target_rms_s must be positive")
    times = default_times(5 * target_rms_s)

    def rms(sigma):
        ens = EnsembleSpec(center_depth_s, sigma, n_members if sigma > 0 else 1, n_q, seed, lattice, sampling)
        try:
            return fit_envelope(simulate_population_trace(ens, prep_dx, times)).gaussian_rms_s
        except FitError:
            return np.inf  # no decay within the record

    lo, hi = 0.0, sigma_max
    r_lo, r_hi = rms(lo), rms(hi)
    if not r_hi <= target_rms_s <= r_lo:
        raise ValueError(
            f"target rms {target_rms_s:g}s outside reachable range [{r_hi:g}, {r_lo:g}]s "
            f"for depth_sigma_s in [0, {sigma_max}]"
        )
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        r = rms(mid)
        log.debug("sigma=%.5f rms=%.3e", mid, r)
        if abs(r - target_rms_s) <= rtol * target_rms_s:
            return mid
        if r > target_rms_s:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class EchoVsT0Row:
    t0: float
    amplitude: float
    residual_original: float
    flagged: bool


def echo_vs_t0(
    ens: EnsembleSpec,
    prep_dx: float,
    echo,
    t0_grid,
    dt: float = 2.5e-6,
    baseline: str = "dephased",
    flag_level: float = 0.01,
) -> list[EchoVsT0Row]:
    """Normalized echo amplitude for each pulse time t0.

    ``residual_original`` is the fitted original envelope left at t0, relative
    to its initial amplitude; rows above ``flag_level`` are flagged.
    """
    rows = []
    for t0 in np.asarray(t0_grid, dtype=float):
        times = default_times(2 * t0 + 4 * _guess_rms(ens, prep_dx), dt)
        tr = simulate_echo(ens, prep_dx, echo, t0, times)
        base = simulate_echo(ens, prep_dx, echo, t0, times, baseline=baseline)
        fit, orig = fit_echo(tr, base)
        resid = float(np.exp(-(t0**2) / (2 * orig.gaussian_rms_s**2)))
        rows.append(EchoVsT0Row(float(t0), fit.amplitude / orig.amplitude, resid, resid > flag_level))
    return rows


def _guess_rms(ens: EnsembleSpec, prep_dx: float) -> float:
    times = default_times(3e-3, 5e-6)
    try:
        return fit_envelope(simulate_population_trace(ens, prep_dx, times)).gaussian_rms_s
    except FitError as exc:
        raise ValueError(f"ensemble does not dephase within 3 ms ({exc}); increase n_members") from None
