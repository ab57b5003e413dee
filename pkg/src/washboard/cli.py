"""Command-line front end.

    washboard <command> [--config run.yaml] [--section.key VALUE ...]

Each command writes its CSV files plus ``<command>.manifest.json`` into
``output.path``. A manifest is itself a valid config: passing it back with
``--config`` reproduces the outputs byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod
from .config import ConfigError, lattice_config, pulse_spec
from .coupling import (
    DEFAULT_DX_GRID,
    DEFAULT_FWHM_GRID,
    DEFAULT_TAU_GRID,
    coupling_probabilities,
    depth_scan,
    loss_vs_coupling,
    optimize_pulse,
    scan_delay,
    scan_displacement,
)
from .echo import (
    EnsembleSpec,
    calibrate_inhomogeneity,
    default_times,
    echo_vs_t0,
    fit_echo,
    fit_envelope,
    simulate_echo,
    simulate_population_trace,
)
from .lattice import band_structure, lz_lifetimes

COMMANDS = ("bands", "couple", "optimize", "scan-depth", "loss-curve", "echo", "lz")
log = logging.getLogger("washboard")

# default fixed temporal parameters for loss-vs-coupling curves (s = 18 optima)
LOSS_CURVE_WIDTHS = {"single_step": None, "square": 0.35, "gaussian": 0.294}


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class Outputs:
    """Collects CSV text so that files are written only after a command succeeds."""

    def __init__(self):
        self.files: dict[str, str] = {}

    def csv(self, name: str, header: list[str], units: str, rows) -> None:
        buf = io.StringIO()
        buf.write(f"# units: {units}\n")
        buf.write(",".join(header) + "\n")
        for row in rows:
            buf.write(",".join(_fmt(v) for v in row) + "\n")
        self.files[name] = buf.getvalue()


def _grid_hash(values) -> str:
    arr = np.ascontiguousarray(np.asarray(values, dtype="<f8"))
    return hashlib.sha256(arr.tobytes()).hexdigest()


def _sweep(cfg, key, default):
    v = cfg["sweep"][key]
    return np.asarray(default if v is None else v, dtype=float)


def cmd_bands(cfg, out: Outputs, grids: dict) -> None:
    lat = lattice_config(cfg)
    bands = band_structure(lat, cfg["sweep"]["n_q"])
    grids["q"] = bands.q
    nb = lat.num_bands
    header = ["q"] + [f"E{n}" for n in range(1, nb + 1)]
    out.csv("bands.csv", header, f"q=k_L, E1..E{nb}=E_R",
            ([q, *e] for q, e in zip(bands.q, bands.energies)))


def cmd_couple(cfg, out: Outputs, grids: dict) -> None:
    lat = lattice_config(cfg)
    spec = pulse_spec(cfg)
    n_q = cfg["sweep"]["n_q"]
    dx = _sweep(cfg, "dx", DEFAULT_DX_GRID)
    grids["dx"] = dx
    kw = {"step_dt_s": spec.step_dt_s, "truncation_sigmas": spec.truncation_sigmas} if spec.kind == "gaussian" else {}
    rows = scan_displacement(lat, spec.kind, spec.width, dx, n_q, **kw)
    out.csv("couple_dx.csv", ["dx", "P11", "P12", "loss"], "dx=a, P11=prob, P12=prob, loss=prob",
            ([d, r.P11, r.P12, r.loss] for d, r in zip(dx, rows)))
    if spec.kind == "square":
        tau = _sweep(cfg, "tau", DEFAULT_TAU_GRID)
        grids["tau"] = tau
        rows = scan_delay(lat, spec.amplitude, tau, n_q)
        out.csv("couple_tau.csv", ["tau", "P12", "P11", "loss"], "tau=T12, P12=prob, P11=prob, loss=prob",
                ([t, r.P12, r.P11, r.loss] for t, r in zip(tau, rows)))
    r1 = coupling_probabilities(lat, spec, 1, n_q)
    r2 = coupling_probabilities(lat, spec, 2, n_q)
    out.csv("couple_point.csv", ["P11", "P12", "P21", "P22", "loss1", "loss2"], "all=prob",
            [[r1.P11, r1.P12, r2.P21, r2.P22, r1.loss, r2.loss]])


def _width_grid(cfg, kind):
    if kind == "square":
        return _sweep(cfg, "tau", DEFAULT_TAU_GRID)
    if kind == "gaussian":
        return _sweep(cfg, "fwhm", DEFAULT_FWHM_GRID)
    return None


def _gauss_kw(cfg, kind):
    p = cfg["pulse"]
    return {"step_dt_s": p["step_dt_s"], "truncation_sigmas": p["truncation_sigmas"]} if kind == "gaussian" else {}


def cmd_optimize(cfg, out: Outputs, grids: dict) -> None:
    lat = lattice_config(cfg)
    dx = _sweep(cfg, "dx", DEFAULT_DX_GRID)
    grids["dx"] = dx
    rows = []
    for kind in cfg["sweep"]["families"]:
        widths = _width_grid(cfg, kind)
        if widths is not None:
            grids["tau" if kind == "square" else "fwhm"] = widths
        opt = optimize_pulse(lat, kind, dx, widths, cfg["sweep"]["n_q"], **_gauss_kw(cfg, kind))
        rows.append([kind, opt.spec.amplitude, opt.spec.width, opt.p12])
    out.csv("optimize.csv", ["family", "A_pulse", "W_pulse", "P12"],
            "A_pulse=a, W_pulse=T12 (square delay or Gaussian FWHM), P12=prob", rows)


def cmd_scan_depth(cfg, out: Outputs, grids: dict) -> None:
    lat = lattice_config(cfg)
    depth = _sweep(cfg, "depth", np.arange(4.0, 31.0))
    dx = _sweep(cfg, "dx", DEFAULT_DX_GRID)
    grids.update(depth=depth, dx=dx)
    rows = []
    for kind in cfg["sweep"]["families"]:
        widths = _width_grid(cfg, kind)
        for r in depth_scan(kind, depth, lat, dx, widths, cfg["sweep"]["n_q"], **_gauss_kw(cfg, kind)):
            rows.append([r.s, r.family, r.A_opt, r.W_opt, r.P12_max, r.tau_min_opt])
    out.csv("depth_scan.csv", ["s", "family", "A_opt", "W_opt", "P12_max", "tau_min_opt"],
            "s=E_R, A_opt=a, W_opt=T12, P12_max=prob, tau_min_opt=T12", rows)


def cmd_loss_curve(cfg, out: Outputs, grids: dict) -> None:
    lat = lattice_config(cfg)
    dx = _sweep(cfg, "dx", np.linspace(0, 0.5, 181))
    grids["dx"] = dx
    p = cfg["pulse"]
    given = {"square": p["delay_scaled"], "gaussian": p["fwhm_scaled"]}
    rows = []
    for kind in cfg["sweep"]["families"]:
        width = given.get(kind) or LOSS_CURVE_WIDTHS[kind]
        curve = loss_vs_coupling(lat, kind, width, dx, cfg["sweep"]["n_q"], **_gauss_kw(cfg, kind))
        rows += [[kind, width, d, p12, loss] for d, p12, loss in zip(curve.dx, curve.p12, curve.loss)]
    out.csv("loss_curve.csv", ["family", "W_pulse", "dx", "P12", "loss"],
            "W_pulse=T12, dx=a, P12=prob, loss=prob", rows)


def _ensemble(cfg) -> EnsembleSpec:
    e = cfg["echo"]
    lat = lattice_config(cfg)
    s = e["center_depth_s"] if e["center_depth_s"] is not None else lat.depth_s
    sigma = e["depth_sigma_s"]
    if sigma is None:
        sigma = calibrate_inhomogeneity(
            e["target_rms_s"], s, e["prep_dx"], e["n_members"], e["n_q"], e["seed"],
            lattice=lat, sampling=e["sampling"],
        )
        log.info("calibrated depth_sigma_s=%.6g", sigma)
    return EnsembleSpec(s, sigma, e["n_members"] if sigma > 0 else 1, e["n_q"], e["seed"], lat, e["sampling"])


def cmd_echo(cfg, out: Outputs, grids: dict) -> None:
    e = cfg["echo"]
    ens = _ensemble(cfg)
    times = default_times(e["t_end"], e["dt"])
    grids["t"] = times
    units = "t_s=s, p1=prob"
    params = [["depth_sigma_s", ens.depth_sigma_s], ["center_depth_s", ens.center_depth_s]]
    if cfg["pulse"]["kind"] is None:
        tr = simulate_population_trace(ens, e["prep_dx"], times)
        out.csv("echo.csv", ["t_s", "p1"], units, zip(tr.times, tr.p1))
        fit = fit_envelope(tr)
        params += [["amplitude", fit.amplitude], ["period_s", fit.period_s], ["rms_s", fit.gaussian_rms_s]]
    else:
        spec = pulse_spec(cfg)
        tr = simulate_echo(ens, e["prep_dx"], spec, e["t0"], times)
        base = simulate_echo(ens, e["prep_dx"], spec, e["t0"], times, baseline=e["baseline"])
        out.csv("echo.csv", ["t_s", "p1"], units, zip(tr.times, tr.p1))
        out.csv("echo_baseline.csv", ["t_s", "p1"], units, zip(base.times, base.p1))
        fit, orig = fit_echo(tr, base)
        params += [
            ["original_amplitude", orig.amplitude], ["period_s", orig.period_s], ["rms_s", orig.gaussian_rms_s],
            ["echo_amplitude", fit.amplitude / orig.amplitude], ["echo_center_s", fit.center_s],
        ]
        if cfg["sweep"]["t0"] is not None:
            t0 = np.asarray(cfg["sweep"]["t0"])
            grids["t0"] = t0
            rows = echo_vs_t0(ens, e["prep_dx"], spec, t0, e["dt"], e["baseline"])
            out.csv("echo_vs_t0.csv", ["t0_s", "echo_amplitude", "residual_original", "flagged"],
                    "t0_s=s, echo_amplitude=ratio, residual_original=ratio, flagged=0/1",
                    ([r.t0, r.amplitude, r.residual_original, int(r.flagged)] for r in rows))
    out.csv("echo_fit.csv", ["quantity", "value"], "depth=E_R, times=s, amplitudes=prob or ratio", params)


def cmd_lz(cfg, out: Outputs, grids: dict) -> None:
    lat = lattice_config(cfg)
    res = lz_lifetimes(lat, cfg["sweep"]["n_q"])
    rows = list(zip(res.band, res.rate_hz, res.lifetime_s))[:3]
    out.csv("lz.csv", ["n", "rate_hz", "lifetime_s"], "n=lower band of n->n+1, rate_hz=Hz, lifetime_s=s",
            ([int(n), r, t] for n, r, t in rows))


HANDLERS = {
    "bands": cmd_bands,
    "couple": cmd_couple,
    "optimize": cmd_optimize,
    "scan-depth": cmd_scan_depth,
    "loss-curve": cmd_loss_curve,
    "echo": cmd_echo,
    "lz": cmd_lz,
}


def _parse(argv):
    parser = argparse.ArgumentParser(prog="washboard", description="Optical-lattice vibrational control toolkit")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="YAML config or a previous run manifest")
    parser.add_argument("-v", "--verbose", action="store_true")
    args, rest = parser.parse_known_args(argv)
    overrides = []
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--") or "." not in tok:
            raise ConfigError(tok, "unrecognised argument; overrides look like --section.key VALUE")
        if "=" in tok:
            key, val = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(rest):
                raise ConfigError(tok[2:], "missing value")
            key, val = tok[2:], rest[i + 1]
            i += 2
        overrides.append((key, val))
    return args, overrides


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args, overrides = _parse(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
        doc = cfgmod.apply_overrides(cfgmod.load(args.config), overrides)
        cfg = cfgmod.resolve(doc)
        out, grids = Outputs(), {}
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            HANDLERS[args.command](cfg, out, grids)
        dest = Path(cfg["output"]["path"])
        dest.mkdir(parents=True, exist_ok=True)
        for name, text in out.files.items():
            (dest / name).write_text(text)
        manifest = {
            "manifest_version": cfgmod.MANIFEST_VERSION,
            "tool": "washboard",
            "version": __version__,
            "command": args.command,
            "config": cfg,
            "grid_sha256": {k: _grid_hash(v) for k, v in sorted(grids.items())},
            "output_sha256": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(out.files.items())},
        }
        name = args.command.replace("-", "_") + ".manifest.json"
        (dest / name).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return 0
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        _error("usage", "invalid command line", None)
        return 2
    except ConfigError as exc:
        _error("config", str(exc), exc.key)
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as a machine-readable line
        _error(type(exc).__name__, str(exc), None)
        return 1


def _error(kind: str, message: str, key) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "key": key}) + "\n")


def main() -> None:
    sys.exit(run())
