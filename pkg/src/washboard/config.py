"""Run configuration: a YAML document with lattice / pulse / sweep / echo / output sections.

Every key is validated before any computation; unknown keys are rejected with
their dotted path. Grids may be given as explicit lists or as
``{start, stop, step}`` mappings (stop inclusive).
"""

from __future__ import annotations

import copy
from dataclasses import fields
from pathlib import Path

import numpy as np
import yaml

from .lattice import LatticeConfig
from .pulses import KINDS, PulseSpec, make_pulse


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


MANIFEST_VERSION = 1

DEFAULTS: dict = {
    "lattice": {f.name: f.default for f in fields(LatticeConfig) if f.name != "depth_s"} | {"depth_s": 18.0},
    "pulse": {
        "kind": None,
        "amplitude": None,
        "delay_scaled": None,
        "fwhm_scaled": None,
        "step_dt_s": 5e-6,
        "truncation_sigmas": 4.0,
    },
    "sweep": {
        "n_q": 64,
        "families": list(KINDS),
        "dx": None,
        "tau": None,
        "fwhm": None,
        "depth": None,
        "t0": None,
    },
    "echo": {
        "center_depth_s": None,
        "depth_sigma_s": None,
        "target_rms_s": 258e-6,
        "n_members": 64,
        "n_q": 32,
        "seed": 0,
        "sampling": "quadrature",
        "prep_dx": 1 / 6,
        "t0": 1.04e-3,
        "t_end": 2.9e-3,
        "dt": 2.5e-6,
        "baseline": "dephased",
    },
    "output": {"path": ".", "format": "csv"},
}

_INT_KEYS = {"lattice.num_plane_waves", "lattice.num_bands", "sweep.n_q", "echo.n_members", "echo.n_q", "echo.seed"}
_STR_KEYS = {"pulse.kind", "echo.baseline", "echo.sampling", "output.path", "output.format"}
_GRID_KEYS = {"sweep.dx", "sweep.tau", "sweep.fwhm", "sweep.depth", "sweep.t0"}


def _coerce(key: str, value):
    if value is None:
        return None
    if key in _GRID_KEYS:
        return _grid(key, value)
    if key == "sweep.families":
        fam = [value] if isinstance(value, str) else list(value)
        bad = [f for f in fam if f not in KINDS]
        if bad or not fam:
            raise ConfigError(key, f"families must be a non-empty subset of {list(KINDS)}, got {fam}")
        return fam
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if key in _INT_KEYS:
        if not float(value).is_integer():
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}") from None


def _grid(key: str, value) -> list[float]:
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "step"}
        if extra or not {"start", "stop", "step"} <= set(value):
            raise ConfigError(key, "grid mapping needs exactly start, stop, step")
        start, stop, step = (float(value[k]) for k in ("start", "stop", "step"))
        if step <= 0 or stop < start:
            raise ConfigError(key, "grid needs step > 0 and stop >= start")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    vals = [value] if np.isscalar(value) else list(value)
    try:
        out = [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError(key, f"grid entries must be numbers, got {value!r}") from None
    if not out:
        raise ConfigError(key, "grid is empty")
    return out


def resolve(doc: dict | None) -> dict:
    """Merge a user document over the defaults, checking every key."""
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a mapping of sections")
    if "manifest_version" in doc:
        doc = doc.get("config", {})
    cfg = copy.deepcopy(DEFAULTS)
    for section, body in doc.items():
        if section not in cfg:
            raise ConfigError(section, f"unknown section; expected one of {sorted(cfg)}")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(section, "section must be a mapping")
        for key, value in body.items():
            path = f"{section}.{key}"
            if key not in cfg[section]:
                raise ConfigError(path, f"unknown key; expected one of {sorted(cfg[section])}")
            cfg[section][key] = _coerce(path, value)
    _check(cfg)
    return cfg


def apply_overrides(doc: dict, overrides: list[tuple[str, str]]) -> dict:
    """Set dotted keys from command-line flags; values are parsed as YAML scalars or lists."""
    doc = copy.deepcopy(doc or {})
    if "manifest_version" in doc:
        doc = doc.get("config", {})
    for path, raw in overrides:
        parts = path.split(".")
        if len(parts) != 2:
            raise ConfigError(path, "override flags take the form --section.key VALUE")
        section, key = parts
        doc.setdefault(section, {})
        if doc[section] is None:
            doc[section] = {}
        doc[section][key] = yaml.safe_load(raw)
    return doc


def load(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read config {path}: {exc.strerror}") from None
    try:
        return yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None


def _check(cfg: dict) -> None:
    try:
        lattice_config(cfg)
    except ValueError as exc:
        raise ConfigError("lattice", str(exc)) from None
    if cfg["pulse"]["kind"] is not None:
        try:
            pulse_spec(cfg)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError("pulse", str(exc)) from None
    if cfg["sweep"]["n_q"] < 2:
        raise ConfigError("sweep.n_q", "must be >= 2")
    e = cfg["echo"]
    if e["baseline"] not in ("dephased", "late"):
        raise ConfigError("echo.baseline", "must be 'dephased' or 'late'")
    if e["sampling"] not in ("quadrature", "stratified"):
        raise ConfigError("echo.sampling", "must be 'quadrature' or 'stratified'")
    if not 0 < e["prep_dx"] <= 0.5:
        raise ConfigError("echo.prep_dx", "must lie in (0, 0.5]")
    if e["depth_sigma_s"] is not None and e["depth_sigma_s"] < 0:
        raise ConfigError("echo.depth_sigma_s", "must be >= 0")
    if e["depth_sigma_s"] is None and (e["target_rms_s"] is None or e["target_rms_s"] <= 0):
        raise ConfigError("echo.target_rms_s", "must be > 0 when depth_sigma_s is not given")
    if e["n_members"] < 1 or e["n_q"] < 1:
        raise ConfigError("echo", "n_members and n_q must be >= 1")
    if e["dt"] <= 0 or e["t_end"] <= 0:
        raise ConfigError("echo", "dt and t_end must be positive")
    if cfg["output"]["format"] != "csv":
        raise ConfigError("output.format", "only 'csv' is supported")
    for key in ("dx", "tau", "fwhm", "depth", "t0"):
        grid = cfg["sweep"][key]
        if grid is None:
            continue
        arr = np.asarray(grid)
        if key == "dx" and (arr.min() < 0 or arr.max() > 0.5):
            raise ConfigError("sweep.dx", "displacements must lie within [0, 0.5]")
        if key != "dx" and arr.min() <= 0:
            raise ConfigError(f"sweep.{key}", "values must be positive")


def lattice_config(cfg: dict) -> LatticeConfig:
    return LatticeConfig(**cfg["lattice"])


def pulse_spec(cfg: dict, kind: str | None = None) -> PulseSpec:
    p = cfg["pulse"]
    kind = kind or p["kind"]
    if kind not in KINDS:
        raise ConfigError("pulse.kind", f"must be one of {list(KINDS)}, got {kind!r}")
    if p["amplitude"] is None:
        raise ConfigError("pulse.amplitude", "required for this command")
    width = {"square": p["delay_scaled"], "gaussian": p["fwhm_scaled"]}.get(kind)
    kw = {"step_dt_s": p["step_dt_s"], "truncation_sigmas": p["truncation_sigmas"]} if kind == "gaussian" else {}
    return make_pulse(kind, p["amplitude"], width, **kw)
