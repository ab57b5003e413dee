import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from washboard import config as cfgmod
from washboard.cli import run
from washboard.config import ConfigError


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# units:")
    return list(csv.reader(lines[1:]))


def test_defaults_resolve():
    cfg = cfgmod.resolve(None)
    assert cfg["lattice"]["depth_s"] == 18.0
    assert cfg["pulse"]["truncation_sigmas"] == 4.0
    assert cfg["echo"]["baseline"] == "dephased"


def test_grid_mapping_expands_inclusive():
    cfg = cfgmod.resolve({"sweep": {"dx": {"start": 0.0, "stop": 0.1, "step": 0.025}}})
    assert cfg["sweep"]["dx"] == [0.0, 0.025, 0.05, 0.075, 0.1]
    assert cfgmod.resolve({"sweep": {"depth": 18}})["sweep"]["depth"] == [18.0]


@pytest.mark.parametrize(
    "doc,key",
    [
        ({"lattice": {"depht_s": 3}}, "lattice.depht_s"),
        ({"latice": {}}, "latice"),
        ({"lattice": {"num_bands": 2.5}}, "lattice.num_bands"),
        ({"lattice": {"depth_s": "deep"}}, "lattice.depth_s"),
        ({"lattice": {"depth_s": True}}, "lattice.depth_s"),
        ({"lattice": {"depth_s": -3}}, "lattice"),
        ({"pulse": {"kind": "square", "amplitude": 0.2}}, "pulse"),
        ({"pulse": {"kind": "single_step", "amplitude": 0.9}}, "pulse"),
        ({"sweep": {"dx": [0.1, 0.7]}}, "sweep.dx"),
        ({"sweep": {"tau": {"start": 0.1, "stop": 0.5}}}, "sweep.tau"),
        ({"sweep": {"families": ["sawtooth"]}}, "sweep.families"),
        ({"echo": {"baseline": "never"}}, "echo.baseline"),
        ({"output": {"format": "parquet"}}, "output.format"),
    ],
)
def test_invalid_config_names_the_key(doc, key):
    with pytest.raises(ConfigError) as info:
        cfgmod.resolve(doc)
    assert info.value.key == key


def test_overrides_parse_yaml_scalars():
    doc = cfgmod.apply_overrides({}, [("lattice.depth_s", "20"), ("sweep.dx", "[0.1, 0.2]")])
    cfg = cfgmod.resolve(doc)
    assert cfg["lattice"]["depth_s"] == 20.0 and cfg["sweep"]["dx"] == [0.1, 0.2]
    with pytest.raises(ConfigError):
        cfgmod.apply_overrides({}, [("depth_s", "20")])


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("lattice: [unclosed\n")
    with pytest.raises(ConfigError):
        cfgmod.load(bad)
    with pytest.raises(ConfigError):
        cfgmod.load(tmp_path / "missing.yaml")


def test_bands_command(tmp_path):
    assert run(["bands", "--output.path", str(tmp_path), "--sweep.n_q", "16"]) == 0
    rows = read_csv(tmp_path / "bands.csv")
    assert rows[0] == ["q"] + [f"E{n}" for n in range(1, 8)]
    assert len(rows) == 17
    e = np.array(rows[1:], dtype=float)
    assert np.all(np.diff(e[:, 1:], axis=1) >= 0)
    manifest = json.loads((tmp_path / "bands.manifest.json").read_text())
    assert manifest["command"] == "bands" and "q" in manifest["grid_sha256"]


def test_manifest_rerun_is_byte_identical(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    args = ["couple", "--pulse.kind", "square", "--pulse.amplitude", "0.154", "--pulse.delay_scaled", "0.35",
            "--sweep.n_q", "16", "--sweep.dx", "[0.0, 0.1, 0.154]", "--sweep.tau", "[0.2, 0.35]"]
    assert run(args + ["--output.path", str(first)]) == 0
    manifest = first / "couple.manifest.json"
    assert run(["couple", "--config", str(manifest), "--output.path", str(second)]) == 0
    for name in ("couple_dx.csv", "couple_tau.csv", "couple_point.csv"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    a, b = json.loads(manifest.read_text()), json.loads((second / "couple.manifest.json").read_text())
    assert a["output_sha256"] == b["output_sha256"]
    assert read_csv(first / "couple_dx.csv")[0] == ["dx", "P11", "P12", "loss"]
    assert read_csv(first / "couple_tau.csv")[0] == ["tau", "P12", "P11", "loss"]


def test_optimize_and_lz_headers(tmp_path):
    assert run(["optimize", "--output.path", str(tmp_path), "--sweep.families", "single_step",
                "--sweep.n_q", "16"]) == 0
    rows = read_csv(tmp_path / "optimize.csv")
    assert rows[0] == ["family", "A_pulse", "W_pulse", "P12"]
    assert rows[1][0] == "single_step" and rows[1][2] == ""
    assert run(["lz", "--output.path", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "lz.csv")
    assert rows[0] == ["n", "rate_hz", "lifetime_s"]
    assert [r[0] for r in rows[1:]] == ["1", "2", "3"]


def test_scan_depth_and_loss_curve(tmp_path):
    assert run(["scan-depth", "--output.path", str(tmp_path), "--sweep.families", "square",
                "--sweep.depth", "[10]", "--sweep.n_q", "16"]) == 0
    rows = read_csv(tmp_path / "depth_scan.csv")
    assert rows[0] == ["s", "family", "A_opt", "W_opt", "P12_max", "tau_min_opt"]
    assert run(["loss-curve", "--output.path", str(tmp_path), "--sweep.families", "[single_step, square]",
                "--sweep.n_q", "16", "--sweep.dx", "{start: 0, stop: 0.3, step: 0.1}"]) == 0
    rows = read_csv(tmp_path / "loss_curve.csv")
    assert rows[0] == ["family", "W_pulse", "dx", "P12", "loss"] and len(rows) == 9


def test_echo_command(tmp_path):
    args = ["echo", "--output.path", str(tmp_path), "--lattice.depth_s", "20", "--echo.depth_sigma_s", "3.64",
            "--echo.n_members", "32", "--echo.n_q", "8", "--echo.t0", "5e-4", "--echo.t_end", "1.4e-3",
            "--echo.dt", "5e-6", "--pulse.kind", "square", "--pulse.amplitude", "0.167",
            "--pulse.delay_scaled", "0.4"]
    with pytest.warns(UserWarning, match="leave band 2 unbound"):
        assert run(args) == 0
    assert read_csv(tmp_path / "echo.csv")[0] == ["t_s", "p1"]
    fit = dict(read_csv(tmp_path / "echo_fit.csv")[1:])
    assert float(fit["rms_s"]) == pytest.approx(258e-6, rel=0.05)


def test_errors_are_machine_readable(tmp_path, capsys):
    assert run(["bands", "--lattice.depth_s", "-1", "--output.path", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "config" and err["key"] == "lattice"
    assert run(["couple", "--output.path", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["key"] == "pulse.kind"
    assert run(["bands", "stray"]) == 2
    assert run(["bands", "--lattice.depth_s"]) == 2
    assert not (tmp_path / "bands.csv").exists()


def test_runtime_error_exit_code(tmp_path, capsys):
    assert run(["scan-depth", "--sweep.depth", "[2]", "--sweep.families", "single_step",
                "--output.path", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ValueError" and "not bound" in err["message"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "washboard", "lz", "--output.path", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "lz.csv").exists()


def test_bands_free_particle(tmp_path):
    assert run(["bands", "--output.path", str(tmp_path), "--lattice.depth_s", "0"]) == 0
    e = np.array(read_csv(tmp_path / "bands.csv")[1:], dtype=float)
    assert e.shape == (64, 8)
    np.testing.assert_allclose(e[:, 1], e[:, 0] ** 2, atol=1e-9)


@pytest.mark.slow
def test_optimize_all_families_at_18(tmp_path):
    assert run(["optimize", "--output.path", str(tmp_path)]) == 0
    rows = {r[0]: float(r[3]) for r in read_csv(tmp_path / "optimize.csv")[1:]}
    assert rows["single_step"] == pytest.approx(0.39, abs=0.005)
    assert rows["square"] == pytest.approx(0.48, abs=0.005)
    assert rows["gaussian"] == pytest.approx(0.47, abs=0.005)


@pytest.mark.slow
def test_scan_depth_square_peak(tmp_path):
    assert run(["scan-depth", "--output.path", str(tmp_path), "--sweep.families", "square",
                "--sweep.depth", "[5, 6, 7]", "--sweep.n_q", "32"]) == 0
    rows = np.array([[float(r[0]), float(r[4])] for r in read_csv(tmp_path / "depth_scan.csv")[1:]])
    assert rows[np.argmax(rows[:, 1]), 0] == 6.0
    assert rows[:, 1].max() == pytest.approx(0.64, abs=0.01)
