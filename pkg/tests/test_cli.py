import csv
import json
import math
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

import jchsim
from jchsim.cli import main, parse_sweep
from jchsim.params import ConfigError

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


def write_cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(x) for x in r] for r in rows[1:]]


ZERO_HOP = """
n_ions = 2
t_x_khz = 0.0
t_y_khz = 0.0
g_x_khz = 20.0
g_y_khz = 26.0
delta_khz = 0.1
n_excitations = 1
initial_state = up,down
"""

ISO_PAIR = """
n_ions = 2
t_x_khz = 0.1
t_y_khz = 0.1
g_x_khz = 20.0
g_y_khz = 20.0
delta_khz = 0.0
n_excitations = 1
initial_state = up,down
"""


def test_crystal_command(tmp_path):
    out = tmp_path / "o"
    rc = main(["crystal", "--config", str(CONFIG_DIR / "crystal21.cfg"),
               "--out", str(out), "--svg"])
    assert rc == 0
    header, rows = read_csv(out / "crystal.csv")
    assert header[0] == "j"
    assert len(rows) == 21
    positions = [r[header.index("u_j")] for r in rows]
    assert positions == sorted(positions)
    assert positions[10] == pytest.approx(0.0, abs=1e-12)
    dw = [r[header.index("dw_x_khz")] for r in rows]
    # on-site shifts are negative and deepest at the center
    assert all(x < 0.0 for x in dw)
    assert min(dw) == dw[10]
    assert dw[:11] == sorted(dw[:11], reverse=True)  # deeper toward center
    _, pairs = read_csv(out / "crystal_pairs.csv")
    assert len(pairs) == 21 * 20 // 2
    manifest = json.loads((out / "crystal_manifest.json").read_text())
    assert manifest["residuals"]["force_residual"] < 1e-12
    tree = ET.parse(out / "crystal.svg")
    assert tree.getroot().tag.endswith("svg")


def test_spectrum_isotropic_point(tmp_path):
    cfg = write_cfg(tmp_path, ISO_PAIR)
    out = tmp_path / "o"
    rc = main(["spectrum", "--config", cfg, "--out", str(out),
               "--sweep", "delta_khz:-10:10:5"])
    assert rc == 0
    header, rows = read_csv(out / "spectrum.csv")
    assert len(rows) == 5
    center = rows[2]
    assert center[header.index("delta_khz")] == 0.0
    assert abs(center[header.index("split_khz")]) < 1e-12
    assert center[header.index("U0_khz")] == pytest.approx(
        (2.0 - math.sqrt(2.0)) * 20.0, rel=1e-10)
    # normalized column is the same gap in units of g_x (both angular)
    assert center[header.index("U0_over_gx")] == pytest.approx(
        2.0 - math.sqrt(2.0), rel=1e-10)


def test_couplings_isotropic_lambda_is_one(tmp_path):
    cfg = write_cfg(tmp_path, ISO_PAIR)
    out = tmp_path / "o"
    rc = main(["couplings", "--config", cfg, "--out", str(out)])
    assert rc == 0
    header, rows = read_csv(out / "couplings_spin_half.csv")
    pair = rows[0]
    assert pair[:2] == [1.0, 2.0]
    k_xy = pair[header.index("Kxy_or_Jxy_khz")]
    k_z = pair[header.index("Kz_or_Jz_khz")]
    assert k_xy == pytest.approx(-9.0 * 0.1 * 0.1 / (16.0 * 20.0), rel=1e-10)
    assert k_z / k_xy == pytest.approx(1.0, rel=1e-10)
    one_header, one_rows = read_csv(out / "couplings_spin_one.csv")
    assert one_header == list(header)
    assert len(one_rows) == len(rows)


def test_couplings_sweep(tmp_path):
    cfg = write_cfg(tmp_path, ISO_PAIR)
    out = tmp_path / "o"
    rc = main(["couplings", "--config", cfg, "--out", str(out),
               "--sweep", "g_y_khz:12:20:3", "--svg"])
    assert rc == 0
    header, rows = read_csv(out / "couplings_sweep.csv")
    assert header[0] == "g_y_khz"
    assert [r[0] for r in rows] == [12.0, 16.0, 20.0]
    lam = [r[header.index("lambda")] for r in rows]
    assert all(math.isfinite(x) for x in lam)
    assert lam[-1] == pytest.approx(1.0, rel=1e-10)
    tree = ET.parse(out / "couplings_sweep.svg")
    assert tree.getroot().tag.endswith("svg")


def test_evolve_zero_hopping_static(tmp_path):
    cfg = write_cfg(tmp_path, ZERO_HOP)
    out = tmp_path / "o"
    rc = main(["evolve", "--config", cfg, "--out", str(out)])
    assert rc == 0
    header, rows = read_csv(out / "evolution.csv")
    i_init = header.index("P_up.down")
    assert all(r[i_init] == pytest.approx(1.0, abs=1e-10) for r in rows)
    manifest = json.loads((out / "evolve_manifest.json").read_text())
    assert manifest["residuals"]["norm_drift"] < 1e-9
    # two sites sharing two excitations: 1*7 + 4*4 + 7*1 site splittings
    assert manifest["residuals"]["sector_dim"] == 30


def test_compare_command(tmp_path):
    out = tmp_path / "o"
    rc = main(["compare", "--config",
               str(CONFIG_DIR / "anisotropy_scan.cfg"),
               "--out", str(out), "--svg"])
    assert rc == 0
    for name in ("compare_full.csv", "compare_effective.csv",
                 "compare_report.txt", "compare.svg",
                 "compare_manifest.json"):
        assert (out / name).exists()
    report = (out / "compare_report.txt").read_text()
    dev = float(report.splitlines()[0].split("=")[1])
    assert dev < 0.1
    manifest = json.loads((out / "compare_manifest.json").read_text())
    assert manifest["residuals"]["overall_max_deviation"] == pytest.approx(
        dev, abs=5e-7)


def test_outputs_are_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, ISO_PAIR)
    blobs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert main(["couplings", "--config", cfg, "--out", str(out)]) == 0
        blobs.append((out / "couplings_spin_half.csv").read_bytes()
                     + (out / "couplings_spin_one.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_exit_code_config_errors(tmp_path, capsys):
    assert main(["crystal", "--config", str(tmp_path / "absent.cfg"),
                 "--out", str(tmp_path)]) == 2
    bad = write_cfg(tmp_path, ISO_PAIR + "\nbogus = 1\n", "bad.cfg")
    assert main(["crystal", "--config", bad, "--out", str(tmp_path)]) == 2
    cfg = write_cfg(tmp_path, ISO_PAIR)
    assert main(["couplings", "--config", cfg, "--out", str(tmp_path),
                 "--sweep", "g_y_khz:12"]) == 2
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path),
                 "--sweep", "g_x_khz:1:2:3"]) == 2
    err = capsys.readouterr().err
    assert "config error" in err


def test_exit_code_numerical_failure(tmp_path, capsys):
    cfg = write_cfg(tmp_path, """
n_ions = 2
t_x_khz = 0.1
t_y_khz = 0.17
g_x_khz = 34.0
g_y_khz = 34.0
delta_khz = 34000000.0
n_excitations = 1
""")
    assert main(["couplings", "--config", cfg, "--out", str(tmp_path)]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_manifest_structure(tmp_path):
    cfg = write_cfg(tmp_path, ISO_PAIR)
    out = tmp_path / "o"
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    manifest = json.loads((out / "spectrum_manifest.json").read_text())
    assert manifest["command"] == "spectrum"
    assert manifest["version"] == jchsim.__version__
    assert manifest["config"]["g_x_khz"] == "20.0"
    for path in manifest["outputs"]:
        assert Path(path).exists()


def test_parse_sweep_grammar():
    assert parse_sweep("g_y_khz:1:2:5") == ("g_y_khz", 1.0, 2.0, 5)
    with pytest.raises(ConfigError):
        parse_sweep("g_y_khz:1:2:1")
    with pytest.raises(ConfigError):
        parse_sweep("g_y_khz:1:2:2.5")


def test_thread_env_var(tmp_path, monkeypatch):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        monkeypatch.delenv(var, raising=False)
    monkeypatch.setenv("JCHSIM_THREADS", "2")
    cfg = write_cfg(tmp_path, ISO_PAIR)
    import os

    assert main(["crystal", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert os.environ["OMP_NUM_THREADS"] == "2"
