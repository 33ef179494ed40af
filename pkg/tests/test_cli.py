import json
import math

import numpy as np
import pytest

from relaxlab import config as cfgmod
from relaxlab.cli import fmt, main
from relaxlab.errors import ConfigError

from conftest import CONFIG_DIR, GOLDEN_DIR


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _base(**extra):
    cfg = {"velocity": {"kind": "interval", "lo": -1.0, "hi": 1.0},
           "sigma": {"kind": "constant", "value": 1.0},
           "gcc": {"T": [1.0], "n_x": 16, "n_v": 9}}
    cfg.update(extra)
    return cfg


def test_fmt_shortest_round_trip():
    assert fmt(0.1) == "0.1"
    assert fmt(np.float64(1 / 3)) == repr(1 / 3)
    assert fmt(np.int64(7)) == "7" and fmt(True) == "1" and fmt(None) == ""
    assert float(fmt(math.pi)) == math.pi


def test_schema_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="bogus"):
        cfgmod.resolve({**_base(), "bogus": 1})
    with pytest.raises(ConfigError, match="gcc"):
        cfgmod.resolve(_base(gcc={"T": [1.0], "nx": 3}))


def test_schema_reports_field_of_matching_branch():
    with pytest.raises(ConfigError, match="sigma/value"):
        cfgmod.resolve(_base(sigma={"kind": "constant", "value": -1}))


def test_defaults_materialised_only_for_matching_branch():
    cfg = cfgmod.resolve(_base(solver={"initial": {"kind": "equilibrium"}}))
    assert cfg["solver"]["initial"] == {"kind": "equilibrium"}
    assert cfg["solver"]["n_x"] == 256 and cfg["potential"] == {"kind": "zero"}
    assert cfg["mc"]["n"] == 100000 and cfg["seed"] == 0


def test_shipped_configs_validate():
    for path in sorted(CONFIG_DIR.glob("*.json")):
        cfgmod.build_problem(cfgmod.load(path))


def test_invalid_json_reports_line(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "d": 1,\n  oops\n}')
    assert main(["gcc", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "line 3" in capsys.readouterr().err


def test_gcc_constant_exit_zero(tmp_path):
    out = tmp_path / "o"
    assert main(["gcc", "--config", _write(tmp_path, _base()), "--out", str(out)]) == 0
    rep = json.loads((out / "gcc_report.json").read_text())
    assert rep["reports"][0]["kappa_hat"] == pytest.approx(1.0, abs=1e-10)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "gcc" and manifest["config"]["gcc"]["n_quad"] == 128


def test_gcc_failure_exit_three(tmp_path):
    cfg = _base(sigma={"kind": "indicator", "lo": [0.0], "hi": [0.5], "width": 0.05})
    assert main(["gcc", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
    assert main(["cert", "--config", str(CONFIG_DIR / "indicator_fail.json"),
                 "--out", str(tmp_path / "c")]) == 3


def test_gcc_golden(tmp_path):
    out = tmp_path / "g"
    assert main(["gcc", "--config", str(CONFIG_DIR / "gt_bump.json"), "--out", str(out)]) == 0
    assert (out / "gcc_report.json").read_bytes() == \
        (GOLDEN_DIR / "gt_bump_gcc_report.json").read_bytes()


def test_gcc_samples_csv(tmp_path):
    cfg = _base(gcc={"T": [1.0], "n_x": 4, "n_v": 3, "write_samples": True})
    out = tmp_path / "o"
    assert main(["gcc", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    lines = (out / "gcc_samples_00.csv").read_text().splitlines()
    assert lines[0] == "x0,v0,integral" and len(lines) == 13


def test_cert_needs_regime(tmp_path):
    assert main(["cert", "--config", _write(tmp_path, _base()), "--out", str(tmp_path)]) == 1


def test_cert_r1_example(tmp_path):
    out = tmp_path / "c"
    assert main(["cert", "--config", str(CONFIG_DIR / "r1_uniform.json"), "--out", str(out)]) == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["lambda"] == pytest.approx(0.0002863457828594927, rel=1e-12)
    assert set(cert["metadata"]["alpha_variants"]) == {"LemmaForm", "TheoremForm"}
    assert cert["C_plus"] == pytest.approx(1.0)


def test_solve_zero_time_single_snapshot(tmp_path):
    cfg = _base(solver={"n_x": 16, "n_v": 4, "t_end": 0.0,
                        "initial": {"kind": "cell", "x": 0.3, "v": 0.2}})
    out = tmp_path / "s"
    assert main(["solve", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    side = json.loads((out / "snapshot_0000.json").read_text())
    data = np.fromfile(out / "snapshot_0000.bin", dtype="<f8").reshape(side["shape"])
    assert side["time"] == 0.0 and not (out / "snapshot_0001.bin").exists()
    assert data.sum() * side["dx"] / 4 == pytest.approx(1.0)
    assert np.count_nonzero(data) == 1
    rows = (out / "timeseries.csv").read_text().splitlines()
    assert rows[0] == "t,tv,mass,min_ratio" and len(rows) == 2


def test_solve_cfl_exit_two(tmp_path):
    cfg = _base(solver={"n_x": 64, "n_v": 8, "dt": 0.1, "t_end": 0.2})
    assert main(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "s")]) == 2


def test_fit_after_solve(tmp_path):
    cfg = _base(solver={"n_x": 32, "n_v": 8, "t_end": 6.0, "snapshot_every": 8,
                        "initial": {"kind": "region", "x": [0.0, 0.5], "v": [-1.0, 1.0]},
                        "write_snapshots": False})
    path = _write(tmp_path, cfg)
    out = tmp_path / "f"
    assert main(["solve", "--config", path, "--out", str(out)]) == 0
    assert main(["fit", "--config", path, "--out", str(out)]) == 0
    fit = json.loads((out / "decay.json").read_text())
    assert 0.5 < fit["fitted_lambda"] < 1.5
    assert main(["fit", "--config", path, "--out", str(tmp_path / "empty")]) == 1


def test_mc_rerun_identical(tmp_path):
    cfg = _base(mc={"n": 2000, "t_end": 1.0, "snapshot_times": [0.5, 1.0]})
    path = _write(tmp_path, cfg)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["mc", "--config", path, "--out", str(a), "--seed", "5"]) == 0
    assert main(["mc", "--config", path, "--out", str(b), "--seed", "5"]) == 0
    for name in ("particles_0000.csv", "particles_0001.csv", "mc_summary.json", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    summary = json.loads((a / "mc_summary.json").read_text())
    snap = summary["snapshots"][1]
    assert abs(snap["zero_jump_fraction"] - math.exp(-1)) < 4 * snap["zero_jump_stderr"]
    assert snap["survival_quadrature"] == pytest.approx(math.exp(-1))


def test_seed_override_and_bad_flags(tmp_path):
    path = _write(tmp_path, _base(mc={"n": 100}))
    assert main(["mc", "--config", path, "--out", str(tmp_path / "m"), "--seed", "-1"]) == 1
    assert main(["mc", "--config", path, "--out", str(tmp_path / "m"), "--workers", "0"]) == 1
    assert main(["nosuch", "--config", path]) == 1
