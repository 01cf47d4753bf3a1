import numpy as np
import pytest

from waveguide_stability import harness
from waveguide_stability.harness import ConfigError, load_config, main, validate
from waveguide_stability.schrodinger import NumericalFailure

TINY = """
[geometry]
half_length = 8.0
n_xprime = 17
n_axial = 64
n_time = 16

[carleman]
samples = 2
sweep_points = 3

[perturbation]
amplitudes = 1e-4 1e-3 1e-2 1e-1
direct_amplitude = 0.01

[inverse]
lemma_points = 4
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY)
    return p


def _manifest(path):
    return dict(line.split(" = ", 1) for line in path.read_text().splitlines())


@pytest.mark.parametrize("body, key", [
    ("[geometry]\nn_xprime = many\n", "geometry.n_xprime"),
    ("[geometry]\nwidth = 3\n", "geometry.width"),
    ("[nonsense]\nx = 1\n", "nonsense"),
    ("[carleman]\nx0 = 0.5\n", "carleman.x0"),
    ("[inverse]\ndelta = 2.0\n", "inverse.delta"),
    ("[perturbation]\namplitudes = 0 1e-3\n", "perturbation.amplitudes"),
    ("[carleman]\nlam = 100\n", "carleman.x0"),
    ("[geometry]\nhalf_length = 2.0\n", "geometry.half_length"),
])
def test_config_errors_exit_2_naming_key(tmp_path, capsys, body, key):
    p = tmp_path / "bad.ini"
    p.write_text(body)
    assert main(["factory", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert key in capsys.readouterr().err


def test_missing_config_file_is_config_error(tmp_path):
    assert main(["factory", "--config", str(tmp_path / "absent.ini"), "--out", str(tmp_path)]) == 2


def test_defaults_are_target_grid():
    cfg = load_config(None)
    validate(cfg)
    g = cfg.grid()
    assert g.shape == (64, 512) and g.n_time == 256
    assert g.cross_section.gamma_star == (1.0,)


def test_validate_rejects_short_time_grid():
    cfg = load_config(None)
    cfg.geometry.n_time = 8
    with pytest.raises(ConfigError):
        validate(cfg)


@pytest.mark.parametrize("sub", ["factory", "direct", "elliptic", "carleman", "lemma-inv", "stability"])
def test_subcommands_deterministic(tmp_path, tiny, sub):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main([sub, "--config", str(tiny), "--out", str(out), "--seed", "7"]) == 0
        outs.append(out)
    files = sorted(p.name for p in outs[0].glob("*.csv"))
    assert files and files == sorted(p.name for p in outs[1].glob("*.csv"))
    for name in files:
        a = (outs[0] / name).read_bytes()
        assert a == (outs[1] / name).read_bytes(), name
        assert a.splitlines()[0]  # header row
    m = _manifest(outs[0] / "manifest.txt")
    assert m["status"] == "ok" and m["seed"] == "7" and m["subcommand"] == sub


def test_stability_manifest_fields(tmp_path, tiny):
    assert main(["stability", "--config", str(tiny), "--out", str(tmp_path), "--threads", "2"]) == 0
    m = _manifest(tmp_path / "manifest.txt")
    assert float(m["stability.theta"]) == pytest.approx(1 / 3)
    assert float(m["stability.mu_delta"]) == pytest.approx(np.exp(-1.5))
    assert (tmp_path / "config.ini").exists()


def test_numeric_failure_exit_3_and_manifest(tmp_path, tiny, monkeypatch):
    def boom(st):
        raise NumericalFailure("diverged", contraction=0.9)

    monkeypatch.setattr(harness, "run_direct", boom)
    assert main(["direct", "--config", str(tiny), "--out", str(tmp_path)]) == 3
    m = _manifest(tmp_path / "manifest.txt")
    assert m["status"] == "failed" and m["failure_stage"] == "direct"
    assert "contraction = 0.9" in (tmp_path / "diagnostics.txt").read_text()


def test_interior_x0_reports_assumption_failure(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[carleman]\nx0 = 0.25\n")
    assert main(["carleman", "--config", str(p), "--out", str(tmp_path)]) != 0
    assert "closed cross-section" in capsys.readouterr().err
