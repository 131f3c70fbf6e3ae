import hashlib
import subprocess
import sys

import numpy as np
import pytest

from cavitypairs import cli
from cavitypairs.errors import FitConvergenceError
from cavitypairs.tagio import TagStream, header_bytes, read_tags, write_tags


def report(text):
    out = {}
    for line in text.splitlines():
        key, _, value = line.partition("=")
        out[key] = value
    return out


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_cavity_report(capsys):
    code, out, err = run(["cavity"], capsys)
    assert code == 0
    r = report(out)
    assert float(r["fsr_filled_hz"]) == pytest.approx(2.509e12, rel=2e-4)
    assert float(r["fsr_empty_hz"]) == pytest.approx(3.904e12, rel=2e-4)
    assert float(r["waist_m"]) == pytest.approx(3.5e-6, abs=0.1e-6)
    assert float(r["index_from_fsr"]) == pytest.approx(1.556, abs=2e-3)
    assert "mode_3_minus_hz" in r and "mode_4_minus_hz" not in r
    assert "finesse_convention = round_trip" in err


def test_cavity_empty_config(tmp_path, capsys):
    path = tmp_path / "empty.cfg"
    path.write_text("index_n = 1.0\n")
    code, out, _ = run(["cavity", path], capsys)
    assert code == 0
    assert float(report(out)["fsr_filled_hz"]) == pytest.approx(3.904e12, rel=2e-4)


def test_cavity_bad_geometry(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("# L > R\nlength_L = 300e-6\n")
    code, _, err = run(["cavity", path], capsys)
    assert code == 2
    assert "length_L" in err


def test_unknown_key_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("index_n = 1.5\nlenght_L = 1e-5\n")
    code, _, err = run(["cavity", path], capsys)
    assert code == 2
    assert "lenght_L" in err and "line 2" in err


def test_set_override(capsys):
    code, out, _ = run(["cavity", "--set", "index_n=1.0", "--set", "mode_orders=0"], capsys)
    assert code == 0
    r = report(out)
    assert float(r["fsr_filled_hz"]) == pytest.approx(3.904e12, rel=2e-4)
    assert "mode_1_plus_hz" not in r
    assert run(["cavity", "--set", "index_n"], capsys)[0] == 2


def test_lineshape_zero_shift(tmp_path, capsys):
    code, out, _ = run(["lineshape", "--set", "beta_prime=0", "--out", tmp_path], capsys)
    assert code == 0
    rows = np.genfromtxt(tmp_path / "lineshift.csv", delimiter=",", names=True)
    assert np.all(np.abs(rows["lineshift_linewidths"]) < 0.05)
    assert (tmp_path / "scan_05.csv").exists()
    assert (tmp_path / "resolved.cfg").exists()


def test_lineshape_hysteresis_and_linearity(tmp_path, capsys):
    up, down = tmp_path / "up", tmp_path / "down"
    code, out, _ = run(["lineshape", "--direction", "up", "--out", up], capsys)
    assert code == 0
    assert float(report(out)["r_squared"]) > 0.99
    assert run(["lineshape", "--direction", "down", "--out", down], capsys)[0] == 0
    a = (up / "scan_05.csv").read_text().splitlines()[1:]
    b = (down / "scan_05.csv").read_text().splitlines()[1:]
    pa = [float(r.split(",")[1]) for r in a]
    pb = [float(r.split(",")[1]) for r in b][::-1]
    assert max(abs(x - y) for x, y in zip(pa, pb)) > 1e-6


def test_lineshape_powers_flag(tmp_path, capsys):
    code, out, _ = run(["lineshape", "--powers", "2e-5,4e-5", "--out", tmp_path], capsys)
    assert code == 0 and report(out)["n_powers"] == "2"
    assert run(["lineshape", "--powers", "a,b", "--out", tmp_path], capsys)[0] == 2


def test_simulate_deterministic(tmp_path, capsys):
    args = ["simulate", "--set", "duration=5"]
    assert run(args + ["--out", tmp_path / "a"], capsys)[0] == 0
    assert run(args + ["--out", tmp_path / "b"], capsys)[0] == 0
    for name in ("plus.ttag", "minus.ttag", "truth.json", "resolved.cfg"):
        assert sha(tmp_path / "a" / name) == sha(tmp_path / "b" / name)
    # the resolved echo alone reproduces the run
    assert run(["simulate", tmp_path / "a" / "resolved.cfg", "--out", tmp_path / "c"], capsys)[0] == 0
    assert sha(tmp_path / "a" / "plus.ttag") == sha(tmp_path / "c" / "plus.ttag")


def test_simulate_zero_power(tmp_path, capsys):
    assert run(["simulate", "--set", "p_cav=0", "--out", tmp_path, "--csv"], capsys)[0] == 0
    assert (tmp_path / "plus.ttag").stat().st_size == 16
    assert (tmp_path / "minus.ttag").stat().st_size == 16
    assert (tmp_path / "plus.csv").read_text() == "channel,timestamp_ps\n"


@pytest.mark.slow
def test_full_run_end_to_end(tmp_path, capsys):
    code, out, _ = run(["simulate", "--out", tmp_path], capsys)
    assert code == 0
    # expected singles per channel: (gamma P + Gamma P^2) T
    mean = (1.43e4 * 0.58 + 1.12 * 0.58 ** 2) * 1200
    for name in ("plus.ttag", "minus.ttag"):
        n = ((tmp_path / name).stat().st_size - 16) / 8
        assert abs(n - mean) <= 3 * mean ** 0.5
    code, out, _ = run(["correlate", tmp_path / "plus.ttag", tmp_path / "minus.ttag", "--fit",
                        "--out", tmp_path / "h.csv", "--report", tmp_path / "r.txt"], capsys)
    assert code == 0
    r = report((tmp_path / "r.txt").read_text())
    assert float(r["car"]) == pytest.approx(3.3, abs=0.5)
    assert float(r["center_ps"]) == pytest.approx(-12000, abs=300)
    for key in ("car_sigma", "fwhm_ps"):
        assert key in r
    assert (tmp_path / "h.csv").read_text().startswith("bin_center_ps,counts\n")


def _small_pair(tmp_path, rng):
    t = np.sort(rng.integers(0, 10 ** 9, 3000)) // 40 * 40
    u = np.sort(np.concatenate([t[::2] + 2000, rng.integers(0, 10 ** 9, 2000) // 40 * 40]))
    write_tags(TagStream(0, t), tmp_path / "a.ttag")
    write_tags(TagStream(1, u), tmp_path / "b.ttag")


def test_bruteforce_flag_matches(tmp_path, capsys, rng):
    _small_pair(tmp_path, rng)
    common = [tmp_path / "a.ttag", tmp_path / "b.ttag", "--bin", "1e-9", "--window", "20e-9"]
    assert run(["correlate", *common, "--out", tmp_path / "s.csv"], capsys)[0] == 0
    assert run(["correlate", *common, "--brute-force", "--out", tmp_path / "f.csv"], capsys)[0] == 0
    assert (tmp_path / "s.csv").read_text() == (tmp_path / "f.csv").read_text()


def test_unsorted_file_exit_code(tmp_path, capsys, rng):
    _small_pair(tmp_path, rng)
    bad = tmp_path / "bad.ttag"
    bad.write_bytes(header_bytes(0, 40) + np.array([0, 80, 40], "<u8").tobytes())
    code, _, err = run(["correlate", bad, tmp_path / "b.ttag"], capsys)
    assert code == 3
    assert "offset 32" in err


def test_fit_failure_exit_code(tmp_path, capsys, rng, monkeypatch):
    _small_pair(tmp_path, rng)

    def fail(*args, **kwargs):
        raise FitConvergenceError("no convergence", 1.0)

    monkeypatch.setattr(cli, "fit_lorentzian", fail)
    code, _, err = run(["correlate", tmp_path / "a.ttag", tmp_path / "b.ttag", "--fit",
                        "--out", tmp_path / "h.csv"], capsys)
    assert code == 4 and "no convergence" in err


def test_reproduce_fig1b(tmp_path, capsys):
    code, out, _ = run(["reproduce", "fig1b", "--out", tmp_path], capsys)
    assert code == 0
    r = report(out)
    assert r["bistable"] == "true"
    assert float(r["jump_detuning_up"]) > float(r["jump_detuning_down"])
    rows = (tmp_path / "fig1b_scan.csv").read_text().splitlines()
    assert rows[0] == "detuning,p_out,branch,direction"
    assert {row.rsplit(",", 1)[1] for row in rows[1:]} == {"up", "down"}


def test_reproduce_fig1c_svg(tmp_path, capsys):
    pytest.importorskip("matplotlib")
    code, out, _ = run(["reproduce", "fig1c", "--out", tmp_path, "--svg"], capsys)
    assert code == 0
    assert float(report(out)["r_squared"]) > 0.99
    assert (tmp_path / "fig1c_lineshift.svg").read_text().lstrip().startswith("<?xml")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cavitypairs", "cavity", "--set", "index_n=1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "fsr_filled_hz=3903" in proc.stdout
