import csv
import json
import os
import subprocess
import sys

import pytest

from pshsym.cli import main
from pshsym.model_measure import ModelGeometry
from pshsym.profile import truncated_log_profile, write_profile_csv
from pshsym.toric import dump_corpus, random_corpus

SMALL = ["--samples", "50000"]


@pytest.fixture
def corpus_file(tmp_path):
    p = tmp_path / "corpus.json"
    p.write_text(dump_corpus(random_corpus(2, ModelGeometry(1, 1.0), seed=0)))
    return str(p)


@pytest.fixture
def profile_file(tmp_path):
    p = tmp_path / "trunc.csv"
    with open(p, "w") as fh:
        write_profile_csv(truncated_log_profile(1.0), fh)
    return str(p)


def _report(path):
    with open(path) as fh:
        rep = json.load(fh)
    assert rep["schema"] == 1
    return rep


def test_volume(tmp_path, capsys):
    assert main(["volume", *SMALL, "--l", "1,2", "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path / "volume.json")
    assert [c["closed_form"] for c in rep["cases"]] == [1.0, 0.5]
    assert "closed form" in capsys.readouterr().out


def test_volume_invalid_l(capsys):
    assert main(["volume", "--l", "0"]) == 2
    assert "CONFIG_ERROR" in capsys.readouterr().err


def test_symmetrize_corpus_item(tmp_path, corpus_file):
    assert main(["symmetrize", corpus_file, *SMALL, "--l", "1", "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path / "symmetrize.json")
    assert rep["cases"][0]["convexity"]["passed"]
    with open(tmp_path / "sigma_l1.csv") as fh:
        assert next(csv.reader(fh)) == ["t", "sigma", "stderr"]
    assert (tmp_path / "profile_l1.csv").exists()


def test_symmetrize_radial_fixed_point(tmp_path, profile_file):
    assert main(["symmetrize", profile_file, *SMALL, "--l", "1", "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path / "symmetrize.json")
    assert abs(rep["cases"][0]["E_hat"] - 1.0) < 0.05


def test_symmetrize_corrupt_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{broken")
    assert main(["symmetrize", str(bad)]) == 2
    assert "PARSE_ERROR" in capsys.readouterr().err


def test_symmetrize_missing_file(capsys):
    assert main(["symmetrize", "/nonexistent.json"]) == 2


def test_energy_both_oracles(tmp_path, corpus_file):
    assert main(["energy", corpus_file, "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path / "energy.json")
    assert rep["relative_gap"] < 0.05


def test_energy_radial_profile(profile_file, capsys):
    assert main(["energy", profile_file]) == 0
    assert "1" in capsys.readouterr().out


def test_mt_closed_form(tmp_path):
    assert main(["mt", "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path / "mt.json")
    assert len(rep["inequalities"]) == 12 and all(r["passed"] for r in rep["inequalities"])
    with open(tmp_path / "mt.csv") as fh:
        assert next(csv.reader(fh)) == ["name", "l", "n", "lhs", "rhs", "margin", "pass"]


def test_mt_moser_override_can_fail(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("moser_C = 0.01\n")
    assert main(["mt", "--config", str(cfg)]) == 1


def test_geodesic_csv(tmp_path, profile_file):
    assert main(["geodesic", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "geodesic.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["s", "E", "affine", "residual"] and len(rows) == 12
    assert all(abs(float(r[3])) < 1e-9 for r in rows[1:])
    assert main(["geodesic", profile_file]) == 2


def test_plotdata(tmp_path):
    assert main(["plotdata", *SMALL, "--select", "sigma,geodesic,mt", "--out", str(tmp_path)]) == 0
    names = set(os.listdir(tmp_path))
    assert {"geodesic.csv", "mt_margins.csv", "sigma_0_l1.csv"} <= names


def test_plotdata_empty_selection():
    with pytest.warns(RuntimeWarning, match="NO_OUTPUT"):
        assert main(["plotdata", "--select", ""]) == 0


def test_plotdata_unknown_selection():
    assert main(["plotdata", "--select", "pictures", "--out", "/tmp"]) == 2


def test_suite_rejects_zero_corpus(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("corpus_size = 0\n")
    assert main(["suite", "--config", str(cfg)]) == 2
    assert "CONFIG_ERROR" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "pshsym", "volume", "--samples", "20000", "--l", "1"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "monte carlo" in out.stdout
