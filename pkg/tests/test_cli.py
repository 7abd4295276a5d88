import json
import shutil
import subprocess

import pytest

from delaycert.cli import main


def write_system(tmp_path, raw):
    path = tmp_path / "sys.json"
    path.write_text(json.dumps(raw))
    return str(path)


def test_analyze_and_verify(tmp_path, capsys):
    cert = tmp_path / "cert.json"
    assert main(["analyze", "--example", "scalar", "--degree", "1", "--out", str(cert)]) == 0
    assert "certified" in capsys.readouterr().out
    assert main(["verify", "--certificate", str(cert)]) == 0
    assert "certificate valid" in capsys.readouterr().out


def test_analyze_from_file(tmp_path):
    path = write_system(tmp_path, {"n": 1, "delays": [1.0], "A": [[0.0], [-1.0]]})
    assert main(["analyze", "--system", path]) == 0
    assert main(["analyze", "--system", path, "--h", "2.0"]) == 1


def test_not_certified_exit_code(capsys):
    assert main(["analyze", "--example", "single", "--h", "2.0", "--degree", "2"]) == 1
    assert "not certified" in capsys.readouterr().out


def test_tampered_certificate_rejected(tmp_path):
    cert = tmp_path / "cert.json"
    main(["analyze", "--example", "scalar", "--out", str(cert)])
    data = json.loads(cert.read_text())
    data["gram"]["sigma_V"]["S0"][0][0][0] += 1e-3
    cert.write_text(json.dumps(data))
    assert main(["verify", "--certificate", str(cert)]) == 1


def test_invalid_system_is_error(tmp_path, capsys):
    path = write_system(tmp_path, {"n": 1, "delays": [1.0, 1.0], "A": [[0], [0], [0]]})
    assert main(["analyze", "--system", path]) == 2
    assert "strictly increasing" in capsys.readouterr().err
    assert main(["analyze", "--system", str(tmp_path / "missing.json")]) == 2
    assert main(["analyze"]) == 2


def test_bisect_writes_table(tmp_path, capsys):
    out = tmp_path / "table.csv"
    code = main(["bisect", "--example", "scalar", "--degree", "1", "--h-lo", "0.5", "--h-hi", "2.0",
                 "--resolution", "1e-2", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "degree,h_min,h_max,solves,non_interval"
    hmax = float(lines[1].split(",")[2])
    assert 1.3 < hmax < 1.5708


def test_simulate(tmp_path, capsys):
    csv = tmp_path / "x.csv"
    assert main(["simulate", "--example", "single", "--h", "1.0", "--out", str(csv)]) == 0
    assert "decay observed" in capsys.readouterr().out
    assert csv.read_text().startswith("t,x1,x2")
    assert main(["simulate", "--example", "single", "--h", "1.9"]) == 1
    assert main(["simulate", "--example", "single", "--history", "1.0"]) == 2


def test_export_sdp(tmp_path):
    out = tmp_path / "p.dat-s"
    assert main(["export-sdp", "--example", "scalar", "--out", str(out)]) == 0
    assert out.exists() and (tmp_path / "p.dat-s.json").exists()
    assert main(["export-sdp", "--example", "scalar"]) == 2


@pytest.mark.skipif(shutil.which("delaycert") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["delaycert", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "bisect" in r.stdout
