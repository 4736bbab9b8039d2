import json
import subprocess
import sys

import pytest

from proxyrecon.cli import main

FAST_INI = """
[run]
seed = 3
window = 1940-1998
millennial = 1800-1998
reps = 20
models = InterceptOnly,PC2
cv_reps = 2
grid_size = 15

[bayes]
n_pcs = 3
iters = 300
burnin = 50
thin = 1
chains = 2

[synthetic]
enabled = true
first_year = 1800
last_year = 2006
n_proxies = 6
n_local = 5
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ini = root / "fast.ini"
    ini.write_text(FAST_INI)
    out = root / "out"
    codes = {}
    for cmd in ("ingest", "cv", "null-bench", "zoo-backcast", "bayes-fit", "bayes-backcast",
                "bayes-validate", "events", "report"):
        extra = ["--null", "white"] if cmd in ("cv", "bayes-validate") else []
        codes[cmd] = main([cmd, "--config", str(ini), "--out", str(out), *extra])
    return root, ini, out, codes


def test_every_subcommand_succeeds(pipeline):
    _, _, out, codes = pipeline
    assert all(c == 0 for c in codes.values()), codes
    for cmd in codes:
        assert (out / cmd / "manifest.txt").is_file()
    text = (out / "cv" / "manifest.txt").read_text()
    assert "seed: 3" in text and "wall_seconds:" in text and "version.numpy" in text


def test_artifacts_content(pipeline):
    _, _, out, _ = pipeline
    s = json.loads((out / "cv" / "summary.json").read_text())
    assert [m["model"] for m in s["models"]] == ["InterceptOnly", "PC2"]
    assert s["models"][0]["blocks"] == 30
    assert (out / "cv" / "envelope.csv").is_file()
    ev = json.loads((out / "events" / "events.json").read_text())
    assert all(0 <= v <= 1 for v in ev["probabilities"].values())
    rep = (out / "report" / "report.md").read_text()
    assert "## bayes-validate" in rep
    for f in ("cv/rmse_boxplot.svg", "bayes-backcast/backcast.svg", "ingest/temperature.svg"):
        assert (out / f).stat().st_size > 0


def test_rerun_is_bit_identical(pipeline, tmp_path):
    _, ini, out, _ = pipeline
    assert main(["cv", "--config", str(ini), "--out", str(tmp_path), "--null", "white"]) == 0
    for f in ("blocks.csv", "summary.json", "envelope.csv", "rmse_boxplot.svg"):
        assert (tmp_path / "cv" / f).read_bytes() == (out / "cv" / f).read_bytes()


def test_report_names_missing_artifacts(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 2
    assert "cv/summary.json" in capsys.readouterr().err


def test_config_errors_exit_1(tmp_path, capsys):
    assert main(["cv", "--out", str(tmp_path)]) == 1
    assert main(["bogus"]) == 1
    assert main(["cv", "--synthetic", "--models", "NoSuchModel", "--out", str(tmp_path)]) == 1
    assert main(["cv", "--synthetic", "--window", "2000-1900", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nnot_a_key = 1\n")
    assert main(["cv", "--config", str(bad), "--out", str(tmp_path)]) == 1
    bad.write_text("[bayes]\niters = lots\n")
    assert main(["bayes-fit", "--synthetic", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_data_error_exit_2(tmp_path):
    t = tmp_path / "t.csv"
    t.write_text("year,t\n1850,1\n1850,2\n")
    p = tmp_path / "p.csv"
    p.write_text("year,a\n1850,1\n1851,2\n")
    ini = tmp_path / "d.ini"
    ini.write_text(f"[data]\ntemperature = {t}\nproxies = {p}\n")
    assert main(["ingest", "--config", str(ini), "--out", str(tmp_path)]) == 2


def test_file_inputs_round_trip(tmp_path):
    from proxyrecon.dataset import gen_synthetic_world, write_table
    y, X = gen_synthetic_world(80, 5, 0.5, seed=1, start_year=1920)
    write_table(y, tmp_path / "t.csv", "long")
    write_table(X, tmp_path / "p.csv", "long")
    ini = tmp_path / "f.ini"
    ini.write_text(f"[data]\ntemperature = {tmp_path / 't.csv'}\n"
                   f"proxies = {tmp_path / 'p.csv'}\nformat = long\n"
                   "[run]\nwindow = 1940-1999\nmillennial = 1920-1999\n")
    assert main(["ingest", "--config", str(ini), "--out", str(tmp_path / "o")]) == 0
    s = json.loads((tmp_path / "o" / "ingest" / "summary.json").read_text())
    assert s["instrumental_set"]["columns"] == 5


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "proxyrecon.cli", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "bayes-validate" in r.stdout
