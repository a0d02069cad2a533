import csv
import hashlib
import io
import json
import math
import os
import subprocess
import sys

import pytest

from contraction_lab.errors import LabError
from contraction_lab.experiments import RUNNERS
from contraction_lab.harness import (ENV_OUT, SCHEMAS, UsageError, csv_bytes, format_cell,
                                     main, make_config, read_config_file, run)

SMALL_REMARK3 = {"n_list": "100", "m_list": "0.0,0.5", "m": "17", "steps": "200"}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_dir(tmp_path, sub, raw, **kw):
    return run(make_config(sub, raw, out=str(tmp_path), **kw))


def test_every_subcommand_has_a_runner():
    assert set(SCHEMAS) == set(RUNNERS)


def test_rates_row(tmp_path):
    res = run_dir(tmp_path, "rates", {"alpha": "0.5", "beta": "0.5", "n": "10000"})
    rows = read_csv(os.path.join(res.directory, "results.csv"))
    assert len(rows) == 1
    assert float(rows[0]["rate"]) == pytest.approx(0.1, rel=1e-14)
    assert {"seed", "replicate", "K", "N"} <= set(rows[0])
    assert sorted(os.listdir(res.directory)) == ["manifest.json", "results.csv", "summary.json"]


def test_rerun_reproduces_checksums(tmp_path):
    raw = {"alpha": "1.0", "K": "30", "eps": "0.4,0.3", "N": "20000"}
    a = run_dir(tmp_path, "concentration", raw, seed=9)
    b = run_dir(tmp_path, "concentration", raw, seed=9)
    assert a.directory != b.directory
    assert a.manifest["checksums"] == b.manifest["checksums"]
    c = run_dir(tmp_path, "concentration", raw, seed=10)
    assert c.manifest["checksums"]["results.csv"] != a.manifest["checksums"]["results.csv"]


def test_checksums_match_files(tmp_path):
    res = run_dir(tmp_path, "rates", {"alpha": "1", "beta": "2", "n": "10,100"})
    for name, digest in res.manifest["checksums"].items():
        with open(os.path.join(res.directory, name), "rb") as fh:
            assert hashlib.sha256(fh.read()).hexdigest() == digest
    with open(os.path.join(res.directory, "manifest.json")) as fh:
        man = json.load(fh)
    assert man["config"]["params"]["n"] == [10, 100]
    assert man["code_version"] and man["started"] <= man["finished"]


def test_missing_key_is_a_usage_error():
    with pytest.raises(UsageError, match="'beta'"):
        make_config("rates", {"alpha": "1", "n": "10"})


def test_unknown_key_is_a_usage_error():
    with pytest.raises(UsageError, match="'gamma'"):
        make_config("rates", {"alpha": "1", "beta": "1", "n": "10", "gamma": "3"})
    with pytest.raises(UsageError, match="'bogus'"):
        make_config("bogus", {})
    assert issubclass(UsageError, LabError)


@pytest.mark.parametrize("raw,kw", [({"n": "1.5"}, {}), ({"n": "x"}, {}), ({}, {"seed": -1}),
                                    ({}, {"seed": 2 ** 64}), ({}, {"replicates": 0}),
                                    ({}, {"fmt": "xml"})])
def test_bad_values_are_usage_errors(raw, kw):
    base = {"alpha": "1", "beta": "1", "n": "10"}
    base.update(raw)
    with pytest.raises(UsageError):
        make_config("rates", base, **kw)


def test_numbers_accept_scientific_notation():
    cfg = make_config("concentration", {"N": "1e6", "eps": "0.5, 0.25"})
    assert cfg.params["N"] == 1_000_000 and cfg.params["eps"] == [0.5, 0.25]
    assert cfg.seed == 0 and cfg.replicates == 1


def test_empty_table_writes_header_only():
    assert csv_bytes(["seed", "replicate", "x"], []) == b"seed,replicate,x\n"


def test_cell_formatting_round_trips():
    for v in (0.1, 1 / 3, 1e-300, 123456789.123, -2.5e17):
        assert float(format_cell(v)) == v
    assert format_cell(math.nan) == "NaN"
    assert format_cell(True) == "true" and format_cell(7) == "7"


def test_nan_cells_are_written_and_flagged(tmp_path):
    res = run_dir(tmp_path, "remark3", SMALL_REMARK3, replicates=1)
    rows = read_csv(os.path.join(res.directory, "results.csv"))
    agg = [r for r in rows if r["replicate"] == "-1"]
    assert agg and all(r["acceptance"] == "NaN" for r in agg)
    flagged = res.manifest["nan_cells"]
    assert flagged and all(c == "acceptance" for _, c in flagged)
    assert {i for i, _ in flagged} == {i for i, r in enumerate(rows) if r["replicate"] == "-1"}


def test_json_output_agrees_with_csv(tmp_path):
    raw = {"alpha": "1.0", "K": "20", "eps": "0.5,0.3", "method": "cf-inversion"}
    a = run_dir(tmp_path, "concentration", raw)
    b = run_dir(tmp_path, "concentration", raw, fmt="json")
    rows = read_csv(os.path.join(a.directory, "results.csv"))
    with open(os.path.join(b.directory, "results.json")) as fh:
        doc = json.load(fh)
    assert doc["columns"] == list(rows[0])
    for r, values in zip(rows, doc["rows"]):
        for col, v in zip(doc["columns"], values):
            if isinstance(v, float):
                assert float(r[col]) == v
            else:
                assert r[col] == format_cell(v)


def test_parallel_workers_match_serial(tmp_path):
    raw = {"n_list": "1000", "K_max": "40"}
    one = run_dir(tmp_path, "ring", raw, replicates=4, workers=1)
    two = run_dir(tmp_path, "ring", raw, replicates=4, workers=2)
    assert one.manifest["checksums"]["results.csv"] == two.manifest["checksums"]["results.csv"]


def test_config_file_and_command_line_override(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("# rate table\nalpha = 0.5\nbeta = 0.5  # matched\nn = 100, 10000\nseed = 5\n")
    raw = read_config_file(str(path))
    assert raw["n"] == "100, 10000"
    out = tmp_path / "out"
    assert main(["rates", "--config", str(path), "--beta", "1.0", "--out", str(out)]) == 0
    (d,) = os.listdir(out)
    with open(out / d / "manifest.json") as fh:
        man = json.load(fh)
    assert man["config"]["seed"] == 5 and man["config"]["params"]["beta"] == 1.0
    bad = tmp_path / "bad.txt"
    bad.write_text("alpha 0.5\n")
    with pytest.raises(UsageError, match="bad.txt:1"):
        read_config_file(str(bad))


def test_output_directory_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_OUT, str(tmp_path / "env"))
    cfg = make_config("rates", {"alpha": "1", "beta": "1", "n": "10"})
    assert cfg.out == str(tmp_path / "env")
    assert make_config("rates", {"alpha": "1", "beta": "1", "n": "10"}, out="x").out == "x"


def test_exit_codes(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["rates", "--alpha", "1", "--beta", "1", "--n", "10", "--out", out]) == 0
    assert main(["rates", "--alpha", "1", "--n", "10", "--out", out]) == 2
    assert "'beta'" in capsys.readouterr().err
    assert main(["nonsense"]) == 2
    assert main(["rates", "--alpha", "1", "--beta", "1", "--n", "10", "--out", "/dev/null/x"]) == 4
    code = main(["shift-bound", "--epsilon", "0.01", "--N", "1000", "--m", "16", "--out", out])
    assert code == 3
    failed = [d for d in os.listdir(out) if d.startswith("shift-bound-failed")]
    assert len(failed) == 1
    with open(os.path.join(out, failed[0], "diagnostic.json")) as fh:
        diag = json.load(fh)
    assert diag["error"] == "UnderflowError" and diag["diagnostics"]["N"] == 1000


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "contraction_lab", "rates", "--alpha", "1",
                           "--beta", "1", "--n", "8", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert os.path.isdir(proc.stdout.strip())


def test_summary_file(tmp_path):
    res = run_dir(tmp_path, "frac-check", {"m": "401"})
    with open(os.path.join(res.directory, "summary.json")) as fh:
        doc = json.load(fh)
    assert doc["subcommand"] == "frac-check"
    assert doc["summary"]["max_identity_rel_err"] < 1e-2
