import csv
import io
import json
import subprocess
import sys

import pytest

from online_alloc.cli import CSV_HEADER, THREADS_ENV, main, parse_gen_spec, resolve_threads


def _bench(capsys, *extra):
    argv = ["bench", "--gen", "d=2,c=12", "--alg", "esa,dla,krtv5", "--eps", "0.25", "--perms", "2", "--seed", "3", "--threads", "1"]
    assert main(argv + list(extra)) == 0
    return capsys.readouterr().out


def test_gen_writes_instance(tmp_path, capsys):
    out = tmp_path / "wc.json"
    assert main(["gen", "--d", "3", "--c", "300", "--out", str(out)]) == 0
    assert "n=915" in capsys.readouterr().out
    data = json.loads(out.read_text())
    assert len(data["items"]) == 915


def test_gen_small_count(tmp_path, capsys):
    assert main(["gen", "--d", "1", "--c", "4", "--out", str(tmp_path / "x.json")]) == 0
    assert "n=13 " in capsys.readouterr().out


def test_gen_invalid_d_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--d", "0", "--c", "4", "--out", str(tmp_path / "x.json")])
    assert exc.value.code == 2


def test_bench_csv_schema(capsys):
    text = _bench(capsys)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == tuple(CSV_HEADER)
    assert [r[1] for r in rows[1:]] == ["esa", "dla", "krtv5"]
    for r in rows[1:]:
        assert 0 <= float(r[3]) <= 1 + 1e-6
        assert r[6] == "2"
    assert rows[3][2] == ""  # krtv has no eps


def test_bench_byte_identical_without_timing(capsys):
    a = _bench(capsys, "--no-timing")
    b = _bench(capsys, "--no-timing")
    assert a == b


def test_bench_markdown(capsys):
    text = _bench(capsys, "--format", "md")
    lines = text.strip().splitlines()
    assert lines[0].startswith("| algorithm") and "d=2,c=12 CR" in lines[0]
    assert set(lines[1]) <= {"|", "-"}
    assert lines[2].startswith("| ESA (eps=0.25)")


def test_bench_from_file(tmp_path, capsys):
    path = tmp_path / "i.json"
    main(["gen", "--d", "2", "--c", "12", "--out", str(path)])
    capsys.readouterr()
    assert main(["bench", "--instance", str(path), "--alg", "ola", "--eps", "0.25", "--perms", "1", "--threads", "1"]) == 0
    assert "ola" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["bench", "--alg", "esa", "--eps", "0.1"],
        ["bench", "--gen", "d=2,c=12", "--alg", "esa", "--eps", "1.5"],
        ["bench", "--gen", "d=2,c=12", "--alg", "esa", "--eps", "0.1", "--perms", "0"],
        ["bench", "--gen", "d=2,c=12", "--alg", "simplex", "--eps", "0.1"],
        ["bench", "--gen", "d=2,c=12", "--alg", "esa"],
        ["bench", "--gen", "c=12", "--alg", "krtv"],
        ["bench", "--instance", "/nonexistent/file.json", "--alg", "krtv"],
    ],
)
def test_bench_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code != 0


def test_parse_gen_spec():
    spec = parse_gen_spec("d=3,c=60", 5)
    assert (spec.d, spec.c, spec.seed) == (3, 60.0, 5)


def test_threads_env(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(1) == 3
    monkeypatch.delenv(THREADS_ENV)
    assert resolve_threads(2) == 2
    assert resolve_threads(None) >= 1


def test_diag_martingale(capsys):
    assert main(["diag", "martingale", "--n", "5"]) == 0
    assert capsys.readouterr().out.startswith("exact: pass")


def test_diag_phi_first_value(tmp_path, capsys):
    out = tmp_path / "phi.csv"
    assert main(["diag", "phi", "--gen", "d=2,c=40", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["t", "value"]
    assert float(rows[1][1]) == pytest.approx(8.0)


def test_diag_events_flags_vacuous(capsys):
    assert main(["diag", "events", "--gen", "d=2,c=12", "--perms", "5"]) == 0
    text = capsys.readouterr().out
    assert "union_B" in text and "vacuous" in text


def test_console_script_entry():
    proc = subprocess.run([sys.executable, "-m", "online_alloc.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "bench" in proc.stdout
