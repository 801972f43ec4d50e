import json
import subprocess
import sys

import numpy as np
import pytest

from irshape import __version__
from irshape.bench import read_csv
from irshape.cli import parse_tau, run
from irshape.codec import ShapeVector
from irshape.io import decode_pbm, write_mask


@pytest.fixture
def disc_pbm(tmp_path):
    yy, xx = np.mgrid[:48, :48] + 0.5
    m = (xx - 24) ** 2 + (yy - 24) ** 2 <= 15 ** 2
    p = tmp_path / "disc.pbm"
    write_mask(p, m)
    return p, m


def summary(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_encode_decode(tmp_path, disc_pbm, capsys):
    p, m = disc_pbm
    out = tmp_path / "sv.json"
    assert run(["encode", "--mask", str(p), "--basis", "cheby", "--dim", "20", "-o", str(out)],
               {}) == 0
    sv = ShapeVector.from_json(out.read_text())
    assert len(sv.coeffs) == 20 and summary(capsys)["status"] == "ok"

    pbm = tmp_path / "back.pbm"
    assert run(["decode", "--in", str(out), "--raster", "48x48", "-o", str(pbm)], {}) == 0
    back = decode_pbm(pbm.read_bytes())
    assert (back & m).sum() / (back | m).sum() >= 0.95

    js = tmp_path / "back.json"
    assert run(["decode", "--in", str(out), "--points", "90", "-o", str(js)], {}) == 0
    assert len(json.loads(js.read_text())) == 90


def test_decode_jsonl_batch(tmp_path, disc_pbm):
    p, _ = disc_pbm
    out = tmp_path / "sv.json"
    run(["encode", "--mask", str(p), "-o", str(out)], {})
    d = json.loads(out.read_text())
    lines = [json.dumps({**d, "id": f"s{i}"}) for i in range(3)]
    (tmp_path / "many.jsonl").write_text("\n".join(lines) + "\n")
    assert run(["decode", "--in", str(tmp_path / "many.jsonl"), "-o", str(tmp_path / "dec")],
               {}) == 0
    assert sorted(x.name for x in (tmp_path / "dec").iterdir()) == [
        "s0.json", "s1.json", "s2.json"]


@pytest.mark.parametrize("argv", [
    ["encode", "--bogus"],
    ["frobnicate"],
    ["encode", "--mask", "x.pbm", "--dim", "0", "-o", "y"],
    ["sweep", "--dims", "7", "-o", "y"],
    ["encode", "--mask", "x.pbm", "--tau", "0.3", "-o", "y"],
])
def test_usage_errors(argv, capsys):
    assert run(argv, {}) == 2


def test_usage_errors_are_aggregated(capsys):
    assert run(["sensitivity", "--dim", "0", "--trials", "0"], {}) == 2
    err = capsys.readouterr().err
    assert "--dim" in err and "--trials" in err and "--output" in err


def test_data_error_missing_file(tmp_path, capsys):
    assert run(["encode", "--mask", str(tmp_path / "nope.pbm"), "-o", str(tmp_path / "o")],
               {}) == 1
    assert not (tmp_path / "o").exists()


def test_empty_mask_no_partial_output(tmp_path):
    p = tmp_path / "empty.pbm"
    write_mask(p, np.zeros((8, 8), bool))
    out = tmp_path / "sv.json"
    assert run(["encode", "--mask", str(p), "-o", str(out)], {}) == 1
    assert sorted(x.name for x in tmp_path.iterdir()) == ["empty.pbm"]


def test_sweep_rows(tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert run(["sweep", "--count", "10", "--dims", "8,20,40", "-o", str(out)], {}) == 0
    rows = read_csv(out.read_text())
    assert len(rows) == 6
    assert {r["signature"] for r in rows} == {"IR", "XY"}
    s = summary(capsys)
    assert s["rows"] == 6 and s["shapes"] == 10


def test_outputs_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["sensitivity", "--count", "5", "--dim", "4", "--alphas", "0,0.1", "--trials", "2"]
    assert run(argv + ["-o", str(a)], {}) == 0
    assert run(argv + ["--threads", "3", "-o", str(b)], {}) == 0
    assert a.read_bytes() == b.read_bytes()


def test_stats_with_histogram(tmp_path):
    out, hist = tmp_path / "s.csv", tmp_path / "h.csv"
    assert run(["stats", "--count", "6", "--dim", "6", "--bins", "3", "--hist", str(hist),
                "-o", str(out)], {}) == 0
    assert len(read_csv(out.read_text())) == 7
    assert len(read_csv(hist.read_text())) == 18


def test_config_env_and_cli_precedence(tmp_path, disc_pbm):
    p, _ = disc_pbm
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"mask = {p}\ndim = 8\nbasis = poly  # comment\n")
    out = tmp_path / "sv.json"
    assert run(["encode", "--config", str(cfg), "-o", str(out)], {}) == 0
    sv = ShapeVector.from_json(out.read_text())
    assert (sv.coeffs.basis.value, len(sv.coeffs)) == ("poly", 8)

    assert run(["encode", "--config", str(cfg), "-o", str(out)], {"IRSHAPE_DIM": "10"}) == 0
    assert len(ShapeVector.from_json(out.read_text()).coeffs) == 10

    assert run(["encode", "--config", str(cfg), "--dim", "12", "-o", str(out)],
               {"IRSHAPE_DIM": "10"}) == 0
    assert len(ShapeVector.from_json(out.read_text()).coeffs) == 12


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    assert run(["encode", "--config", str(cfg), "--mask", "x", "-o", "y"], {}) == 2


def test_ingest(tmp_path, capsys):
    ann = tmp_path / "ann.json"
    ann.write_text(json.dumps({"annotations": [
        {"id": "tri", "segmentation": [[5, 5, 40, 8, 20, 35]]},
        {"id": "line", "segmentation": [[0, 0, 4, 4, 8, 8]]}]}))
    out = tmp_path / "v.jsonl"
    assert run(["ingest", "--annotations", str(ann), "--dim", "8", "--masks-dir",
                str(tmp_path / "m"), "-o", str(out)], {}) == 0
    (line,) = out.read_text().splitlines()
    assert ShapeVector.from_json(line).id == "tri"
    assert summary(capsys)["skipped"] == 1
    assert (tmp_path / "m" / "tri.pbm").exists()


def test_parse_tau():
    assert parse_tau("1deg") == pytest.approx(np.pi / 180)
    assert parse_tau("pi/180") == pytest.approx(np.pi / 180)
    assert parse_tau("0.5") == 0.5
    with pytest.raises(ValueError):
        parse_tau("fast")


def test_version():
    r = subprocess.run([sys.executable, "-m", "irshape", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert r.stdout.startswith(f"irshape {__version__} (python ")
