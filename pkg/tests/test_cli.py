import csv
import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import pytest

from startile import cli
from startile.errors import NumericError

SVG_NS = "{http://www.w3.org/2000/svg}"


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# startile.")
    return list(csv.DictReader(lines[1:]))


def paths(svg_text):
    root = ET.fromstring(svg_text)
    return root.findall(".//%spath" % SVG_NS) + root.findall(".//path")


@pytest.fixture
def chair3(tmp_path, capsys):
    out = tmp_path / "chair3.json"
    code, _, err = run(["gen", "--system", "chair", "--level", "3", "--out", str(out)], capsys)
    assert code == 0 and "64 tiles" in err
    return out


def test_gen_chair_64_tiles(chair3):
    d = json.loads(chair3.read_text())
    assert len(d["tiles"]) == 64 and d["system"] == "chair"


def test_stats_penrose(tmp_path, capsys):
    out = tmp_path / "stats.csv"
    assert run(["stats", "--system", "penrose", "--levels", "12", "--out", str(out)], capsys)[0] == 0
    rows = read_csv(out)
    assert len(rows) == 12
    eps = float(rows[0]["epsilon_fit"])
    assert eps == pytest.approx(0.145898, rel=0.1)
    assert float(rows[-1]["lambda2_over_lambda"]) == pytest.approx(0.145898, rel=1e-5)


def test_render_empty_file(tmp_path, capsys):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    code, _, err = run(["render", "--in", str(empty)], capsys)
    assert code == 1
    msg = json.loads(err.strip().splitlines()[-1])
    assert msg["error"] == "validation" and "empty patch" in msg["message"]
    empty.write_text(json.dumps({"tiles": []}))
    assert run(["render", "--in", str(empty)], capsys)[0] == 1


def test_render_svg_one_path_per_tile(chair3, tmp_path, capsys):
    out = tmp_path / "chair.svg"
    assert run(["render", "--in", str(chair3), "--out", str(out)], capsys)[0] == 0
    assert len(paths(out.read_text())) == 64


def test_render_with_overlay(tmp_path, capsys):
    patch = tmp_path / "p.json"
    run(["gen", "--system", "penrose", "--level", "3", "--out", str(patch)], capsys)
    out = tmp_path / "p.svg"
    assert run(["render", "--in", str(patch), "--out", str(out), "--overlay-levels", "1", "--overlay-lines", "4"],
               capsys)[0] == 0
    ntiles = len(json.loads(patch.read_text())["tiles"])
    root = ET.fromstring(out.read_text())
    assert len(paths(out.read_text())) == ntiles
    assert len(root.findall(".//%spolyline" % SVG_NS) + root.findall(".//polyline")) > 0


def test_numeric_failure_exit_2(monkeypatch, capsys):
    def boom(*a, **k):
        raise NumericError("flow left the annulus")

    monkeypatch.setattr(cli, "canonical_corrector", boom)
    code, _, err = run(["correct", "--system", "penrose", "--supertile", "0:1", "--samples", "100"], capsys)
    assert code == 2 and json.loads(err.strip())["error"] == "numeric"


def test_validation_errors(capsys):
    assert run(["gen", "--system", "nope", "--level", "1"], capsys)[0] == 1
    assert run(["correct", "--supertile", "zz"], capsys)[0] == 1
    assert run(["gen", "--system", "penrose", "--level", "20", "--max-tiles", "100"], capsys)[0] == 1


def test_correct_report(tmp_path, capsys):
    rep = tmp_path / "c.csv"
    svg = tmp_path / "c.svg"
    code, _, _ = run(["correct", "--system", "penrose", "--supertile", "0:1", "--samples", "2000",
                      "--report", str(rep), "--svg", str(svg)], capsys)
    assert code == 0
    rows = {r["stage"]: r for r in read_csv(rep)}
    assert set(rows) == {"psi1", "psi2", "psi3", "boundary", "total"}
    assert float(rows["total"]["median"]) <= 2e-2
    ET.fromstring(svg.read_text())


def test_starmap_json(capsys):
    code, out, _ = run(["starmap", "--system", "penrose", "--type", "1", "--samples", "2000"], capsys)
    d = json.loads(out)
    assert code == 0 and d["jacobian"]["median"] <= 1e-3 and d["round_trip_max"] <= 1e-9


def test_csv_determinism(tmp_path, capsys):
    outs = []
    for i in range(2):
        out = tmp_path / ("r%d.csv" % i)
        code, _, _ = run(["realize", "--system", "penrose", "--levels", "1", "--working-level", "3",
                          "--samples", "300", "--pairs", "300", "--report", str(out)], capsys)
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    rows = read_csv(tmp_path / "r0.csv")
    assert list(rows[0]) == ["level", "E", "product", "residual_median", "residual_p90", "bilip_lower",
                             "rho_residual_median", "excluded_fraction"]


def test_net_and_tauy_round_trip(chair3, tmp_path, capsys):
    net = tmp_path / "net.json"
    assert run(["net", "--in", str(chair3), "--out", str(net)], capsys)[0] == 0
    d = json.loads(net.read_text())
    assert len(d["points"]) == 64 and d["r_sep"] > 0
    tau = tmp_path / "tau.json"
    svg = tmp_path / "tau.svg"
    code, _, err = run(["tauy", "--net", str(net), "--out", str(tau), "--svg", str(svg)], capsys)
    assert code == 0
    t = json.loads(tau.read_text())
    assert t["side"] <= d["r_sep"] / 4
    assert len(set(t["owner"])) == 64
    assert len(paths(svg.read_text())) == len(t["squares"])


def test_tauy_empty_net(tmp_path, capsys):
    net = tmp_path / "net.json"
    net.write_text(json.dumps({"points": []}))
    code, _, err = run(["tauy", "--net", str(net)], capsys)
    assert code == 1 and "empty net" in err


def test_threads_env(monkeypatch):
    monkeypatch.setenv("TILE_THREADS", "2")
    args = cli.build_parser().parse_args(["stats"])
    assert args.threads is None
    from startile.config import thread_cap

    assert thread_cap() == 2


def test_console_script(tmp_path):
    out = subprocess.run([sys.executable, "-m", "startile.cli", "gen", "--system", "squares", "--level", "2"],
                         capture_output=True, text=True, check=True)
    assert len(json.loads(out.stdout)["tiles"]) == 16
