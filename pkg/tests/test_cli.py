import json

import numpy as np

import infcanvas.tiling as tiling
from conftest import small_net
from infcanvas.cli import main
from infcanvas.netspec import save_spec
from infcanvas.pngio import read_png
from infcanvas.weights import init_random, save


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_generate_g0(tmp_path, capsys):
    args = ("generate", "--net", "g0", "--random-init", "--seed", 7, "--latent", "6x6")
    code, out, _ = run(capsys, *args, "-o", tmp_path / "a.png")
    assert code == 0
    assert read_png(tmp_path / "a.png").shape == (64, 64, 3)
    assert "[0,64)x[0,64)" in out
    assert "stationarity period: 32x32" in out
    assert run(capsys, *args, "-o", tmp_path / "b.png")[0] == 0
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_generate_underflow_exits_3(tmp_path, capsys):
    code, _, err = run(capsys, "generate", "--random-init", "--latent", "2x2", "-o", tmp_path / "a.png")
    assert code == 3
    assert "5x5" in err
    assert not (tmp_path / "a.png").exists()


def test_input_errors_exit_2(tmp_path, capsys):
    assert run(capsys, "generate", "--net", "nonesuch", "--random-init", "-o", tmp_path / "a.png")[0] == 2
    assert run(capsys, "generate", "--net", "g0", "-o", tmp_path / "a.png")[0] == 2
    assert run(capsys, "generate", "--latent", "six", "-o", tmp_path / "a.png")[0] == 2
    (tmp_path / "bad.igw").write_bytes(b"IGW1" + b"\0" * 20)
    assert run(capsys, "generate", "--weights", tmp_path / "bad.igw", "-o", tmp_path / "a.png")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "analyze", "redundancy", "--budgets", "16", "--blocks-range", "3")[0] == 0


def test_generate_from_spec_and_weight_files(tmp_path, capsys):
    net = small_net()
    save_spec(net, tmp_path / "net.json")
    save(init_random(net, 4), tmp_path / "w.igw")
    code, _, _ = run(
        capsys, "generate", "--net", tmp_path / "net.json", "--weights", tmp_path / "w.igw", "--latent", "4x5",
        "-o", tmp_path / "a.png", "--report", tmp_path / "r.json",
    )
    assert code == 0
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["network"] == "small"
    h, w, _ = read_png(tmp_path / "a.png").shape
    assert doc["image_rect"] == f"[0,{h})x[0,{w})"


def test_tile_order_gives_identical_bytes(tmp_path, capsys):
    common = ("tile", "--random-init", "--seed", 7, "--width", 200, "--height", 150, "--budget", 64)
    assert run(capsys, *common, "--order", "sorted", "-o", tmp_path / "a.png")[0] == 0
    assert run(capsys, *common, "--order", "shuffled", "--threads", 3, "--verify-seams", "-o", tmp_path / "b.png")[0] == 0
    code, out, _ = run(capsys, *common, "--order", "reverse", "--in-memory", "-o", tmp_path / "c.png")
    assert code == 0
    rep = json.loads(out)
    assert rep["report"]["pixels_discarded"] == 0
    assert rep["tiles"] == 12
    a = (tmp_path / "a.png").read_bytes()
    assert a == (tmp_path / "b.png").read_bytes() == (tmp_path / "c.png").read_bytes()


def test_tile_crop_mode(tmp_path, capsys):
    code, out, _ = run(
        capsys, "tile", "--mode", "inconsistent-crop", "--blocks", 3, "--budget", 64,
        "--width", 192, "--height", 192, "-o", tmp_path / "a.png",
    )
    assert code == 0
    rep = json.loads(out)["report"]
    assert rep["interior_discard_fraction"] == 0.4375
    assert rep["seam_max_abs_diff"] == 0.0


def test_tile_budget_too_small_exits_3(tmp_path, capsys):
    assert run(capsys, "tile", "--random-init", "--width", 64, "--height", 64, "--budget", 16, "-o", tmp_path / "a.png")[0] == 3


def test_seam_failure_exits_4(tmp_path, capsys, monkeypatch):
    orig = tiling._SeamChecker._compare

    def broken(self, strip, stitched):
        orig(self, strip, stitched)
        self.worst = 0.5

    monkeypatch.setattr(tiling._SeamChecker, "_compare", broken)
    code, _, err = run(
        capsys, "tile", "--net", "nearest", "--width", 20, "--height", 20, "--budget", 8, "--verify-seams",
        "-o", tmp_path / "a.png",
    )
    assert code == 4
    assert "seam mismatch" in err


def test_verify_redundancy(capsys):
    code, out, _ = run(capsys, "verify", "redundancy", "--budget", 4096, "--blocks", 9)
    assert code == 0
    assert out.strip() == "0.4375"
    assert run(capsys, "verify", "redundancy", "--budget", 16, "--blocks", 3)[0] == 2


def test_verify_consistency(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "consistency", "--trials", 3, "--seed", 1, "--report", tmp_path / "r.json")
    assert code == 0 and out.startswith("PASS")
    assert json.loads((tmp_path / "r.json").read_text())["passed"]
    code, out, _ = run(capsys, "verify", "consistency", "--trials", 3, "--seed", 1, "--zero-pad", "block3.conv")
    assert code == 1
    assert "block3.conv" in out and "--seed 1" in out
    assert run(capsys, "verify", "consistency", "--trials", 1, "--zero-pad", "block3.relu")[0] == 2


def test_verify_geometry_and_stationarity(capsys):
    code, out, _ = run(capsys, "verify", "geometry", "--trials", 20)
    assert code == 0 and out.startswith("PASS")
    code, out, _ = run(capsys, "verify", "stationarity", "--net", "bilinear", "--probe", "3x3", "--seed", 2)
    assert code == 0 and out.startswith("PASS period 2x2")
    code, out, _ = run(capsys, "verify", "stationarity", "--net", "bilinear", "--probe", "3x3", "--period", "1x1")
    assert code == 1 and out.startswith("FAIL")


def test_analyze_taint_mask(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", "taint", "--blocks", 2, "--latent", "4x4", "-o", tmp_path / "m.png", "--overlap", 1)
    assert code == 0
    assert "tainted border width 3" in out and "gap 2" in out
    mask = read_png(tmp_path / "m.png")[..., 0] > 0
    assert mask.shape == (16, 16)
    expected = np.ones((16, 16), dtype=bool)
    expected[3:13, 3:13] = False
    assert np.array_equal(mask, expected)


def test_analyze_redundancy_table(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", "redundancy", "--budgets", 4096, "--blocks-range", "6..10",
                       "--tiles", 4, "--report", tmp_path / "r.json")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 5
    assert "K=9 N=8 fraction=0.4375000000 (7/16)" in lines[3]
    doc = json.loads((tmp_path / "r.json").read_text())
    assert [r["K"] for r in doc["rows"]] == [6, 7, 8, 9, 10]
    assert len(doc["finite"]) == 5


def test_analyze_stationarity(capsys):
    code, out, _ = run(capsys, "analyze", "stationarity", "--probe", "2x2", "--samples", 10000)
    assert code == 0
    doc = json.loads(out[out.index("{"):])
    assert doc["verdict"] == "consistent_with_period"
    assert doc["period_tested"] == [2, 2]
