import json
import subprocess
import sys

import numpy as np
import pytest

from cadlabel.cli import build_policy, main, parse_length
from cadlabel.cloud import LabeledCloud, read_cloud, voxel_subsample, write_cloud
from cadlabel.errors import ValidationError
from cadlabel.labeler import gold_policy, pseudo_label
from cadlabel.meshio import ClassManifest, load_scene
from cadlabel.taxonomy import GOLD, SILVER, UNLABELED


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def room(tmp_path_factory):
    d = tmp_path_factory.mktemp("room")
    spec = {"extents": [4, 3, 2.5], "density": 150, "seed": 3,
            "objects": [{"class": "Door", "min": [-0.2, 1, 0], "max": [0.05, 1.9, 2.1]},
                        {"class": "Furniture", "min": [1, 1, 0], "max": [2, 1.6, 0.8]},
                        {"class": "Damper", "min": [3, 2, 2.4], "max": [3.2, 2.2, 2.5]}]}
    (d / "spec.json").write_text(json.dumps(spec))
    assert main(["gen", str(d / "gen"), "--spec", str(d / "spec.json")]) == 0
    return d / "gen"


def test_parse_length():
    assert parse_length("4cm") == pytest.approx(0.04)
    assert parse_length("0.1") == 0.1
    assert parse_length("0.15m") == 0.15
    for bad in ("-1", "abc", "nan"):
        with pytest.raises(ValidationError):
            parse_length(bad)


def test_build_policy():
    p = build_policy(GOLD, ["Door=15cm", "default=0.05", "wall=0.02"])
    assert p.tau(GOLD.index("Door")) == pytest.approx(0.15)
    assert p.tau(GOLD.index("Wall")) == 0.02
    assert p.tau(GOLD.index("Lamp")) == 0.05
    assert p.tau(GOLD.index("Window")) == 0.10
    with pytest.raises(ValidationError):
        build_policy(GOLD, ["Sofa=1"])
    with pytest.raises(ValidationError):
        build_policy(SILVER, ["Door"])


def test_gen_layout(room):
    assert (room / "cloud.pcl").exists() and (room / "room.json").exists()
    assert len(list((room / "scene").glob("*.obj"))) == 9
    m = ClassManifest.load(room / "scene" / "manifest.txt")
    assert m.match("006_door") == "Door"


def test_label_eval_pipeline(room, tmp_path, capsys):
    out = tmp_path / "labeled.pcl"
    code, text, _ = run(capsys, "label", room / "cloud.pcl", room / "scene", "-o", out)
    assert code == 0
    assert text.startswith("object 0 class='Slab' seconds=")
    assert "points=" in text.splitlines()[-1]
    code, text, _ = run(capsys, "eval", out, "--json")
    assert code == 0
    res = json.loads(text)
    assert res["oa"] >= 0.999
    for row in res["row_normalized"]:
        assert sum(row) == pytest.approx(100.0, abs=0.05) or sum(row) == 0
    code, text, _ = run(capsys, "eval", out)
    assert code == 0 and "mIoU" in text and "Clutter" in text


def test_label_is_thin_adapter(room, tmp_path, capsys):
    out = tmp_path / "l.pcl"
    assert run(capsys, "label", room / "cloud.pcl", room / "scene", "-o", out,
               "--tau", "Wall=3cm", "--json")[0] == 0
    cloud = read_cloud(room / "cloud.pcl")
    scene = load_scene(room / "scene", ClassManifest.load(room / "scene" / "manifest.txt"), GOLD)
    api, _ = pseudo_label(cloud, scene, gold_policy().updated({GOLD.index("Wall"): 0.03}))
    assert read_cloud(out).pseudo_label.tobytes() == api.pseudo_label.tobytes()


def test_threads_identical(room, tmp_path, capsys):
    outs = []
    for t in (1, 2):
        o = tmp_path / f"t{t}.pcl"
        assert run(capsys, "label", room / "cloud.pcl", room / "scene", "-o", o,
                   "--threads", t)[0] == 0
        outs.append(o.read_bytes())
    assert outs[0] == outs[1]


def test_simplify_and_stats(room, tmp_path, capsys):
    lab = tmp_path / "lab.pcl"
    run(capsys, "label", room / "cloud.pcl", room / "scene", "-o", lab)
    sil = tmp_path / "silver.pcl"
    code, text, _ = run(capsys, "simplify", lab, "-o", sil, "--json")
    assert code == 0 and json.loads(text)["columns"] == ["real", "pseudo"]
    c = read_cloud(sil)
    assert c.taxonomy is SILVER and c.real_label.max() <= 11
    code, text, _ = run(capsys, "stats", sil, "--json")
    st = json.loads(text)
    assert code == 0 and st["taxonomy"] == "Silver" and st["points"] == len(c)
    assert sum(st["real"].values()) == len(c)
    code, text, _ = run(capsys, "stats", sil)
    assert "Exit sign" in text
    # only the real column is present on a fresh cloud
    code, text, _ = run(capsys, "simplify", room / "cloud.pcl", "-o", tmp_path / "r.pcl",
                        "--json")
    assert json.loads(text)["columns"] == ["real"]


def test_subsample_idempotent(room, tmp_path, capsys):
    a, b = tmp_path / "a.pcl", tmp_path / "b.pcl"
    assert run(capsys, "subsample", room / "cloud.pcl", "-o", a, "--cell", "5cm")[0] == 0
    assert run(capsys, "subsample", a, "-o", b, "--cell", "0.05")[0] == 0
    assert a.read_bytes()[32:] == b.read_bytes()[32:]
    ref = voxel_subsample(read_cloud(room / "cloud.pcl"), 0.05)
    assert read_cloud(a).identical(ref)
    assert run(capsys, "subsample", room / "cloud.pcl", "-o", a, "--cell", "0")[0] == 2


def test_convert_round_trip(room, tmp_path, capsys):
    txt, back = tmp_path / "c.txt", tmp_path / "c.pcl"
    assert run(capsys, "convert", room / "cloud.pcl", txt)[0] == 0
    assert txt.read_text().startswith("# cadlabel-ascii")
    assert run(capsys, "convert", txt, back)[0] == 0
    assert back.read_bytes() == (room / "cloud.pcl").read_bytes()
    code, text, _ = run(capsys, "stats", txt, "--json")
    assert code == 0


def test_eval_length_mismatch(room, tmp_path, capsys):
    c = read_cloud(room / "cloud.pcl")
    short = tmp_path / "short.pcl"
    write_cloud(c.take(np.arange(10)), short)
    code, _, err = run(capsys, "eval", room / "cloud.pcl", "--pred", short)
    assert code == 2
    assert err.startswith("error: LengthMismatch:") and err.count("\n") == 1


def test_error_exit_codes(room, tmp_path, capsys):
    code, _, err = run(capsys, "stats", tmp_path / "missing.pcl")
    assert code == 1 and err.startswith("error: FileNotFoundError")
    bad = tmp_path / "bad.pcl"
    bad.write_bytes(b"NOTACLOUD" * 10)
    code, _, err = run(capsys, "stats", bad)
    assert code == 2 and "BadMagic" in err
    code, _, err = run(capsys, "label", room / "cloud.pcl", room / "scene", "-o",
                       tmp_path / "x.pcl", "--tau", "Sofa=1cm")
    assert code == 2
    man = tmp_path / "m.txt"
    man.write_text("*wall* = Wall\n")
    code, _, err = run(capsys, "label", room / "cloud.pcl", room / "scene", "-o",
                       tmp_path / "x.pcl", "--manifest", man)
    assert code == 2 and "UnmatchedObject" in err
    unl = tmp_path / "unl.pcl"
    c = read_cloud(room / "cloud.pcl")
    write_cloud(LabeledCloud(c.positions, c.colors, c.intensity,
                             np.full(len(c), UNLABELED), c.pseudo_label, GOLD), unl)
    code, _, err = run(capsys, "eval", unl)
    assert code == 2 and "EmptyMatrix" in err


def test_console_entry_point(room, tmp_path):
    r = subprocess.run([sys.executable, "-m", "cadlabel", "stats", str(room / "cloud.pcl"),
                        "--json"], capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["points"] > 0
    r = subprocess.run([sys.executable, "-m", "cadlabel", "eval"], capture_output=True, text=True)
    assert r.returncode == 2
