import math
from pathlib import Path

import numpy as np
import pytest

from mmstixel.cli import main
from mmstixel.formats import (read_report, read_world, write_labels, write_scan, write_world)
from mmstixel.model import ClassSet, Scan, Stixel, StixelColumn, StixelWorld, StructuralClass

SMALL_SCENE = "mmstixel-scene 1\ncolumns 8\n"


@pytest.fixture
def generated(tmp_path):
    (tmp_path / "scene.txt").write_text(SMALL_SCENE)
    out = tmp_path / "g"
    out.mkdir()
    assert main(["generate", str(out), "--scene", str(tmp_path / "scene.txt")]) == 0
    return out


def test_generate_writes_all_files(generated):
    assert sorted(p.name for p in generated.iterdir()) == ["labels.txt", "scan.txt", "scene.txt", "truth.txt"]


def test_clean_scene_round_trip_is_perfect(generated, tmp_path, capsys):
    world = tmp_path / "w.txt"
    assert main(["solve", str(generated / "scan.txt"), str(world)]) == 0
    assert "columns 8 rows 32" in capsys.readouterr().out
    assert read_world(world) == read_world(generated / "truth.txt")
    assert main(["eval", str(generated / "scan.txt"), str(world), str(generated / "labels.txt"),
                 "--out", str(tmp_path / "r.txt"), "--figure", str(tmp_path / "iou.png")]) == 0
    report = read_report(tmp_path / "r.txt")
    assert report.mean_iou == 1.0 and report.outlier_rate == 0.0
    assert report.extra["denominator"] == "valid_points"
    assert (tmp_path / "iou.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_solve_is_byte_identical_across_runs_and_workers(generated, tmp_path):
    scan = str(generated / "scan.txt")
    outs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "3")):
        assert main(["solve", scan, str(tmp_path / name), "--workers", workers]) == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_eval_outlier_fixture(tmp_path, capsys):
    classes = ClassSet.from_names(["road", "car", "sky"])
    ranges = np.array([[10.0, 10.2, 9.9, 10.0 / 1.07, 10.0, 10.0 / 0.93, 10.3, 9.8]])
    el = np.linspace(-0.05, 0.05, 8)[None]
    lidar = np.zeros((1, 8, 3))
    lidar[..., 1] = 1.0
    scan = Scan(ranges, el, np.zeros((1, 8)), lidar, np.full((1, 8, 3), np.nan), np.zeros(1),
                classes, classes, classes)
    world = StixelWorld((StixelColumn((Stixel(1, 8, 10.0, "car", StructuralClass.OBJECT),), 0),), 8, classes)
    write_scan(scan, tmp_path / "s.txt")
    write_world(world, tmp_path / "w.txt")
    write_labels(np.ones((1, 8), dtype=np.int64), classes, tmp_path / "l.txt")
    assert main(["eval", str(tmp_path / "s.txt"), str(tmp_path / "w.txt"), str(tmp_path / "l.txt"),
                 "--out", str(tmp_path / "r.txt")]) == 0
    report = read_report(tmp_path / "r.txt")
    assert report.outlier_rate == 0.25
    assert report.compression_rate == 1 - 1 / 8
    assert report.iou_per_class == {"car": 1.0}


def test_sweep_and_ablate_tables_and_figures(generated, tmp_path):
    data = ["--scan", str(generated / "scan.txt"), "--labels", str(generated / "labels.txt")]
    assert main(["sweep", *data, "--out", str(tmp_path / "s.csv"), "--figure", str(tmp_path / "s.png")]) == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0].split(",")[:2] == ["name", "value"]
    assert [float(l.split(",")[1]) for l in lines[1:]] == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    assert main(["ablate", *data, "--out", str(tmp_path / "a.csv"), "--figure", str(tmp_path / "a.png")]) == 0
    assert len((tmp_path / "a.csv").read_text().splitlines()) > 2
    for png in ("s.png", "a.png"):
        assert (tmp_path / png).stat().st_size > 0
    first = (tmp_path / "s.png").read_bytes()
    assert main(["sweep", *data, "--figure", str(tmp_path / "s.png")]) == 0
    assert (tmp_path / "s.png").read_bytes() == first


def test_render_and_defaults(generated, tmp_path, capsys):
    assert main(["render", str(generated / "truth.txt"), str(tmp_path / "t.ppm"),
                 "--scan", str(generated / "scan.txt"), "--upscale", "2"]) == 0
    assert (tmp_path / "t.ppm").read_bytes().startswith(b"P6\n16 64\n255\n")
    capsys.readouterr()
    assert main(["defaults", "params"]) == 0
    assert capsys.readouterr().out.startswith("mmstixel-params 1")


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve"])
    assert exc.value.code == 2


def test_missing_path_exits_3(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "nope.txt"), str(tmp_path / "w.txt")]) == 3
    assert "nope.txt" in capsys.readouterr().err


def test_parse_error_exits_4_with_position(tmp_path, capsys):
    text = (Path(__file__).parent / "data" / "one_column.scan").read_text()
    (tmp_path / "bad.txt").write_text(text.replace("height 3", "height x"))
    assert main(["solve", str(tmp_path / "bad.txt"), str(tmp_path / "w.txt")]) == 4
    assert "bad.txt:3:8: height is not an integer" in capsys.readouterr().err


@pytest.mark.parametrize("extra", [["--mc-cost", "-1"], ["--w-geo", "nan"], ["--workers", "0"]])
def test_invalid_values_exit_5_before_any_work(generated, tmp_path, extra):
    assert main(["solve", str(generated / "scan.txt"), str(tmp_path / "w.txt"), *extra]) == 5
    assert not (tmp_path / "w.txt").exists()


def test_eval_shape_mismatch_exits_5(generated, tmp_path):
    classes = ClassSet.from_names(["road", "sky"])
    world = StixelWorld((StixelColumn((Stixel(1, 32, math.inf, "sky", StructuralClass.SKY),), 0),), 32, classes)
    write_world(world, tmp_path / "w.txt")
    assert main(["eval", str(generated / "scan.txt"), str(tmp_path / "w.txt"), str(generated / "labels.txt")]) == 5
