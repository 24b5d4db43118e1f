from __future__ import annotations

import hashlib
import json

import numpy as np
import pytest

from kcc.cli import main
from kcc.container import read_container, write_container


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    train = tmp / "train.kcc1"
    test = tmp / "test.kcc1"
    images = tmp / "images"
    config = tmp / "config.json"
    config.write_text(json.dumps({
        "n_segments": 8,
        "per_class": 10,
        "j_prototypes": 30,
        "encoder_id": "synthetic-vit-d16",
    }))
    assert main(["synth", "--classes", "3", "--images-per-class", "12",
                 "--noise", "0.3", "--seed", "0", "--split", "train",
                 "--images-dir", str(images), "--output", str(train)]) == 0
    assert main(["synth", "--classes", "3", "--images-per-class", "4",
                 "--noise", "0.3", "--seed", "0", "--split", "test",
                 "--images-dir", str(images), "--output", str(test)]) == 0
    gallery = tmp / "gallery.kccg"
    assert main(["build-gallery", "--train", str(train), "--config", str(config),
                 "--output", str(gallery)]) == 0
    return tmp, train, test, images, config, gallery


def test_synth_reruns_are_hash_identical(workspace, tmp_path):
    tmp, train, *_ = workspace
    again = tmp_path / "again.kcc1"
    assert main(["synth", "--classes", "3", "--images-per-class", "12",
                 "--noise", "0.3", "--seed", "0", "--split", "train",
                 "--images-dir", str(tmp_path / "img2"),
                 "--output", str(again)]) == 0
    assert hashlib.sha256(again.read_bytes()).hexdigest() == hashlib.sha256(
        train.read_bytes()
    ).hexdigest()


def test_build_gallery_rerun_identical(workspace, tmp_path):
    tmp, train, test, images, config, gallery = workspace
    again = tmp_path / "again.kccg"
    assert main(["build-gallery", "--train", str(train), "--config", str(config),
                 "--output", str(again)]) == 0
    assert again.read_bytes() == gallery.read_bytes()


def test_build_gallery_cardinality(workspace):
    from kcc import load_gallery

    *_, gallery = workspace
    g = load_gallery(gallery)
    assert len(g.records) == 30
    assert g.per_class == 10


def test_bad_config_reports_line_number(workspace, tmp_path, capsys):
    tmp, train, *_ = workspace
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "n_segments": 8,\n  broken\n}\n')
    rc = main(["build-gallery", "--train", str(train), "--config", str(bad),
               "--output", str(tmp_path / "x.kccg")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "line 3" in err


def test_classify_json_scores_sum_to_one(workspace, tmp_path):
    tmp, train, test, images, config, gallery = workspace
    out = tmp_path / "pred.json"
    rc = main(["classify", "--container", str(test), "--image-id", "test-c1-000",
               "--gallery", str(gallery), "--json", "--output", str(out)])
    assert rc == 0
    record = json.loads(out.read_text())
    assert record["abstained"] is False
    assert sum(record["scores"].values()) == pytest.approx(1.0, abs=1e-9)
    assert record["predicted_class"] == 1


def test_classify_self_prototype(workspace, tmp_path):
    tmp, train, test, images, config, gallery = workspace
    out = tmp_path / "pred.json"
    rc = main(["classify", "--container", str(train), "--image-id", "train-c2-000",
               "--gallery", str(gallery), "--json", "--output", str(out)])
    assert rc == 0
    assert json.loads(out.read_text())["predicted_class"] == 2


def test_classify_abstention_exit_code(workspace, tmp_path):
    from kcc import ForegroundMask

    tmp, train, test, images, config, gallery = workspace
    grids, masks, manifest = read_container(test)
    masks[0] = ForegroundMask(masks[0].image_id, np.zeros_like(masks[0].values))
    degraded = tmp_path / "degraded.kcc1"
    write_container(grids, masks, degraded, class_names=manifest.class_names,
                    image_classes=manifest.image_classes, extra=manifest.extra)
    out = tmp_path / "pred.json"
    rc = main(["classify", "--container", str(degraded),
               "--image-id", masks[0].image_id,
               "--gallery", str(gallery), "--json", "--output", str(out)])
    assert rc == 4
    record = json.loads(out.read_text())
    assert record["abstained"] is True


def test_classify_unknown_image_exit_2(workspace, capsys):
    tmp, train, test, images, config, gallery = workspace
    rc = main(["classify", "--container", str(test), "--image-id", "nope",
               "--gallery", str(gallery)])
    assert rc == 2


def test_missing_container_exit_3(workspace):
    *_, gallery = workspace
    rc = main(["classify", "--container", "/nonexistent.kcc1", "--image-id", "x",
               "--gallery", str(gallery)])
    assert rc == 3


def test_explain_writes_svg(workspace, tmp_path):
    tmp, train, test, images, config, gallery = workspace
    out = tmp_path / "explain.svg"
    rc = main(["explain", "--container", str(test), "--image-id", "test-c0-001",
               "--gallery", str(gallery), "--image-root", str(images),
               "--output", str(out)])
    assert rc == 0
    svg = out.read_text()
    assert svg.startswith("<?xml")
    assert svg.count('<line class="match"') >= 1
    n_lines = svg.count('<line class="match"')
    assert svg.count('<circle class="kp"') == 2 * n_lines


def test_explain_with_labels(workspace, tmp_path):
    tmp, train, test, images, config, gallery = workspace
    labels = tmp_path / "labels.json"
    labels.write_text(json.dumps({"test-c0-001": {"1": "upper part"}}))
    out = tmp_path / "explain.svg"
    rc = main(["explain", "--container", str(test), "--image-id", "test-c0-001",
               "--gallery", str(gallery), "--image-root", str(images),
               "--labels", str(labels), "--output", str(out)])
    assert rc == 0


def test_evaluate_json_report(workspace, tmp_path):
    tmp, train, test, images, config, gallery = workspace
    out = tmp_path / "report.json"
    rc = main(["evaluate", "--container", str(test), "--gallery", str(gallery),
               "--json", "--output", str(out)])
    assert rc == 0
    report = json.loads(out.read_text())
    assert report["n_queries"] == 12
    assert report["accuracy"] >= 0.9
    recount = sum(
        1 for q in report["per_query"]
        if not q["abstained"] and q["predicted_class"] == q["true_class"]
    )
    assert report["accuracy"] == pytest.approx(recount / report["n_queries"])


def test_sweep_rows(workspace, tmp_path):
    tmp, train, test, images, config, gallery = workspace
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"n_segments": [8], "per_class": [5, 10],
                                "j_prototypes": [30], "seeds": [0]}))
    out = tmp_path / "sweep.json"
    rc = main(["sweep", "--train", str(train), "--test", str(test),
               "--grid", str(grid), "--config", str(config),
               "--json", "--output", str(out)])
    assert rc == 0
    rows = json.loads(out.read_text())
    assert len(rows) == 2
    assert {r["config"]["per_class"] for r in rows} == {5, 10}


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
