from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from kcc import RenderOptions, ValidationError, render_explanation
from kcc.classifier import Prediction
from kcc.matching import Match, MatchSet
from kcc.keypoints import Keypoint
from kcc.synth import write_png

GOLDEN_DIR = Path(__file__).parent / "goldens"


def kp(seg_id, row, col, image_id, class_label=None):
    return Keypoint(
        segment_id=seg_id,
        representation=np.ones(2, np.float32),
        pixel_count=4,
        centroid_work=(row / 2, col / 2),
        centroid_input=(row, col),
        image_id=image_id,
        class_label=class_label,
    )


def fixed_prediction_one_match():
    matches = [Match(1, "proto-a", 2, class_label=0, similarity=0.98)]
    return Prediction(
        scores={0: 1.0},
        predicted_class=0,
        match_set=MatchSet(matches=matches, query_image_id="query", j_used=1),
        complexity=1,
        abstained=False,
        query_keypoints=[kp(1, 20.0, 30.0, "query"), kp(2, 50.0, 60.0, "query")],
        prototype_keypoints={"proto-a": [kp(2, 40.0, 40.0, "proto-a", 0)]},
        image_dims={"query": (80, 80), "proto-a": (80, 120)},
        query_image_id="query",
    )


def fixed_prediction_three_prototypes():
    matches = [
        Match(1, "proto-a", 1, class_label=1, similarity=0.99),
        Match(2, "proto-a", 2, class_label=1, similarity=0.97),
        Match(3, "proto-b", 1, class_label=1, similarity=0.95),
        Match(4, "proto-b", 3, class_label=1, similarity=0.91),
        Match(5, "proto-c", 2, class_label=1, similarity=0.90),
        Match(6, "proto-d", 1, class_label=0, similarity=0.88),
    ]
    q_kps = [kp(i, 10.0 * i, 8.0 * i, "query") for i in range(1, 8)]
    return Prediction(
        scores={0: 1 / 6, 1: 5 / 6},
        predicted_class=1,
        match_set=MatchSet(matches=matches, query_image_id="query", j_used=4),
        complexity=3,
        abstained=False,
        query_keypoints=q_kps,
        prototype_keypoints={
            "proto-a": [kp(1, 15.0, 20.0, "proto-a", 1), kp(2, 40.0, 55.0, "proto-a", 1)],
            "proto-b": [kp(1, 22.0, 30.0, "proto-b", 1), kp(3, 61.0, 44.0, "proto-b", 1)],
            "proto-c": [kp(2, 33.0, 33.0, "proto-c", 1)],
            "proto-d": [kp(1, 12.0, 70.0, "proto-d", 0)],
        },
        image_dims={
            "query": (80, 80),
            "proto-a": (80, 80),
            "proto-b": (100, 80),
            "proto-c": (80, 100),
            "proto-d": (80, 80),
        },
        query_image_id="query",
    )


def fixed_prediction_abstained():
    return Prediction(
        scores={},
        predicted_class=None,
        match_set=MatchSet(matches=[], query_image_id="query"),
        complexity=0,
        abstained=True,
        diagnostic="empty foreground: no keypoints to match",
        image_dims={"query": (80, 80)},
        query_image_id="query",
    )


ALL_IMAGE_IDS = ["query", "proto-a", "proto-b", "proto-c", "proto-d"]


@pytest.fixture
def image_dir(tmp_path):
    rng = np.random.default_rng(0)
    for name in ALL_IMAGE_IDS:
        write_png(tmp_path / f"{name}.png", rng.integers(0, 255, (8, 8, 3)).astype(np.uint8))
    return tmp_path


def image_paths():
    return {name: f"{name}.png" for name in ALL_IMAGE_IDS}


def render_case(case, image_root, labels=None, **opt_kwargs):
    opts = RenderOptions(image_root=str(image_root), **opt_kwargs)
    return render_explanation(case, image_paths(), labels=labels, options=opts)


GOLDEN_CASES = {
    "one_match.svg": lambda root: render_case(fixed_prediction_one_match(), root),
    "three_prototypes_labeled.svg": lambda root: render_case(
        fixed_prediction_three_prototypes(),
        root,
        labels={
            ("query", 1): "crown",
            ("query", 3): "wing bar",
            ("proto-a", 1): "crown",
            ("proto-b", 1): "crown",
        },
    ),
    "abstained.svg": lambda root: render_case(fixed_prediction_abstained(), root),
}


@pytest.mark.parametrize("name", sorted(GOLDEN_CASES))
def test_golden_files(name, image_dir):
    svg = GOLDEN_CASES[name](image_dir)
    golden_path = GOLDEN_DIR / name
    if os.environ.get("KCC_UPDATE_GOLDENS") == "1":
        GOLDEN_DIR.mkdir(exist_ok=True)
        golden_path.write_text(svg, encoding="utf-8")
    assert golden_path.exists(), f"golden missing; run with KCC_UPDATE_GOLDENS=1"
    assert svg == golden_path.read_text(encoding="utf-8")


def test_rendering_is_deterministic(image_dir):
    a = render_case(fixed_prediction_three_prototypes(), image_dir)
    b = render_case(fixed_prediction_three_prototypes(), image_dir)
    assert a == b


def test_one_match_cardinalities(image_dir):
    svg = render_case(fixed_prediction_one_match(), image_dir)
    assert svg.count('<line class="match"') == 1
    assert svg.count('<circle class="kp"') == 2
    assert svg.count('<g class="panel"') == 2  # query + 1 prototype


def test_three_prototype_layout(image_dir):
    pred = fixed_prediction_three_prototypes()
    labels = {
        ("query", 1): "crown",
        ("query", 3): "wing bar",
        ("query", 7): "unmatched segment",  # never drawn: segment 7 has no match
        ("proto-a", 1): "crown",
        ("proto-b", 1): "crown",
    }
    svg = render_case(pred, image_dir, labels=labels)
    drawn = [m for m in pred.match_set.matches if m.class_label == 1]
    assert svg.count('<line class="match"') == len(drawn)
    assert svg.count('<circle class="kp"') == 2 * len(drawn)
    # panel count = explanation complexity + 1 when drawing the predicted class
    assert svg.count('<g class="panel"') == pred.complexity + 1
    # prototype panels appear in descending match-count order
    pa = svg.index('data-image="proto-a"')
    pb = svg.index('data-image="proto-b"')
    pc = svg.index('data-image="proto-c"')
    assert pa < pb < pc
    assert "proto-d" not in svg  # other-class prototype suppressed by default
    assert svg.count('<text class="kp-label"') == 4  # labels on matched endpoints only
    assert "wing bar" in svg
    assert "unmatched segment" not in svg


def test_all_classes_mode_includes_other_class(image_dir):
    pred = fixed_prediction_three_prototypes()
    svg = render_case(pred, image_dir, only_predicted_class=False)
    assert 'data-image="proto-d"' in svg
    assert svg.count('<line class="match"') == len(pred.match_set.matches)


def test_abstained_banner(image_dir):
    svg = render_case(fixed_prediction_abstained(), image_dir)
    assert "abstained" in svg
    assert svg.count('<line class="match"') == 0
    assert svg.count('<g class="panel"') == 1


def test_unmatched_keypoints_dimmed(image_dir):
    svg = render_case(fixed_prediction_one_match(), image_dir)
    assert svg.count('<circle class="kp-dim"') == 1  # query kp 2 is unmatched
    svg_hidden = render_case(fixed_prediction_one_match(), image_dir, show_unmatched=False)
    assert svg_hidden.count('<circle class="kp-dim"') == 0


def test_class_names_suppressed_by_default(image_dir):
    svg = render_case(fixed_prediction_one_match(), image_dir)
    assert "class 0" in svg
    named = render_case(
        fixed_prediction_one_match(), image_dir,
        show_class_names=True, class_names=["sparrow"],
    )
    assert "sparrow" in named


def test_missing_image_file_rejected(tmp_path):
    with pytest.raises(ValidationError, match="missing image file"):
        render_case(fixed_prediction_one_match(), tmp_path)


def test_embedded_images_are_data_uris(image_dir):
    svg = render_case(fixed_prediction_one_match(), image_dir, embed_images=True)
    assert 'href="data:image/png;base64,' in svg
