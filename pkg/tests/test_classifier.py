from __future__ import annotations

import numpy as np
import pytest

from kcc import (
    ConfigDriftError,
    ForegroundMask,
    PipelineConfig,
    ValidationError,
    build_gallery,
    count_scores,
    explanation_complexity,
    predict,
    write_synth_container,
)
from kcc.matching import Match, MatchSet
from kcc.synth import SynthSpec, generate_dataset

from oracles import distinct_prototype_images, score_histogram

CFG = PipelineConfig(per_class=10, n_segments=8, j_prototypes=30,
                     encoder_id="synthetic-vit-d16")


def match(label, proto="p0", q_seg=1, p_seg=1, sim=0.9):
    return Match(
        query_segment_id=q_seg,
        prototype_image_id=proto,
        prototype_segment_id=p_seg,
        class_label=label,
        similarity=sim,
    )


def match_set(labels, protos=None):
    protos = protos or [f"p{i}" for i in range(len(labels))]
    matches = [
        match(lab, proto=pr, q_seg=i + 1, p_seg=i + 1)
        for i, (lab, pr) in enumerate(zip(labels, protos))
    ]
    return MatchSet(matches=matches, query_image_id="q")


class TestCountScores:
    def test_two_to_one_split(self):
        scores = count_scores(match_set([1, 1, 2]), classes=[1, 2])
        assert scores[1] == pytest.approx(2 / 3)
        assert scores[2] == pytest.approx(1 / 3)

    def test_single_match(self):
        scores = count_scores(match_set([1]), classes=[0, 1, 2])
        assert scores == {0: 0.0, 1: 1.0, 2: 0.0}

    def test_matches_histogram_oracle(self, rng):
        classes = list(range(5))
        for _ in range(50):
            labels = [int(c) for c in rng.integers(0, 5, size=40)]
            got = count_scores(match_set(labels), classes=classes)
            want = score_histogram(labels, classes)
            assert set(got) == set(want)
            for c in classes:
                assert got[c] == pytest.approx(want[c], abs=1e-12)
            assert sum(got.values()) == pytest.approx(1.0, abs=1e-9)

    def test_empty_match_set_signals_abstention(self):
        with pytest.raises(ValidationError):
            count_scores(MatchSet(matches=[], query_image_id="q"), classes=[0])

    def test_monotonicity(self):
        base = count_scores(match_set([0, 1, 1]), classes=[0, 1])
        more = count_scores(match_set([0, 1, 1, 0]), classes=[0, 1])
        assert more[0] > base[0]
        assert more[1] < base[1]

    def test_permutation_invariance(self, rng):
        labels = [int(c) for c in rng.integers(0, 3, size=20)]
        protos = [f"p{int(i)}" for i in rng.integers(0, 6, size=20)]
        pairs = list(zip(labels, protos))
        ms1 = match_set(labels, protos)
        perm = rng.permutation(len(pairs))
        ms2 = match_set([pairs[i][0] for i in perm], [pairs[i][1] for i in perm])
        s1 = count_scores(ms1, classes=[0, 1, 2])
        s2 = count_scores(ms2, classes=[0, 1, 2])
        assert s1 == s2
        pred1 = min(s1, key=lambda c: (-s1[c], c))
        assert explanation_complexity(ms1, pred1) == explanation_complexity(ms2, pred1)


class TestComplexity:
    def test_single_prototype_image(self):
        ms = match_set([1, 1, 1], protos=["p0", "p0", "p0"])
        assert explanation_complexity(ms, 1) == 1

    def test_counts_only_predicted_class(self):
        labels = [1, 1, 1, 2, 2, 2, 2, 2]
        protos = ["a", "b", "c", "d", "e", "f", "g", "h"]
        ms = match_set(labels, protos)
        assert explanation_complexity(ms, 1) == 3
        assert explanation_complexity(ms, 2) == 5

    def test_matches_distinct_count_oracle(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 30))
            labels = [int(c) for c in rng.integers(0, 4, size=n)]
            protos = [f"p{int(i)}" for i in rng.integers(0, 8, size=n)]
            ms = match_set(labels, protos)
            for c in range(4):
                assert explanation_complexity(ms, c) == distinct_prototype_images(
                    ms.matches, c
                )


@pytest.fixture(scope="module")
def setup(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("clf")
    train = tmp / "train.kcc1"
    spec = SynthSpec(n_classes=3, images_per_class=10, noise=0.0, seed=5)
    write_synth_container(spec, train)
    gallery = build_gallery(train, CFG)
    grids, masks, _, classes = generate_dataset(spec)
    return gallery, grids, masks, classes


class TestPredict:

    def test_self_prototype_query_wins_own_class(self, setup):
        gallery, grids, masks, classes = setup
        for grid, mask in zip(grids[:6], masks[:6]):
            pred = predict(grid, mask, gallery, CFG)
            assert not pred.abstained
            c = classes[grid.image_id]
            assert pred.predicted_class == c
            assert all(pred.scores[c] >= s for s in pred.scores.values())

    def test_scores_sum_to_one(self, setup):
        gallery, grids, masks, _ = setup
        pred = predict(grids[0], masks[0], gallery, CFG)
        assert sum(pred.scores.values()) == pytest.approx(1.0, abs=1e-9)
        assert set(pred.scores) == set(gallery.classes)

    def test_empty_foreground_abstains(self, setup):
        gallery, grids, _, _ = setup
        grid = grids[0]
        empty = ForegroundMask(
            image_id=grid.image_id,
            values=np.zeros((grid.orig_h, grid.orig_w), np.uint8),
        )
        pred = predict(grid, empty, gallery, CFG)
        assert pred.abstained
        assert pred.scores == {}
        assert pred.predicted_class is None
        assert "foreground" in pred.diagnostic

    def test_fingerprint_mismatch_rejected(self, setup):
        gallery, grids, masks, _ = setup
        with pytest.raises(ConfigDriftError):
            predict(grids[0], masks[0], gallery, CFG.replace(n_segments=12))

    def test_complexity_within_bounds(self, setup):
        gallery, grids, masks, _ = setup
        for grid, mask in zip(grids[:6], masks[:6]):
            pred = predict(grid, mask, gallery, CFG)
            assert 1 <= pred.complexity <= min(CFG.j_prototypes, len(gallery.records))

    def test_deterministic(self, setup):
        gallery, grids, masks, _ = setup
        a = predict(grids[0], masks[0], gallery, CFG)
        b = predict(grids[0], masks[0], gallery, CFG)
        assert a.scores == b.scores
        assert [
            (m.query_segment_id, m.prototype_image_id, m.prototype_segment_id)
            for m in a.match_set.matches
        ] == [
            (m.query_segment_id, m.prototype_image_id, m.prototype_segment_id)
            for m in b.match_set.matches
        ]

    def test_argmax_ties_take_lowest_class(self):
        scores = count_scores(match_set([2, 1]), classes=[0, 1, 2])
        predicted = min(scores, key=lambda c: (-scores[c], c))
        assert predicted == 1
