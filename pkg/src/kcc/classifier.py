"""Classification by counting matched keypoints.

Class scores are normalized per-class match counts; the prediction is the
argmax with ties resolved toward the lowest class id.  A query with no
matches (in practice: an empty foreground, since nonempty keypoint sets
always produce at least one mutual NN pair) yields an abstention rather
than an uninformed guess.  Explanation complexity is the number of
distinct prototype images a reader must inspect for the predicted class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .config import PipelineConfig
from .container import ForegroundMask, TokenGrid
from .errors import ConfigDriftError, NoForegroundError, ValidationError
from .gallery import PrototypeGallery, compute_global_vector
from .keypoints import Keypoint, choose_working_resolution, extract_keypoints, resample
from .matching import MatchSet, mutual_nn, prune_prototypes
from .slic import slic_segment


@dataclass
class Prediction:
    scores: dict[int, float]
    predicted_class: int | None
    match_set: MatchSet
    complexity: int
    abstained: bool
    diagnostic: str = ""
    candidate_keypoints: int = 0  # |U_P| after pruning (memory telemetry)
    # Explanation payload for rendering: every query keypoint plus the
    # keypoints and pixel dimensions of the matched prototype images.
    query_keypoints: list[Keypoint] = field(default_factory=list)
    prototype_keypoints: dict[str, list[Keypoint]] = field(default_factory=dict)
    image_dims: dict[str, tuple[int, int]] = field(default_factory=dict)
    query_image_id: str = ""


def count_scores(match_set: MatchSet, classes: list[int]) -> dict[int, float]:
    """Fraction of matches per class; classes without matches score 0."""
    n = len(match_set.matches)
    if n == 0:
        raise ValidationError("empty match set: caller should abstain")
    scores = {int(c): 0.0 for c in classes}
    for m in match_set.matches:
        scores[m.class_label] = scores.get(m.class_label, 0.0) + 1.0
    return {c: v / n for c, v in scores.items()}


def explanation_complexity(match_set: MatchSet, predicted_class: int) -> int:
    """Distinct prototype images among the predicted class's matches."""
    if not match_set.matches:
        raise ValidationError("empty match set has no explanation")
    return len(
        {
            m.prototype_image_id
            for m in match_set.matches
            if m.class_label == predicted_class
        }
    )


def _abstained(query_image_id: str, diagnostic: str) -> Prediction:
    return Prediction(
        scores={},
        predicted_class=None,
        match_set=MatchSet(matches=[], query_image_id=query_image_id),
        complexity=0,
        abstained=True,
        diagnostic=diagnostic,
        query_image_id=query_image_id,
    )


def predict(
    grid: TokenGrid,
    mask: ForegroundMask,
    gallery: PrototypeGallery,
    config: PipelineConfig,
) -> Prediction:
    """Full pipeline for one query: keypoints, pruning, matching, counting."""
    config.validate()
    if config.fingerprint() != gallery.fingerprint:
        raise ConfigDriftError(
            f"config fingerprint {config.fingerprint()[:12]}.. does not match "
            f"gallery fingerprint {gallery.fingerprint[:12]}.."
        )

    work_h, work_w = choose_working_resolution(grid, config.scale_factor)
    work = resample(grid, mask, work_h, work_w)
    try:
        seg = slic_segment(
            work,
            n_segments=config.n_segments,
            compactness=config.compactness,
            max_iters=config.max_iters,
            seed=config.seed,
        )
    except NoForegroundError:
        return _abstained(grid.image_id, "empty foreground: no keypoints to match")

    query_keypoints = extract_keypoints(seg, work, grid)
    query_global = compute_global_vector(grid, query_keypoints)
    candidates = prune_prototypes(query_global, gallery, config.j_prototypes)
    candidate_keypoints = sum(len(r.keypoints) for r in candidates)
    match_set = mutual_nn(query_keypoints, candidates)

    if not match_set.matches:
        pred = _abstained(grid.image_id, "no mutual nearest neighbors")
        pred.query_keypoints = query_keypoints
        pred.candidate_keypoints = candidate_keypoints
        return pred

    scores = count_scores(match_set, gallery.classes)
    predicted_class = min(
        scores, key=lambda c: (-scores[c], c)
    )  # argmax, ties -> lowest class id
    complexity = explanation_complexity(match_set, predicted_class)

    matched_ids = {m.prototype_image_id for m in match_set.matches}
    proto_kps = {}
    image_dims = {grid.image_id: (grid.orig_h, grid.orig_w)}
    for rec in candidates:
        if rec.image_id in matched_ids:
            proto_kps[rec.image_id] = rec.keypoints
            image_dims[rec.image_id] = (rec.orig_h, rec.orig_w)

    return Prediction(
        scores=scores,
        predicted_class=predicted_class,
        match_set=match_set,
        complexity=complexity,
        abstained=False,
        candidate_keypoints=candidate_keypoints,
        query_keypoints=query_keypoints,
        prototype_keypoints=proto_kps,
        image_dims=image_dims,
        query_image_id=grid.image_id,
    )
