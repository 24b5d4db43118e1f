"""Prototype pruning and mutual nearest-neighbor keypoint matching.

The similarity between every query keypoint and every candidate prototype
keypoint is computed as one batched matrix product over unit-normalized
representations (memory |U_q| x |U_P|; pruning to the J closest prototypes
bounds |U_P|).  A pair is a match iff each side is the other's nearest
neighbor.  Nearest-neighbor ties are broken by a fixed global ordering of
candidates (class_label, image_id, segment_id) so matches are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .gallery import PrototypeGallery, PrototypeRecord
from .keypoints import Keypoint


@dataclass
class Match:
    """One mutual-NN pairing between a query segment and a prototype segment."""

    query_segment_id: int
    prototype_image_id: str
    prototype_segment_id: int
    class_label: int
    similarity: float  # cosine similarity in [-1, 1]


@dataclass
class MatchSet:
    matches: list[Match]
    query_image_id: str
    candidate_image_ids: list[str] = field(default_factory=list)
    j_used: int = 0


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1 - cos(a, b); lies in [0, 2]. Raises on zero-norm input."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine distance undefined for zero-norm vector")
    return float(1.0 - np.dot(a, b) / (na * nb))


def _unit_rows(vectors: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError(f"zero-norm {what} representation")
    return vectors / norms[:, None]


def prune_prototypes(
    query_global: np.ndarray, gallery: PrototypeGallery, j: int
) -> list[PrototypeRecord]:
    """The J gallery records most cosine-similar to the query's global vector.

    Ties are broken by (class_label, image_id); the returned order is the
    descending-similarity order and is deterministic.
    """
    if j < 1:
        raise ValidationError("J must be >= 1")
    records = gallery.records
    if not records:
        raise ValidationError("empty gallery")
    q = np.asarray(query_global, dtype=np.float64)
    nq = np.linalg.norm(q)
    if nq == 0.0:
        raise ValidationError("zero-norm query global vector")
    globals_ = _unit_rows(
        np.stack([r.global_vector.astype(np.float64) for r in records]), "global"
    )
    sims = globals_ @ (q / nq)
    order = sorted(
        range(len(records)),
        key=lambda i: (-sims[i], records[i].class_label, records[i].image_id),
    )
    return [records[i] for i in order[: min(j, len(records))]]


def mutual_nn(
    query_keypoints: list[Keypoint], candidates: list[PrototypeRecord]
) -> MatchSet:
    """Mutual nearest neighbors between query keypoints and the pooled
    keypoints of all candidate prototypes."""
    if not query_keypoints:
        raise ValidationError("no query keypoints")
    if not candidates:
        raise ValidationError("no candidate prototypes")
    for rec in candidates:
        if not rec.keypoints:
            raise ValidationError(f"candidate {rec.image_id!r} has no keypoints")

    queries = sorted(query_keypoints, key=lambda kp: kp.segment_id)
    pool: list[tuple[Keypoint, PrototypeRecord]] = []
    for rec in candidates:
        for kp in rec.keypoints:
            pool.append((kp, rec))
    pool.sort(key=lambda item: (item[1].class_label, item[1].image_id, item[0].segment_id))

    q_mat = _unit_rows(
        np.stack([kp.representation.astype(np.float64) for kp in queries]), "query"
    )
    p_mat = _unit_rows(
        np.stack([kp.representation.astype(np.float64) for kp, _ in pool]), "prototype"
    )

    sims = q_mat @ p_mat.T  # the one batched product; |U_q| x |U_P|
    nn_of_query = sims.argmax(axis=1)  # first max = fixed-order tie-break
    nn_of_proto = sims.argmax(axis=0)

    matches = []
    for qi, pi in enumerate(nn_of_query):
        if nn_of_proto[pi] == qi:
            kp, rec = pool[pi]
            matches.append(
                Match(
                    query_segment_id=queries[qi].segment_id,
                    prototype_image_id=rec.image_id,
                    prototype_segment_id=kp.segment_id,
                    class_label=rec.class_label,
                    similarity=float(sims[qi, pi]),
                )
            )

    return MatchSet(
        matches=matches,
        query_image_id=queries[0].image_id,
        candidate_image_ids=[r.image_id for r in candidates],
        j_used=len(candidates),
    )
