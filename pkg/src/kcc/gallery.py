"""Prototype gallery: per-class exemplar selection and persistence.

Every record stores the precomputed keypoints of one prototype image plus
a global image vector used for J-pruning (the class token when the encoder
provides one, otherwise the mean keypoint representation).  Selection is
k-medoids over global vectors with cosine distance (PAM swaps from a
seeded start) or seeded uniform sampling.  The persisted file reuses the
container block format with magic ``KCCG`` and carries a fingerprint of
the pipeline configuration so stale galleries are rejected loudly.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig, config_from_dict
from .container import TokenGrid, read_container, read_blocks, write_blocks
from .errors import ConfigDriftError, NoForegroundError, ValidationError
from .keypoints import (
    Keypoint,
    choose_working_resolution,
    extract_keypoints,
    resample,
)
from .slic import slic_segment

MAGIC_GALLERY = b"KCCG"

log = logging.getLogger("kcc.gallery")


@dataclass
class PrototypeRecord:
    """One prototype image: its keypoints plus a global summary vector."""

    image_id: str
    class_label: int
    keypoints: list[Keypoint]
    global_vector: np.ndarray  # [dim] float32
    image_path: str | None = None
    orig_h: int = 0
    orig_w: int = 0

    def validate(self) -> "PrototypeRecord":
        if not self.keypoints:
            raise ValidationError(f"prototype {self.image_id!r} has no keypoints")
        for kp in self.keypoints:
            if kp.image_id != self.image_id or kp.class_label != self.class_label:
                raise ValidationError(
                    f"prototype {self.image_id!r}: keypoint {kp.segment_id} carries "
                    "foreign image_id or class_label"
                )
        gv = np.asarray(self.global_vector)
        if not np.all(np.isfinite(gv)) or float(np.linalg.norm(gv)) == 0.0:
            raise ValidationError(
                f"prototype {self.image_id!r}: global vector must be finite and nonzero"
            )
        return self


@dataclass
class PrototypeGallery:
    records: list[PrototypeRecord]
    per_class: int
    classes: list[int]
    fingerprint: str
    class_names: list[str] = field(default_factory=list)
    shortfall: dict[int, int] = field(default_factory=dict)  # class -> available
    config: dict = field(default_factory=dict)

    def records_for(self, class_label: int) -> list[PrototypeRecord]:
        return [r for r in self.records if r.class_label == class_label]


def compute_global_vector(grid: TokenGrid, keypoints: list[Keypoint]) -> np.ndarray:
    """Class token when present, else the mean keypoint representation."""
    if grid.cls_vector is not None:
        return grid.cls_vector
    if not keypoints:
        raise ValidationError(
            f"cannot summarize image {grid.image_id!r}: no cls token and no keypoints"
        )
    stacked = np.stack([kp.representation.astype(np.float64) for kp in keypoints])
    return stacked.mean(axis=0).astype(np.float32)


# ---------------------------------------------------------------------------
# prototype selection


def _cosine_distance_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError("zero-norm global vector")
    unit = vectors / norms[:, None]
    d = 1.0 - unit @ unit.T
    return np.clip(d, 0.0, 2.0)


def _pam_medoids(dist: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    """Seeded-start PAM: repeat best-improvement swaps until a local optimum."""
    n = dist.shape[0]
    medoids = sorted(int(i) for i in rng.choice(n, size=k, replace=False))
    cost = dist[:, medoids].min(axis=1).sum()

    while True:
        best: tuple[float, int, int] | None = None
        medoid_set = set(medoids)
        for slot in range(k):
            for cand in range(n):
                if cand in medoid_set:
                    continue
                trial = list(medoids)
                trial[slot] = cand
                trial_cost = dist[:, trial].min(axis=1).sum()
                if trial_cost < cost - 1e-12 and (best is None or trial_cost < best[0]):
                    best = (trial_cost, slot, cand)
        if best is None:
            return sorted(medoids)
        cost, slot, cand = best
        medoids[slot] = cand
        medoids.sort()


def select_prototypes(
    class_images: dict[int, list[tuple[str, np.ndarray]]],
    per_class: int,
    strategy: str = "kmeans-medoid",
    seed: int = 0,
) -> dict[int, list[str]]:
    """Pick up to `per_class` prototype image ids for every class."""
    if per_class < 1:
        raise ValidationError("per_class must be >= 1")
    if strategy not in ("kmeans-medoid", "random"):
        raise ValidationError(f"unknown selection strategy {strategy!r}")
    if not class_images:
        raise ValidationError("no classes to select prototypes from")

    selection: dict[int, list[str]] = {}
    for class_label in sorted(class_images):
        items = sorted(class_images[class_label], key=lambda t: t[0])
        if not items:
            raise ValidationError(f"class {class_label} has no images")
        ids = [img_id for img_id, _ in items]
        if len(items) <= per_class:
            selection[class_label] = ids
            continue
        rng = np.random.default_rng([seed, class_label])
        if strategy == "random":
            chosen = rng.choice(len(ids), size=per_class, replace=False)
            selection[class_label] = sorted(ids[int(i)] for i in chosen)
        else:
            vectors = np.stack([v.astype(np.float64) for _, v in items])
            dist = _cosine_distance_matrix(vectors)
            medoids = _pam_medoids(dist, per_class, rng)
            selection[class_label] = [ids[m] for m in medoids]
    return selection


# ---------------------------------------------------------------------------
# gallery construction


def _image_keypoints(grid, mask, config: PipelineConfig, class_label: int):
    work_h, work_w = choose_working_resolution(grid, config.scale_factor)
    work = resample(grid, mask, work_h, work_w)
    seg = slic_segment(
        work,
        n_segments=config.n_segments,
        compactness=config.compactness,
        max_iters=config.max_iters,
        seed=config.seed,
    )
    return extract_keypoints(seg, work, grid, class_label=class_label)


def build_gallery(
    dataset_path: str | Path,
    config: PipelineConfig,
    jobs: int = 1,
) -> PrototypeGallery:
    """Run the keypoint pipeline over a labeled container and select prototypes."""
    config.validate()
    grids, masks, manifest = read_container(dataset_path)
    if not manifest.image_classes:
        raise ValidationError(f"{dataset_path}: container carries no class labels")
    masks_by_id = {m.image_id: m for m in masks}

    container_encoder = manifest.extra.get("encoder_id")
    if container_encoder and config.encoder_id == "unspecified":
        config = config.replace(encoder_id=container_encoder)
    elif container_encoder and container_encoder != config.encoder_id:
        log.warning(
            "container encoder %r differs from configured %r",
            container_encoder,
            config.encoder_id,
        )

    def process(grid):
        label = manifest.image_classes.get(grid.image_id)
        if label is None:
            raise ValidationError(f"image {grid.image_id!r} has no class label")
        mask = masks_by_id.get(grid.image_id)
        if mask is None:
            raise ValidationError(f"image {grid.image_id!r} has no foreground mask")
        try:
            kps = _image_keypoints(grid, mask, config, label)
        except NoForegroundError:
            log.info("skipping %s: empty foreground", grid.image_id)
            return grid.image_id, None
        except ValidationError as exc:
            raise ValidationError(f"image {grid.image_id!r}: {exc}") from exc
        gvec = compute_global_vector(grid, kps)
        return grid.image_id, (label, kps, gvec)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = dict(pool.map(process, grids))
    else:
        results = dict(process(g) for g in grids)

    class_images: dict[int, list[tuple[str, np.ndarray]]] = {}
    details: dict[str, tuple[int, list[Keypoint], np.ndarray]] = {}
    for grid in grids:
        out = results[grid.image_id]
        if out is None:
            continue
        label, kps, gvec = out
        class_images.setdefault(label, []).append((grid.image_id, gvec))
        details[grid.image_id] = (label, kps, gvec)
    if not class_images:
        raise ValidationError(f"{dataset_path}: every candidate image was skipped")

    selection = select_prototypes(
        class_images, config.per_class, strategy=config.strategy, seed=config.seed
    )

    grids_by_id = {g.image_id: g for g in grids}
    records = []
    for class_label in sorted(selection):
        for image_id in sorted(selection[class_label]):
            label, kps, gvec = details[image_id]
            grid = grids_by_id[image_id]
            records.append(
                PrototypeRecord(
                    image_id=image_id,
                    class_label=label,
                    keypoints=kps,
                    global_vector=gvec,
                    image_path=manifest.image_paths.get(image_id),
                    orig_h=grid.orig_h,
                    orig_w=grid.orig_w,
                ).validate()
            )

    shortfall = {
        c: len(imgs) for c, imgs in class_images.items() if len(imgs) < config.per_class
    }
    return PrototypeGallery(
        records=records,
        per_class=config.per_class,
        classes=sorted(class_images),
        fingerprint=config.fingerprint(),
        class_names=manifest.class_names,
        shortfall=shortfall,
        config=config.as_dict(),
    )


# ---------------------------------------------------------------------------
# persistence


def save_gallery(gallery: PrototypeGallery, path: str | Path) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    record_meta = []
    for rec in gallery.records:
        rec.validate()
        reps = np.stack([kp.representation for kp in rec.keypoints]).astype(np.float32)
        arrays.append((f"repr:{rec.image_id}", reps))
        arrays.append((f"global:{rec.image_id}", rec.global_vector.astype(np.float32)))
        record_meta.append(
            {
                "image_id": rec.image_id,
                "class_label": rec.class_label,
                "image_path": rec.image_path,
                "orig_h": rec.orig_h,
                "orig_w": rec.orig_w,
                "keypoints": [
                    {
                        "segment_id": kp.segment_id,
                        "pixel_count": kp.pixel_count,
                        "centroid_work": list(kp.centroid_work),
                        "centroid_input": list(kp.centroid_input),
                    }
                    for kp in rec.keypoints
                ],
            }
        )
    meta = {
        "kind": "gallery",
        "fingerprint": gallery.fingerprint,
        "per_class": gallery.per_class,
        "classes": gallery.classes,
        "class_names": gallery.class_names,
        "shortfall": {str(k): v for k, v in gallery.shortfall.items()},
        "config": gallery.config,
        "records": record_meta,
    }
    write_blocks(path, MAGIC_GALLERY, meta, arrays)


def load_gallery(
    path: str | Path,
    expected_config: PipelineConfig | None = None,
) -> PrototypeGallery:
    meta, arrays = read_blocks(path, MAGIC_GALLERY)
    fingerprint = meta["fingerprint"]
    if expected_config is not None:
        want = expected_config.fingerprint()
        if want != fingerprint:
            raise ConfigDriftError(
                f"{path}: config drift: gallery was built with fingerprint "
                f"{fingerprint[:12]}.., expected {want[:12]}.."
            )

    records = []
    for rm in meta["records"]:
        image_id = rm["image_id"]
        reps = arrays[f"repr:{image_id}"]
        kps = []
        for i, km in enumerate(rm["keypoints"]):
            kps.append(
                Keypoint(
                    segment_id=km["segment_id"],
                    representation=reps[i],
                    pixel_count=km["pixel_count"],
                    centroid_work=tuple(km["centroid_work"]),
                    centroid_input=tuple(km["centroid_input"]),
                    image_id=image_id,
                    class_label=rm["class_label"],
                )
            )
        records.append(
            PrototypeRecord(
                image_id=image_id,
                class_label=rm["class_label"],
                keypoints=kps,
                global_vector=arrays[f"global:{image_id}"],
                image_path=rm.get("image_path"),
                orig_h=rm.get("orig_h", 0),
                orig_w=rm.get("orig_w", 0),
            ).validate()
        )

    # Re-validate the stored config echo so a tampered manifest fails fast.
    config_from_dict(meta["config"])

    return PrototypeGallery(
        records=records,
        per_class=meta["per_class"],
        classes=[int(c) for c in meta["classes"]],
        fingerprint=fingerprint,
        class_names=list(meta.get("class_names", [])),
        shortfall={int(k): int(v) for k, v in meta.get("shortfall", {}).items()},
        config=dict(meta["config"]),
    )
