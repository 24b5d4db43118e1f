"""Walk through every stage of the keypoint-counting pipeline on one image.

Run from the repository root:

    python3 demos/01_pipeline_walkthrough.py
"""

import numpy as np

from kcc import (
    PipelineConfig,
    SynthSpec,
    choose_working_resolution,
    compute_global_vector,
    extract_keypoints,
    generate_dataset,
    mutual_nn,
    prune_prototypes,
    count_scores,
    resample,
    slic_segment,
)
from kcc.gallery import PrototypeGallery, PrototypeRecord

# A small synthetic dataset: 3 classes, each with its own feature direction
# split into per-part sub-directions, on elliptical foreground blobs.
spec = SynthSpec(n_classes=3, images_per_class=4, noise=0.2, seed=42)
grids, masks, class_names, image_classes = generate_dataset(spec)
config = PipelineConfig(n_segments=8, j_prototypes=12)

grid, mask = grids[0], masks[0]
print(f"image {grid.image_id}: {grid.grid_h}x{grid.grid_w} tokens of dim {grid.dim}, "
      f"input {grid.orig_h}x{grid.orig_w}px")

# Stage 1a: bring tokens (bilinear up) and mask (NN down) to a working grid.
work_h, work_w = choose_working_resolution(grid, config.scale_factor)
work = resample(grid, mask, work_h, work_w)
print(f"working grid {work.work_h}x{work.work_w}, "
      f"{int(work.mask.sum())} foreground pixels")

# Stage 1b: segment the foreground over token features.
seg = slic_segment(work, config.n_segments, compactness=config.compactness)
sizes = np.bincount(seg.labels.ravel())[1:]
print(f"{seg.n_actual} segments (requested {seg.requested}), sizes {sizes.tolist()}")

# Stage 1c: one keypoint per segment = segment center + mean token feature.
keypoints = extract_keypoints(seg, work, grid)
for kp in keypoints[:3]:
    r, c = kp.centroid_input
    print(f"  keypoint {kp.segment_id}: {kp.pixel_count}px at input ({r:.0f}, {c:.0f})")

# Stage 2: match against a few prototype images by mutual nearest neighbors.
prototypes = []
for other, other_mask in zip(grids[1:], masks[1:]):
    label = image_classes[other.image_id]
    wk = resample(other, other_mask, *choose_working_resolution(other, 4))
    sg = slic_segment(wk, config.n_segments)
    kps = extract_keypoints(sg, wk, other, class_label=label)
    prototypes.append(PrototypeRecord(
        image_id=other.image_id,
        class_label=label,
        keypoints=kps,
        global_vector=compute_global_vector(other, kps),
        orig_h=other.orig_h,
        orig_w=other.orig_w,
    ))

gallery = PrototypeGallery(
    records=prototypes,
    per_class=spec.images_per_class,
    classes=sorted(set(image_classes.values())),
    fingerprint=config.fingerprint(),
)
query_global = compute_global_vector(grid, keypoints)
candidates = prune_prototypes(query_global, gallery, config.j_prototypes)
print(f"pruning kept {len(candidates)} of {len(prototypes)} prototypes (J={config.j_prototypes})")
match_set = mutual_nn(keypoints, candidates)
print(f"{len(match_set.matches)} mutual-NN matches across "
      f"{len({m.prototype_image_id for m in match_set.matches})} prototypes")

# Stage 3: classify by counting matches per class.
scores = count_scores(match_set, classes=sorted(set(image_classes.values())))
predicted = min(scores, key=lambda c: (-scores[c], c))
for c, s in sorted(scores.items()):
    marker = " <- predicted" if c == predicted else ""
    print(f"  class {c} ({class_names[c]}): {s:.3f}{marker}")
true = image_classes[grid.image_id]
print(f"true class: {true} ({'correct' if predicted == true else 'wrong'})")
