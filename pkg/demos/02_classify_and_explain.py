"""End-to-end: synthesize data, build a gallery, classify, render explanations.

Run from the repository root:

    python3 demos/02_classify_and_explain.py

Outputs land in demos/out/: two containers, a gallery, and SVG explanations
(one normal prediction, one abstention).  The same flow is available from
the command line; see the printed equivalents at the end.
"""

from pathlib import Path

import numpy as np

from kcc import (
    ForegroundMask,
    PipelineConfig,
    RenderOptions,
    SynthSpec,
    build_gallery,
    load_gallery,
    predict,
    render_explanation,
    save_gallery,
    write_synth_container,
)
from kcc.container import read_container

out = Path(__file__).parent / "out"
images = out / "images"
out.mkdir(exist_ok=True)

train_path = out / "train.kcc1"
test_path = out / "test.kcc1"
write_synth_container(
    SynthSpec(n_classes=3, images_per_class=12, noise=0.3, seed=1, split="train"),
    train_path, images_dir=images,
)
write_synth_container(
    SynthSpec(n_classes=3, images_per_class=4, noise=0.3, seed=1, split="test"),
    test_path, images_dir=images,
)

config = PipelineConfig(per_class=10, n_segments=8, j_prototypes=20,
                        encoder_id="synthetic-vit-d16")
gallery = build_gallery(train_path, config)
save_gallery(gallery, out / "gallery.kccg")
gallery = load_gallery(out / "gallery.kccg", expected_config=config)
print(f"gallery: {len(gallery.records)} prototypes over classes {gallery.classes}")

grids, masks, manifest = read_container(test_path)
grid, mask = grids[0], masks[0]
pred = predict(grid, mask, gallery, config)
print(f"{grid.image_id}: predicted class {pred.predicted_class} "
      f"with {len(pred.match_set.matches)} matches; "
      f"a reader inspects {pred.complexity} prototype image(s)")

image_paths = dict(manifest.image_paths)
for rec in gallery.records:
    if rec.image_path:
        image_paths.setdefault(rec.image_id, rec.image_path)

svg = render_explanation(
    pred, image_paths,
    options=RenderOptions(image_root=str(images)),
)
(out / "explanation.svg").write_text(svg)
print(f"wrote {out / 'explanation.svg'}")

# An empty foreground has nothing to match: the engine abstains and the
# renderer produces a banner instead of fabricating an explanation.
empty = ForegroundMask(grid.image_id, np.zeros_like(mask.values))
abstained = predict(grid, empty, gallery, config)
svg = render_explanation(abstained, image_paths,
                         options=RenderOptions(image_root=str(images)))
(out / "abstained.svg").write_text(svg)
print(f"wrote {out / 'abstained.svg'} (abstained: {abstained.diagnostic})")

print("\nCLI equivalents:")
print(f"  kcc synth --classes 3 --images-per-class 12 --split train "
      f"--images-dir {images} --output {train_path}")
print(f"  kcc build-gallery --train {train_path} --output {out / 'gallery.kccg'}")
print(f"  kcc classify --container {test_path} --image-id {grid.image_id} "
      f"--gallery {out / 'gallery.kccg'} --json")
print(f"  kcc explain --container {test_path} --image-id {grid.image_id} "
      f"--gallery {out / 'gallery.kccg'} --image-root {images} "
      f"--output {out / 'explanation.svg'}")
