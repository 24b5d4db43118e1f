"""Sweep segment counts and prototype budgets; watch accuracy vs complexity.

Run from the repository root:

    python3 demos/03_hyperparameter_sweep.py

More segments mean more keypoints per image (finer evidence, slower);
more prototypes per class mean more matching opportunities but more
images a reader may need to inspect.  The J pruning budget bounds the
candidate pool per query.
"""

from pathlib import Path

from kcc import PipelineConfig, SweepGrid, SynthSpec, write_synth_container
from kcc.evaluate import run_sweep, sweep_table

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)
train = out / "sweep_train.kcc1"
test = out / "sweep_test.kcc1"

write_synth_container(
    SynthSpec(n_classes=3, images_per_class=15, noise=0.35, seed=2, split="train"),
    train,
)
write_synth_container(
    SynthSpec(n_classes=3, images_per_class=10, noise=0.35, seed=2, split="test"),
    test,
)

grid = SweepGrid(
    n_segments=[4, 8, 12],
    per_class=[5, 10],
    j_prototypes=[20],
    seeds=[0],
)
base = PipelineConfig(encoder_id="synthetic-vit-d16")
reports = run_sweep(train, test, grid, base)

print(sweep_table(reports))
best = max(reports, key=lambda r: (r.accuracy, -r.mean_complexity))
print(f"\nbest cell: n_segments={best.config['n_segments']} "
      f"per_class={best.config['per_class']} -> "
      f"accuracy {best.accuracy:.3f}, complexity {best.mean_complexity:.2f}")
