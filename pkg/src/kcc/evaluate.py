"""Dataset evaluation (accuracy / explanation complexity) and sweeps.

Accuracy counts abstentions as errors; mean complexity averages over
non-abstained predictions only.  Reports echo the fully resolved
configuration and a per-query log so every aggregate can be recounted
independently.  Queries are processed in sorted image-id order and
aggregated order-independently, so permuting the container leaves the
report unchanged.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .classifier import predict
from .config import PipelineConfig
from .container import read_container
from .errors import ValidationError
from .gallery import PrototypeGallery, build_gallery

log = logging.getLogger("kcc.evaluate")


@dataclass
class QueryResult:
    image_id: str
    true_class: int
    predicted_class: int | None
    abstained: bool
    n_matches: int
    complexity: int
    candidate_keypoints: int


@dataclass
class EvalReport:
    dataset_id: str
    config: dict
    accuracy: float
    mean_complexity: float
    abstention_rate: float
    per_class_accuracy: dict[int, float]
    n_queries: int
    per_query: list[QueryResult] = field(default_factory=list)
    wall_clock_s: float = 0.0
    peak_candidate_keypoints: int = 0

    def as_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "config": self.config,
            "accuracy": self.accuracy,
            "mean_complexity": self.mean_complexity,
            "abstention_rate": self.abstention_rate,
            "per_class_accuracy": {str(k): v for k, v in self.per_class_accuracy.items()},
            "n_queries": self.n_queries,
            "wall_clock_s": self.wall_clock_s,
            "peak_candidate_keypoints": self.peak_candidate_keypoints,
            "per_query": [
                {
                    "image_id": q.image_id,
                    "true_class": q.true_class,
                    "predicted_class": q.predicted_class,
                    "abstained": q.abstained,
                    "n_matches": q.n_matches,
                    "complexity": q.complexity,
                    "candidate_keypoints": q.candidate_keypoints,
                }
                for q in self.per_query
            ],
        }


def evaluate_dataset(
    dataset_path: str | Path,
    gallery: PrototypeGallery,
    config: PipelineConfig,
    jobs: int = 1,
) -> EvalReport:
    grids, masks, manifest = read_container(dataset_path)
    if not manifest.image_classes:
        raise ValidationError(f"{dataset_path}: container carries no class labels")
    container_encoder = manifest.extra.get("encoder_id")
    gallery_encoder = gallery.config.get("encoder_id")
    if container_encoder and gallery_encoder and container_encoder != gallery_encoder:
        log.warning(
            "evaluating %r tokens against a gallery built from %r tokens",
            container_encoder,
            gallery_encoder,
        )

    masks_by_id = {m.image_id: m for m in masks}
    ordered = sorted(grids, key=lambda g: g.image_id)

    def run_query(grid):
        mask = masks_by_id.get(grid.image_id)
        if mask is None:
            raise ValidationError(f"query {grid.image_id!r} has no foreground mask")
        true_class = manifest.image_classes.get(grid.image_id)
        if true_class is None:
            raise ValidationError(f"query {grid.image_id!r} has no class label")
        pred = predict(grid, mask, gallery, config)
        return QueryResult(
            image_id=grid.image_id,
            true_class=int(true_class),
            predicted_class=pred.predicted_class,
            abstained=pred.abstained,
            n_matches=len(pred.match_set.matches),
            complexity=pred.complexity,
            candidate_keypoints=pred.candidate_keypoints,
        )

    t0 = time.perf_counter()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_query, ordered))
    else:
        results = [run_query(g) for g in ordered]
    wall = time.perf_counter() - t0

    return summarize(Path(dataset_path).name, config, results, wall)


def summarize(
    dataset_id: str,
    config: PipelineConfig,
    results: list[QueryResult],
    wall_clock_s: float = 0.0,
) -> EvalReport:
    if not results:
        raise ValidationError("no queries evaluated")
    results = sorted(results, key=lambda r: r.image_id)
    n = len(results)
    correct = sum(
        1 for r in results if not r.abstained and r.predicted_class == r.true_class
    )
    abstained = sum(1 for r in results if r.abstained)
    answered = [r for r in results if not r.abstained]
    mean_complexity = (
        sum(r.complexity for r in answered) / len(answered) if answered else 0.0
    )

    per_class: dict[int, list[QueryResult]] = {}
    for r in results:
        per_class.setdefault(r.true_class, []).append(r)
    per_class_accuracy = {
        c: sum(1 for r in rs if not r.abstained and r.predicted_class == c) / len(rs)
        for c, rs in sorted(per_class.items())
    }

    return EvalReport(
        dataset_id=dataset_id,
        config=config.as_dict(),
        accuracy=correct / n,
        mean_complexity=mean_complexity,
        abstention_rate=abstained / n,
        per_class_accuracy=per_class_accuracy,
        n_queries=n,
        per_query=results,
        wall_clock_s=wall_clock_s,
        peak_candidate_keypoints=max(r.candidate_keypoints for r in results),
    )


# ---------------------------------------------------------------------------
# hyperparameter sweeps


@dataclass
class SweepGrid:
    n_segments: list[int]
    per_class: list[int]
    j_prototypes: list[int]
    seeds: list[int]

    @staticmethod
    def from_file(path: str | Path) -> "SweepGrid":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"sweep grid parse error at line {exc.lineno}: {exc.msg}"
            ) from exc
        return SweepGrid(
            n_segments=[int(v) for v in raw.get("n_segments", [8])],
            per_class=[int(v) for v in raw.get("per_class", [10])],
            j_prototypes=[int(v) for v in raw.get("j_prototypes", [40])],
            seeds=[int(v) for v in raw.get("seeds", [0])],
        )

    def cells(self) -> list[tuple[int, int, int, int]]:
        return [
            (ns, pc, j, seed)
            for ns in self.n_segments
            for pc in self.per_class
            for j in self.j_prototypes
            for seed in self.seeds
        ]


def run_sweep(
    train_path: str | Path,
    test_path: str | Path,
    grid: SweepGrid,
    base_config: PipelineConfig,
    jobs: int = 1,
) -> list[EvalReport]:
    """Evaluate every cell of the grid; duplicate cells are dropped with a warning."""
    seen: set[tuple[int, int, int, int]] = set()
    reports = []
    for cell in grid.cells():
        if cell in seen:
            log.warning("duplicate sweep cell %s skipped", (cell,))
            continue
        seen.add(cell)
        ns, pc, j, seed = cell
        config = base_config.replace(
            n_segments=ns, per_class=pc, j_prototypes=j, seed=seed
        )
        gallery = build_gallery(train_path, config, jobs=jobs)
        resolved = config.replace(encoder_id=gallery.config["encoder_id"])
        reports.append(evaluate_dataset(test_path, gallery, resolved, jobs=jobs))
    return reports


def sweep_table(reports: list[EvalReport]) -> str:
    """Fixed-width human-readable table, one row per sweep cell."""
    header = (
        f"{'n_seg':>5} {'P_c':>4} {'J':>4} {'seed':>5} "
        f"{'accuracy':>9} {'complexity':>11} {'abstain':>8}"
    )
    lines = [header, "-" * len(header)]
    for rep in reports:
        cfg = rep.config
        lines.append(
            f"{cfg['n_segments']:>5} {cfg['per_class']:>4} {cfg['j_prototypes']:>4} "
            f"{cfg['seed']:>5} {rep.accuracy:>9.4f} {rep.mean_complexity:>11.3f} "
            f"{rep.abstention_rate:>8.4f}"
        )
    return "\n".join(lines)
