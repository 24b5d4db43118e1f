"""Command-line surface.

Verbs: synth, build-gallery, classify, explain, evaluate, sweep.
Exit codes: 0 success, 2 validation error, 4 abstention (classify only),
3 I/O or file-format error.  KCC_LOG selects the logging level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .classifier import predict
from .config import PipelineConfig, load_config
from .container import read_container
from .errors import ContainerFormatError, KCCError, ValidationError
from .evaluate import SweepGrid, evaluate_dataset, run_sweep, sweep_table
from .gallery import build_gallery, load_gallery, save_gallery
from .render import RenderOptions, render_explanation
from .synth import SynthSpec, write_synth_container

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_ABSTAINED = 4

log = logging.getLogger("kcc")


def _setup_logging() -> None:
    level = os.environ.get("KCC_LOG", "warning").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _load_cli_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        config = config.replace(seed=args.seed)
    if getattr(args, "j", None) is not None:
        config = config.replace(j_prototypes=args.j)
    return config.validate()


def _write_output(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _find_query(container_path: str, image_id: str):
    grids, masks, manifest = read_container(container_path)
    grid = next((g for g in grids if g.image_id == image_id), None)
    if grid is None:
        raise ValidationError(f"image {image_id!r} not found in {container_path}")
    mask = next((m for m in masks if m.image_id == image_id), None)
    if mask is None:
        raise ValidationError(f"image {image_id!r} has no mask in {container_path}")
    return grid, mask, manifest


def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_classes=args.classes,
        images_per_class=args.images_per_class,
        grid=args.grid,
        dim=args.dim,
        noise=args.noise,
        seed=args.seed if args.seed is not None else 0,
        patch_size=args.patch_size,
        split=args.split,
    )
    write_synth_container(spec, args.output, images_dir=args.images_dir)
    log.info("wrote %s", args.output)
    return EXIT_OK


def cmd_build_gallery(args) -> int:
    config = _load_cli_config(args)
    gallery = build_gallery(args.train, config, jobs=args.jobs)
    save_gallery(gallery, args.output)
    echo = {
        "output": args.output,
        "records": len(gallery.records),
        "classes": gallery.classes,
        "per_class": gallery.per_class,
        "shortfall": {str(k): v for k, v in gallery.shortfall.items()},
        "fingerprint": gallery.fingerprint,
        "config": gallery.config,
    }
    print(json.dumps(echo, indent=2, sort_keys=True))
    return EXIT_OK


def _gallery_and_config(args) -> tuple:
    gallery = load_gallery(args.gallery)
    config = PipelineConfig(**gallery.config)
    if args.config:
        config = load_config(args.config)
        load_gallery(args.gallery, expected_config=config)  # config-drift gate
    if getattr(args, "seed", None) is not None:
        config = config.replace(seed=args.seed)
    if getattr(args, "j", None) is not None:
        config = config.replace(j_prototypes=args.j)
    return gallery, config.validate()


def cmd_classify(args) -> int:
    gallery, config = _gallery_and_config(args)
    grid, mask, _ = _find_query(args.container, args.image_id)
    pred = predict(grid, mask, gallery, config)

    record = {
        "image_id": grid.image_id,
        "abstained": pred.abstained,
        "predicted_class": pred.predicted_class,
        "scores": {str(c): s for c, s in sorted(pred.scores.items())},
        "n_matches": len(pred.match_set.matches),
        "complexity": pred.complexity,
        "j_used": pred.match_set.j_used,
        "diagnostic": pred.diagnostic,
    }
    if args.json:
        _write_output(json.dumps(record, indent=2, sort_keys=True) + "\n", args.output)
    else:
        lines = [f"image: {grid.image_id}"]
        if pred.abstained:
            lines.append(f"abstained: {pred.diagnostic}")
        else:
            lines.append(f"predicted class: {pred.predicted_class}")
            for c, s in sorted(pred.scores.items(), key=lambda cs: (-cs[1], cs[0])):
                lines.append(f"  class {c}: {s:.4f}")
            lines.append(f"matches: {len(pred.match_set.matches)}")
            lines.append(f"images to inspect: {pred.complexity}")
        _write_output("\n".join(lines) + "\n", args.output)
    return EXIT_ABSTAINED if pred.abstained else EXIT_OK


def cmd_explain(args) -> int:
    gallery, config = _gallery_and_config(args)
    grid, mask, manifest = _find_query(args.container, args.image_id)
    pred = predict(grid, mask, gallery, config)

    image_paths = dict(manifest.image_paths)
    for rec in gallery.records:
        if rec.image_path:
            image_paths.setdefault(rec.image_id, rec.image_path)

    labels = None
    if args.labels:
        try:
            raw = json.loads(Path(args.labels).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(
                f"labels parse error at line {exc.lineno}: {exc.msg}"
            ) from exc
        labels = {
            (img_id, int(seg_id)): text
            for img_id, segs in raw.items()
            for seg_id, text in segs.items()
        }

    options = RenderOptions(
        embed_images=args.embed_images,
        image_root=args.image_root,
        only_predicted_class=not args.all_classes,
        show_class_names=args.show_class_names,
        class_names=gallery.class_names or None,
    )
    svg = render_explanation(pred, image_paths, labels=labels, options=options)
    Path(args.output).write_text(svg, encoding="utf-8")
    log.info("wrote %s", args.output)
    # An abstained prediction still renders (banner document), so this is
    # a success; exit code 4 is reserved for classify.
    return EXIT_OK


def cmd_evaluate(args) -> int:
    gallery, config = _gallery_and_config(args)
    report = evaluate_dataset(args.container, gallery, config, jobs=args.jobs)
    payload = report.as_dict()
    if args.json:
        _write_output(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.output)
    else:
        lines = [
            f"dataset: {report.dataset_id}",
            f"queries: {report.n_queries}",
            f"accuracy: {report.accuracy:.4f}",
            f"mean complexity: {report.mean_complexity:.3f}",
            f"abstention rate: {report.abstention_rate:.4f}",
            "per-class accuracy:",
        ]
        for c, acc in sorted(report.per_class_accuracy.items()):
            lines.append(f"  class {c}: {acc:.4f}")
        lines.append(f"wall clock: {report.wall_clock_s:.2f}s")
        lines.append(f"peak candidate keypoints: {report.peak_candidate_keypoints}")
        _write_output("\n".join(lines) + "\n", args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        base = base.replace(seed=args.seed)
    grid = SweepGrid.from_file(args.grid)
    reports = run_sweep(args.train, args.test, grid, base, jobs=args.jobs)
    if args.json:
        payload = [r.as_dict() for r in reports]
        _write_output(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.output)
    else:
        _write_output(sweep_table(reports) + "\n", args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kcc",
        description="Training-free keypoint-counting image classification engine.",
    )
    parser.add_argument("--version", action="version", version=f"kcc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset container")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--images-per-class", type=int, default=20)
    p.add_argument("--grid", type=int, default=14, help="token grid side length")
    p.add_argument("--dim", type=int, default=16, help="token dimensionality")
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--split", choices=("train", "test"), default="train")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--images-dir", default=None, help="also write PNGs here")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-gallery", help="precompute prototype keypoints")
    p.add_argument("--train", required=True, help="training container (KCC1)")
    p.add_argument("--config", default=None, help="JSON pipeline config")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", required=True, help="gallery file (KCCG)")
    p.set_defaults(func=cmd_build_gallery)

    p = sub.add_parser("classify", help="classify one container entry")
    p.add_argument("--container", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--j", type=int, default=None, help="prototype pruning budget")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("explain", help="render a keypoint-match explanation SVG")
    p.add_argument("--container", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--j", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--image-root", default=None)
    p.add_argument("--labels", default=None, help="JSON keypoint label file")
    p.add_argument("--embed-images", action="store_true")
    p.add_argument("--all-classes", action="store_true",
                   help="draw matches of every class, not only the prediction")
    p.add_argument("--show-class-names", action="store_true")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("evaluate", help="accuracy/complexity over a test container")
    p.add_argument("--container", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--j", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="evaluate a hyperparameter grid")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--grid", required=True, help="JSON sweep grid file")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--json", action="store_true")
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ContainerFormatError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KCCError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
