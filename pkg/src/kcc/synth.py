"""Procedural desk-scale datasets for exercising the whole pipeline.

Each class owns a distinct unit feature direction plus a few orthogonal
part directions.  An image is an elliptical foreground blob; its tokens
carry the class direction, a per-band part direction, a weak positional
encoding (so segment means are unique and self-matching is exact), and
isotropic noise.  Train and test splits share the class geometry but draw
images from independent per-(split, class, index) streams, so containers
are reproducible byte-for-byte per seed.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import ForegroundMask, TokenGrid, write_container
from .errors import ValidationError

_SPLIT_CODES = {"train": 0, "test": 1}
_PART_WEIGHT = 0.45
_POS_WEIGHT = 0.05


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 3
    images_per_class: int = 20
    grid: int = 14
    dim: int = 16
    noise: float = 0.3
    seed: int = 0
    patch_size: int = 8
    parts: int = 3
    split: str = "train"

    def validate(self) -> "SynthSpec":
        if self.n_classes < 1 or self.images_per_class < 1:
            raise ValidationError("need at least one class and one image per class")
        if self.grid < 2:
            raise ValidationError("token grid must be at least 2x2")
        if self.split not in _SPLIT_CODES:
            raise ValidationError(f"split must be one of {sorted(_SPLIT_CODES)}")
        if self.parts < 1:
            raise ValidationError("parts must be >= 1")
        if self.noise < 0:
            raise ValidationError("noise must be >= 0")
        needed = self.n_classes * (1 + self.parts) + 3
        if self.dim < needed:
            raise ValidationError(
                f"dim={self.dim} too small for {self.n_classes} classes with "
                f"{self.parts} parts; need at least {needed}"
            )
        return self


def _direction_bank(spec: SynthSpec) -> np.ndarray:
    """Orthonormal columns: per-class [class dir, part dirs...], bg, 2 pos dirs."""
    needed = spec.n_classes * (1 + spec.parts) + 3
    rng = np.random.default_rng([spec.seed, 1001])
    m = rng.standard_normal((spec.dim, needed))
    q, r = np.linalg.qr(m)
    return q * np.sign(np.diag(r))


def _blob_params(rng: np.random.Generator, h: int, w: int) -> tuple[float, float, float, float]:
    cy = h * (0.35 + 0.30 * rng.random())
    cx = w * (0.35 + 0.30 * rng.random())
    ry = h * (0.18 + 0.17 * rng.random())
    rx = w * (0.18 + 0.17 * rng.random())
    return cy, cx, ry, rx


def generate_dataset(
    spec: SynthSpec,
) -> tuple[list[TokenGrid], list[ForegroundMask], list[str], dict[str, int]]:
    spec.validate()
    dirs = _direction_bank(spec)
    n_parts = spec.parts

    def class_dir(c: int) -> np.ndarray:
        return dirs[:, c * (1 + n_parts)]

    def part_dir(c: int, b: int) -> np.ndarray:
        return dirs[:, c * (1 + n_parts) + 1 + b]

    bg_dir = dirs[:, -3]
    pos_r_dir = dirs[:, -2]
    pos_c_dir = dirs[:, -1]

    gh = gw = spec.grid
    orig_h = gh * spec.patch_size
    orig_w = gw * spec.patch_size
    split_code = _SPLIT_CODES[spec.split]

    tok_rows = (np.arange(gh) + 0.5) * spec.patch_size
    tok_cols = (np.arange(gw) + 0.5) * spec.patch_size
    pos_field = (
        pos_r_dir[None, None, :] * (np.arange(gh) / (gh - 1))[:, None, None]
        + pos_c_dir[None, None, :] * (np.arange(gw) / (gw - 1))[None, :, None]
    ) * _POS_WEIGHT

    pix_y = np.arange(orig_h)[:, None] + 0.0
    pix_x = np.arange(orig_w)[None, :] + 0.0

    grids: list[TokenGrid] = []
    masks: list[ForegroundMask] = []
    image_classes: dict[str, int] = {}
    class_names = [f"class_{c}" for c in range(spec.n_classes)]

    for c in range(spec.n_classes):
        for idx in range(spec.images_per_class):
            rng = np.random.default_rng([spec.seed, split_code, c, idx])
            cy, cx, ry, rx = _blob_params(rng, orig_h, orig_w)

            def inside(y, x, cy=cy, cx=cx, ry=ry, rx=rx):
                return ((y - cy) / ry) ** 2 + ((x - cx) / rx) ** 2 <= 1.0

            tok_fg = inside(tok_rows[:, None], tok_cols[None, :])
            while not tok_fg.any():  # guard: radii minima make this near-impossible
                ry *= 1.5
                rx *= 1.5
                tok_fg = inside(tok_rows[:, None], tok_cols[None, :])

            fg_rows = np.flatnonzero(tok_fg.any(axis=1))
            rmin, rmax = fg_rows[0], fg_rows[-1]
            extent = max(1, rmax - rmin + 1)
            band = np.minimum(
                n_parts - 1, (np.arange(gh) - rmin) * n_parts // extent
            ).clip(0)

            tokens = np.empty((gh, gw, spec.dim), dtype=np.float64)
            tokens[:] = bg_dir
            for b in range(n_parts):
                sel = tok_fg & (band[:, None] == b)
                tokens[sel] = class_dir(c) + _PART_WEIGHT * part_dir(c, b)
            tokens += pos_field
            if spec.noise > 0:
                tokens += (
                    spec.noise
                    / np.sqrt(spec.dim)
                    * rng.standard_normal((gh, gw, spec.dim))
                )

            cls_vector = tokens[tok_fg].mean(axis=0).astype(np.float32)
            mask_values = inside(pix_y, pix_x).astype(np.uint8)

            image_id = f"{spec.split}-c{c}-{idx:03d}"
            grids.append(
                TokenGrid(
                    image_id=image_id,
                    tokens=tokens.astype(np.float32),
                    orig_h=orig_h,
                    orig_w=orig_w,
                    patch_size=spec.patch_size,
                    cls_vector=cls_vector,
                ).validate()
            )
            masks.append(ForegroundMask(image_id=image_id, values=mask_values).validate())
            image_classes[image_id] = c

    return grids, masks, class_names, image_classes


# ---------------------------------------------------------------------------
# optional raster images for the renderer


def write_png(path: str | Path, rgb: np.ndarray) -> None:
    """Minimal deterministic 8-bit RGB PNG writer (stdlib zlib only)."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w = rgb.shape[:2]
    raw = b"".join(b"\x00" + rgb[i].tobytes() for i in range(h))

    def chunk(tag: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + tag
            + data
            + struct.pack(">I", zlib.crc32(tag + data))
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    blob = (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw, 9))
        + chunk(b"IEND", b"")
    )
    Path(path).write_bytes(blob)


_CLASS_COLORS = np.array(
    [
        [205, 92, 92],
        [70, 130, 180],
        [85, 160, 90],
        [190, 150, 60],
        [140, 100, 185],
        [60, 170, 170],
    ],
    dtype=np.float64,
)


def render_synth_image(mask: ForegroundMask, class_label: int, parts: int = 3) -> np.ndarray:
    """Flat illustrative raster: class-colored blob with banded shading."""
    h, w = mask.values.shape
    rgb = np.full((h, w, 3), 42.0)
    fg = mask.values == 1
    if fg.any():
        base = _CLASS_COLORS[class_label % len(_CLASS_COLORS)]
        rows = np.flatnonzero(fg.any(axis=1))
        rmin, rmax = rows[0], rows[-1]
        extent = max(1, rmax - rmin + 1)
        band = np.minimum(parts - 1, (np.arange(h) - rmin) * parts // extent).clip(0)
        shade = 0.65 + 0.35 * band / max(1, parts - 1)
        fg_rows = np.where(fg)[0]
        rgb[fg] = base[None, :] * shade[fg_rows][:, None]
    return rgb.astype(np.uint8)


def write_synth_container(
    spec: SynthSpec,
    path: str | Path,
    images_dir: str | Path | None = None,
) -> None:
    """Generate a dataset and persist it; optionally emit PNGs for rendering."""
    grids, masks, class_names, image_classes = generate_dataset(spec)
    image_paths = {}
    if images_dir is not None:
        images_dir = Path(images_dir)
        images_dir.mkdir(parents=True, exist_ok=True)
        for m in masks:
            rgb = render_synth_image(m, image_classes[m.image_id], spec.parts)
            png_path = images_dir / f"{m.image_id}.png"
            write_png(png_path, rgb)
            image_paths[m.image_id] = f"{m.image_id}.png"
    write_container(
        grids,
        masks,
        path,
        class_names=class_names,
        image_classes=image_classes,
        image_paths=image_paths,
        extra={
            "encoder_id": f"synthetic-vit-d{spec.dim}",
            "split": spec.split,
            "noise": spec.noise,
        },
    )
