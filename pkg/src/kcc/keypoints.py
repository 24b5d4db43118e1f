"""Working-resolution resampling and keypoint extraction.

Token grids are upsampled bilinearly (align-corners: sample points map
corner to corner) and foreground masks are downsampled by nearest
neighbor onto a common working resolution.  A keypoint is the center of
a foreground segment together with the mean token feature over the
segment's pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import ForegroundMask, TokenGrid
from .errors import ValidationError


@dataclass
class WorkingGrid:
    """Co-registered feature field and binary mask at the working resolution."""

    features: np.ndarray  # [work_h, work_w, dim] float32
    mask: np.ndarray  # [work_h, work_w] uint8 in {0, 1}
    image_id: str
    orig_h: int
    orig_w: int

    @property
    def work_h(self) -> int:
        return self.features.shape[0]

    @property
    def work_w(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[2]


@dataclass
class SegmentMap:
    """Foreground partition: label 0 is background, labels 1..n_actual are segments."""

    labels: np.ndarray  # [work_h, work_w] int32
    n_actual: int
    requested: int


@dataclass
class Keypoint:
    """Center of one segment with its mean token representation."""

    segment_id: int
    representation: np.ndarray  # [dim] float32
    pixel_count: int
    centroid_work: tuple[float, float]  # (row, col) at working resolution
    centroid_input: tuple[float, float]  # (row, col) in original pixel space
    image_id: str
    class_label: int | None = None


def choose_working_resolution(grid: TokenGrid, scale_factor: int) -> tuple[int, int]:
    """Token resolution times scale_factor, clamped to the input image size."""
    if scale_factor < 1:
        raise ValidationError("scale_factor must be >= 1")
    work_h = min(grid.grid_h * scale_factor, grid.orig_h)
    work_w = min(grid.grid_w * scale_factor, grid.orig_w)
    return work_h, work_w


def _align_corners_coords(n_out: int, n_in: int) -> np.ndarray:
    """Source coordinates for each output index, corner-to-corner mapping."""
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    return np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)


def bilinear_resize(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a [h, w, d] array with align-corners sampling.

    Interpolation runs in float64 and the result is cast back to float32,
    so constant fields are reproduced exactly and outputs stay within the
    per-channel input range.
    """
    in_h, in_w = values.shape[:2]
    src = values.astype(np.float64)

    rows = _align_corners_coords(out_h, in_h)
    cols = _align_corners_coords(out_w, in_w)

    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    r0 = np.clip(r0, 0, in_h - 1)
    c0 = np.clip(c0, 0, in_w - 1)
    r1 = np.minimum(r0 + 1, in_h - 1)
    c1 = np.minimum(c0 + 1, in_w - 1)
    wr = (rows - r0)[:, None, None]
    wc = (cols - c0)[None, :, None]

    top = src[r0][:, c0] * (1.0 - wc) + src[r0][:, c1] * wc
    bot = src[r1][:, c0] * (1.0 - wc) + src[r1][:, c1] * wc
    out = top * (1.0 - wr) + bot * wr
    return out.astype(np.float32)


def nearest_resize(values: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of a 2-D array, align-corners sampling."""
    in_h, in_w = values.shape
    rows = np.rint(_align_corners_coords(out_h, in_h)).astype(np.int64)
    cols = np.rint(_align_corners_coords(out_w, in_w)).astype(np.int64)
    rows = np.clip(rows, 0, in_h - 1)
    cols = np.clip(cols, 0, in_w - 1)
    return values[np.ix_(rows, cols)]


def resample(grid: TokenGrid, mask: ForegroundMask, work_h: int, work_w: int) -> WorkingGrid:
    """Bring tokens (bilinear up) and mask (NN down) to the working resolution."""
    if grid.image_id != mask.image_id:
        raise ValidationError(
            f"grid/mask image_id mismatch: {grid.image_id!r} vs {mask.image_id!r}"
        )
    if not (grid.grid_h <= work_h <= grid.orig_h):
        raise ValidationError(
            f"work_h={work_h} outside [{grid.grid_h}, {grid.orig_h}]"
        )
    if not (grid.grid_w <= work_w <= grid.orig_w):
        raise ValidationError(
            f"work_w={work_w} outside [{grid.grid_w}, {grid.orig_w}]"
        )
    features = bilinear_resize(grid.tokens, work_h, work_w)
    small_mask = nearest_resize(mask.values, work_h, work_w)
    return WorkingGrid(
        features=features,
        mask=np.ascontiguousarray(small_mask, dtype=np.uint8),
        image_id=grid.image_id,
        orig_h=grid.orig_h,
        orig_w=grid.orig_w,
    )


def extract_keypoints(
    seg: SegmentMap,
    work: WorkingGrid,
    grid: TokenGrid,
    class_label: int | None = None,
) -> list[Keypoint]:
    """One keypoint per realized segment: mean feature plus segment center.

    The center is the arithmetic mean of member pixel coordinates; if that
    mean does not land on the segment (non-convex shapes) it is snapped to
    the nearest member pixel, ties broken in row-major order.
    """
    if seg.labels.shape != work.mask.shape:
        raise ValidationError("segment map and working grid are not co-registered")

    feats = work.features.astype(np.float64)
    scale_r = grid.orig_h / work.work_h
    scale_c = grid.orig_w / work.work_w

    keypoints = []
    for seg_id in range(1, seg.n_actual + 1):
        member = seg.labels == seg_id
        coords = np.argwhere(member)  # row-major order
        if coords.shape[0] == 0:
            raise ValidationError(f"segment {seg_id} has no pixels")
        mean_rc = coords.mean(axis=0)
        # Containment test for the fractional mean: its nearest lattice pixel
        # (round half up) must belong to the segment, else snap.
        near_r = int(np.floor(mean_rc[0] + 0.5))
        near_c = int(np.floor(mean_rc[1] + 0.5))
        near_r = min(max(near_r, 0), work.work_h - 1)
        near_c = min(max(near_c, 0), work.work_w - 1)
        if member[near_r, near_c]:
            center = (float(mean_rc[0]), float(mean_rc[1]))
        else:
            d2 = ((coords - mean_rc) ** 2).sum(axis=1)
            best = coords[int(np.argmin(d2))]  # first minimum = row-major tie-break
            center = (float(best[0]), float(best[1]))

        representation = feats[member].mean(axis=0).astype(np.float32)
        keypoints.append(
            Keypoint(
                segment_id=seg_id,
                representation=representation,
                pixel_count=int(coords.shape[0]),
                centroid_work=center,
                centroid_input=(center[0] * scale_r, center[1] * scale_c),
                image_id=work.image_id,
                class_label=class_label,
            )
        )
    return keypoints
