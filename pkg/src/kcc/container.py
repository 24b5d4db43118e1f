"""Bit-exact on-disk container for token grids and foreground masks.

Layout (all integers little-endian):

    bytes 0..3    magic (``KCC1`` for datasets, reused with other magics)
    bytes 4..7    uint32 manifest byte length
    bytes 8..11   uint32 CRC-32 of the manifest bytes
    bytes 12..    UTF-8 JSON manifest
    afterwards    payload: raw float32 (row-major) and uint8 entries

Entry offsets in the manifest are relative to the payload start so the
manifest text never depends on its own length.  Every entry carries a
CRC-32; any single-byte payload corruption is detected on read.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ChecksumError,
    TruncatedFileError,
    ValidationError,
    VersionError,
)

MAGIC_DATASET = b"KCC1"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sII")
_ELEMENT_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("|u1")}


# ---------------------------------------------------------------------------
# domain types


@dataclass
class TokenGrid:
    """Spatial grid of ViT patch tokens for one image, plus optional class token."""

    image_id: str
    tokens: np.ndarray  # [grid_h, grid_w, dim] float32
    orig_h: int
    orig_w: int
    patch_size: int
    cls_vector: np.ndarray | None = None  # [dim] float32

    def __post_init__(self):
        self.tokens = np.ascontiguousarray(self.tokens, dtype=np.float32)
        if self.cls_vector is not None:
            self.cls_vector = np.ascontiguousarray(self.cls_vector, dtype=np.float32)

    @property
    def grid_h(self) -> int:
        return self.tokens.shape[0]

    @property
    def grid_w(self) -> int:
        return self.tokens.shape[1]

    @property
    def dim(self) -> int:
        return self.tokens.shape[2]

    def validate(self) -> "TokenGrid":
        if not self.image_id:
            raise ValidationError("token grid needs a non-empty image_id")
        if self.tokens.ndim != 3:
            raise ValidationError(
                f"{self.image_id}: tokens must be [grid_h, grid_w, dim], "
                f"got shape {self.tokens.shape}"
            )
        gh, gw, d = self.tokens.shape
        if gh < 1 or gw < 1 or d < 1:
            raise ValidationError(f"{self.image_id}: empty token grid")
        if not np.all(np.isfinite(self.tokens)):
            raise ValidationError(f"{self.image_id}: non-finite token")
        if self.cls_vector is not None:
            if self.cls_vector.shape != (d,):
                raise ValidationError(
                    f"{self.image_id}: cls_vector shape {self.cls_vector.shape} "
                    f"does not match token dim {d}"
                )
            if not np.all(np.isfinite(self.cls_vector)):
                raise ValidationError(f"{self.image_id}: non-finite cls_vector")
        if self.patch_size < 1:
            raise ValidationError(f"{self.image_id}: patch_size must be >= 1")
        if self.orig_h < 1 or self.orig_w < 1:
            raise ValidationError(f"{self.image_id}: image dimensions must be >= 1")
        # The grid must cover the image (allowing one partial patch per axis).
        if gh * self.patch_size > self.orig_h + self.patch_size:
            raise ValidationError(f"{self.image_id}: token grid overruns image height")
        if gw * self.patch_size > self.orig_w + self.patch_size:
            raise ValidationError(f"{self.image_id}: token grid overruns image width")
        return self

    def equals(self, other: "TokenGrid") -> bool:
        if (self.image_id, self.orig_h, self.orig_w, self.patch_size) != (
            other.image_id,
            other.orig_h,
            other.orig_w,
            other.patch_size,
        ):
            return False
        if self.tokens.shape != other.tokens.shape:
            return False
        if self.tokens.tobytes() != other.tokens.tobytes():
            return False
        if (self.cls_vector is None) != (other.cls_vector is None):
            return False
        if self.cls_vector is not None:
            return self.cls_vector.tobytes() == other.cls_vector.tobytes()
        return True


@dataclass
class ForegroundMask:
    """Binary pixel mask marking the object of interest in one image."""

    image_id: str
    values: np.ndarray  # [height, width] uint8 in {0, 1}

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.uint8)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def validate(self) -> "ForegroundMask":
        if not self.image_id:
            raise ValidationError("mask needs a non-empty image_id")
        if self.values.ndim != 2:
            raise ValidationError(
                f"{self.image_id}: mask must be 2-D, got shape {self.values.shape}"
            )
        if self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValidationError(f"{self.image_id}: empty mask")
        if not np.isin(self.values, (0, 1)).all():
            raise ValidationError(f"{self.image_id}: mask values must be exactly 0 or 1")
        return self

    def equals(self, other: "ForegroundMask") -> bool:
        return (
            self.image_id == other.image_id
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )


@dataclass
class ManifestEntry:
    name: str
    shape: tuple[int, ...]
    element_type: str  # "f32" | "u8"
    byte_offset: int
    byte_length: int
    crc32: int


@dataclass
class ContainerManifest:
    """Parsed header of a container file: entry table plus dataset metadata."""

    format_version: int
    entries: list[ManifestEntry]
    class_names: list[str] = field(default_factory=list)
    image_classes: dict[str, int] = field(default_factory=dict)
    image_paths: dict[str, str] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# low-level block I/O (shared with the gallery format)


def write_blocks(path: str | Path, magic: bytes, meta: dict,
                 arrays: list[tuple[str, np.ndarray]]) -> None:
    """Write a manifest+payload file.  `meta` must be JSON-serializable."""
    entries = []
    payload = bytearray()
    for name, arr in arrays:
        if arr.dtype == np.float32:
            etype = "f32"
        elif arr.dtype == np.uint8:
            etype = "u8"
        else:
            raise ValidationError(f"entry {name!r}: unsupported dtype {arr.dtype}")
        blob = np.ascontiguousarray(arr).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "element_type": etype,
                "byte_offset": len(payload),
                "byte_length": len(blob),
                "crc32": zlib.crc32(blob),
            }
        )
        payload.extend(blob)

    manifest = dict(meta)
    manifest["format_version"] = FORMAT_VERSION
    manifest["entries"] = entries
    manifest_bytes = json.dumps(
        manifest, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")

    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(magic, len(manifest_bytes), zlib.crc32(manifest_bytes)))
        fh.write(manifest_bytes)
        fh.write(bytes(payload))


def read_blocks(path: str | Path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    """Read and fully verify a manifest+payload file written by write_blocks."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: file shorter than header")
    got_magic, manifest_len, manifest_crc = _HEADER.unpack_from(data, 0)
    if got_magic != magic:
        raise ValidationError(
            f"{path}: bad magic bytes {got_magic!r}, expected {magic!r}"
        )
    manifest_end = _HEADER.size + manifest_len
    if len(data) < manifest_end:
        raise TruncatedFileError(f"{path}: file ends inside the manifest")
    manifest_bytes = data[_HEADER.size:manifest_end]
    if zlib.crc32(manifest_bytes) != manifest_crc:
        raise ChecksumError(f"{path}: manifest checksum mismatch")
    try:
        manifest = json.loads(manifest_bytes.decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValidationError(f"{path}: manifest is not valid JSON: {exc}") from exc

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(
            f"{path}: unknown format_version {version!r} (this build reads "
            f"version {FORMAT_VERSION})"
        )

    payload = data[manifest_end:]
    arrays: dict[str, np.ndarray] = {}
    spans: list[tuple[int, int, str]] = []
    for ent in manifest["entries"]:
        name = ent["name"]
        off, length = ent["byte_offset"], ent["byte_length"]
        if off < 0 or length < 0 or off + length > len(payload):
            raise TruncatedFileError(
                f"{path}: entry {name!r} extends past end of file"
            )
        spans.append((off, off + length, name))
        blob = payload[off:off + length]
        if zlib.crc32(blob) != ent["crc32"]:
            raise ChecksumError(f"{path}: checksum mismatch in entry {name!r}")
        dtype = _ELEMENT_DTYPES.get(ent["element_type"])
        if dtype is None:
            raise ValidationError(
                f"{path}: entry {name!r} has unknown element_type "
                f"{ent['element_type']!r}"
            )
        shape = tuple(ent["shape"])
        expected = int(np.prod(shape)) * dtype.itemsize if shape else dtype.itemsize
        if expected != length:
            raise ValidationError(
                f"{path}: entry {name!r} byte length {length} inconsistent with "
                f"shape {shape}"
            )
        arrays[name] = np.frombuffer(blob, dtype=dtype).reshape(shape)

    spans.sort()
    for (_, end_a, name_a), (start_b, _, name_b) in zip(spans, spans[1:]):
        if start_b < end_a:
            raise ValidationError(
                f"{path}: entries {name_a!r} and {name_b!r} overlap"
            )
    return manifest, arrays


# ---------------------------------------------------------------------------
# dataset container


def write_container(
    grids: list[TokenGrid],
    masks: list[ForegroundMask],
    path: str | Path,
    *,
    class_names: list[str] | None = None,
    image_classes: dict[str, int] | None = None,
    image_paths: dict[str, str] | None = None,
    extra: dict | None = None,
) -> None:
    """Persist a dataset; rejects any invariant violation before writing."""
    if not grids:
        raise ValidationError("empty dataset: at least one token grid is required")
    ids = [g.image_id for g in grids]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate image_id among token grids")
    mask_ids = [m.image_id for m in masks]
    if len(set(mask_ids)) != len(mask_ids):
        raise ValidationError("duplicate image_id among masks")

    by_id = {}
    for g in grids:
        g.validate()
        by_id[g.image_id] = g
    for m in masks:
        m.validate()
        g = by_id.get(m.image_id)
        if g is None:
            raise ValidationError(f"mask {m.image_id!r} has no matching token grid")
        if (m.height, m.width) != (g.orig_h, g.orig_w):
            raise ValidationError(
                f"mask {m.image_id!r} is {m.height}x{m.width} but its grid says "
                f"the image is {g.orig_h}x{g.orig_w}"
            )
    if image_classes:
        n_classes = len(class_names) if class_names else 0
        for img_id, label in image_classes.items():
            if img_id not in by_id:
                raise ValidationError(f"class map references unknown image {img_id!r}")
            if not isinstance(label, int) or label < 0:
                raise ValidationError(f"class id for {img_id!r} must be a dense int >= 0")
            if class_names and label >= n_classes:
                raise ValidationError(
                    f"class id {label} for {img_id!r} outside the name table"
                )

    arrays: list[tuple[str, np.ndarray]] = []
    grid_meta = []
    for g in grids:
        arrays.append((f"tokens:{g.image_id}", g.tokens))
        if g.cls_vector is not None:
            arrays.append((f"cls:{g.image_id}", g.cls_vector))
        grid_meta.append(
            {
                "image_id": g.image_id,
                "grid_h": g.grid_h,
                "grid_w": g.grid_w,
                "dim": g.dim,
                "orig_h": g.orig_h,
                "orig_w": g.orig_w,
                "patch_size": g.patch_size,
                "has_cls": g.cls_vector is not None,
            }
        )
    mask_meta = []
    for m in masks:
        arrays.append((f"mask:{m.image_id}", m.values))
        mask_meta.append(
            {"image_id": m.image_id, "height": m.height, "width": m.width}
        )

    meta = {
        "kind": "dataset",
        "grids": grid_meta,
        "masks": mask_meta,
        "class_names": list(class_names) if class_names else [],
        "image_classes": dict(image_classes) if image_classes else {},
        "image_paths": dict(image_paths) if image_paths else {},
        "extra": dict(extra) if extra else {},
    }
    write_blocks(path, MAGIC_DATASET, meta, arrays)


def read_container(
    path: str | Path,
) -> tuple[list[TokenGrid], list[ForegroundMask], ContainerManifest]:
    """Load a dataset container, verifying checksums and type invariants."""
    meta, arrays = read_blocks(path, MAGIC_DATASET)

    grids = []
    for gm in meta.get("grids", []):
        image_id = gm["image_id"]
        tokens = arrays.get(f"tokens:{image_id}")
        if tokens is None:
            raise ValidationError(f"{path}: missing tokens entry for {image_id!r}")
        cls_vec = arrays.get(f"cls:{image_id}") if gm.get("has_cls") else None
        grid = TokenGrid(
            image_id=image_id,
            tokens=tokens.reshape(gm["grid_h"], gm["grid_w"], gm["dim"]),
            orig_h=gm["orig_h"],
            orig_w=gm["orig_w"],
            patch_size=gm["patch_size"],
            cls_vector=cls_vec,
        )
        grids.append(grid.validate())

    masks = []
    for mm in meta.get("masks", []):
        image_id = mm["image_id"]
        values = arrays.get(f"mask:{image_id}")
        if values is None:
            raise ValidationError(f"{path}: missing mask entry for {image_id!r}")
        masks.append(ForegroundMask(image_id=image_id, values=values).validate())

    entries = [
        ManifestEntry(
            name=e["name"],
            shape=tuple(e["shape"]),
            element_type=e["element_type"],
            byte_offset=e["byte_offset"],
            byte_length=e["byte_length"],
            crc32=e["crc32"],
        )
        for e in meta["entries"]
    ]
    manifest = ContainerManifest(
        format_version=meta["format_version"],
        entries=entries,
        class_names=list(meta.get("class_names", [])),
        image_classes={k: int(v) for k, v in meta.get("image_classes", {}).items()},
        image_paths=dict(meta.get("image_paths", {})),
        extra=dict(meta.get("extra", {})),
    )

    grid_ids = {g.image_id for g in grids}
    for m in masks:
        if m.image_id not in grid_ids:
            raise ValidationError(f"{path}: mask {m.image_id!r} has no token grid")
    return grids, masks, manifest


def payload_start(path: str | Path) -> int:
    """Byte offset where the payload region begins (used by corruption tests)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
    _, manifest_len, _ = _HEADER.unpack(header)
    return _HEADER.size + manifest_len
