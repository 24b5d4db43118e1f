"""Pipeline configuration: defaults, JSON parsing and the gallery fingerprint.

The fingerprint covers every field that changes what keypoints a gallery
contains (segmentation, resampling, selection, seed, encoder).  Query-time
knobs (``j_prototypes``, ``per_class`` is baked into the gallery itself)
are echoed in reports but a different J may be used against the same
gallery.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

SELECTION_STRATEGIES = ("kmeans-medoid", "random")

# Fields hashed into the gallery fingerprint, in hash order.
_FINGERPRINT_FIELDS = (
    "n_segments",
    "scale_factor",
    "compactness",
    "max_iters",
    "distance",
    "strategy",
    "seed",
    "encoder_id",
)


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved configuration for the whole keypoint pipeline."""

    n_segments: int = 8
    per_class: int = 10
    j_prototypes: int = 40
    scale_factor: int = 4
    compactness: float = 1.0
    max_iters: int = 10
    distance: str = "cosine"
    strategy: str = "kmeans-medoid"
    seed: int = 0
    encoder_id: str = "unspecified"

    def validate(self) -> "PipelineConfig":
        if self.n_segments < 1:
            raise ValidationError("n_segments must be >= 1")
        if self.per_class < 1:
            raise ValidationError("per_class must be >= 1")
        if self.j_prototypes < 1:
            raise ValidationError("j_prototypes must be >= 1")
        if self.scale_factor < 1:
            raise ValidationError("scale_factor must be >= 1")
        if self.compactness < 0:
            raise ValidationError("compactness must be >= 0")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.distance != "cosine":
            raise ValidationError(f"unsupported distance measure: {self.distance!r}")
        if self.strategy not in SELECTION_STRATEGIES:
            raise ValidationError(
                f"unknown selection strategy {self.strategy!r}; "
                f"expected one of {SELECTION_STRATEGIES}"
            )
        return self

    def fingerprint(self) -> str:
        """Deterministic hash over the fields that shape gallery contents."""
        payload = {name: getattr(self, name) for name in _FINGERPRINT_FIELDS}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes).validate()

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path: str | Path) -> PipelineConfig:
    """Read a JSON config file; missing keys fall back to defaults.

    Parse failures report the offending line number.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ValidationError("config root must be a JSON object")
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**raw).validate()
