"""Training-free self-explainable image classification over ViT token grids.

Extract keypoints from foreground-restricted segmentations of token
feature fields, match query keypoints against precomputed prototype
keypoints by mutual nearest neighbors, classify by counting matches, and
render the matched keypoints as the explanation.
"""

__version__ = "0.1.0"

from .classifier import Prediction, count_scores, explanation_complexity, predict
from .config import PipelineConfig, load_config
from .container import (
    ContainerManifest,
    ForegroundMask,
    TokenGrid,
    read_container,
    write_container,
)
from .errors import (
    ChecksumError,
    ConfigDriftError,
    ContainerFormatError,
    KCCError,
    NoForegroundError,
    TruncatedFileError,
    ValidationError,
    VersionError,
)
from .evaluate import EvalReport, SweepGrid, evaluate_dataset, run_sweep
from .gallery import (
    PrototypeGallery,
    PrototypeRecord,
    build_gallery,
    compute_global_vector,
    load_gallery,
    save_gallery,
    select_prototypes,
)
from .keypoints import (
    Keypoint,
    SegmentMap,
    WorkingGrid,
    choose_working_resolution,
    extract_keypoints,
    resample,
)
from .matching import Match, MatchSet, cosine_distance, mutual_nn, prune_prototypes
from .render import RenderOptions, render_explanation
from .slic import slic_segment
from .synth import SynthSpec, generate_dataset, write_synth_container

__all__ = [
    "ChecksumError",
    "ConfigDriftError",
    "ContainerFormatError",
    "ContainerManifest",
    "EvalReport",
    "ForegroundMask",
    "KCCError",
    "Keypoint",
    "Match",
    "MatchSet",
    "NoForegroundError",
    "PipelineConfig",
    "Prediction",
    "PrototypeGallery",
    "PrototypeRecord",
    "RenderOptions",
    "SegmentMap",
    "SweepGrid",
    "SynthSpec",
    "TokenGrid",
    "TruncatedFileError",
    "ValidationError",
    "VersionError",
    "WorkingGrid",
    "build_gallery",
    "choose_working_resolution",
    "compute_global_vector",
    "cosine_distance",
    "count_scores",
    "evaluate_dataset",
    "explanation_complexity",
    "extract_keypoints",
    "generate_dataset",
    "load_config",
    "load_gallery",
    "mutual_nn",
    "predict",
    "prune_prototypes",
    "read_container",
    "render_explanation",
    "resample",
    "run_sweep",
    "save_gallery",
    "select_prototypes",
    "slic_segment",
    "write_container",
    "write_synth_container",
]
