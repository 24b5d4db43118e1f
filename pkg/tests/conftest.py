from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from kcc import ForegroundMask, TokenGrid
from kcc.keypoints import WorkingGrid


def make_grid(
    image_id: str = "img",
    tokens: np.ndarray | None = None,
    grid: int = 4,
    dim: int = 3,
    orig: int = 32,
    patch: int = 8,
    cls_vector: np.ndarray | None = None,
    seed: int = 0,
) -> TokenGrid:
    if tokens is None:
        tokens = np.random.default_rng(seed).normal(size=(grid, grid, dim))
    return TokenGrid(
        image_id=image_id,
        tokens=np.asarray(tokens, dtype=np.float32),
        orig_h=orig,
        orig_w=orig,
        patch_size=patch,
        cls_vector=cls_vector,
    )


def make_mask(image_id: str = "img", size: int = 32, fill: int = 1) -> ForegroundMask:
    return ForegroundMask(
        image_id=image_id, values=np.full((size, size), fill, dtype=np.uint8)
    )


def random_working_grid(rng: np.random.Generator, min_side: int = 4,
                        max_side: int = 40, max_dim: int = 12) -> WorkingGrid:
    h = int(rng.integers(min_side, max_side))
    w = int(rng.integers(min_side, max_side))
    d = int(rng.integers(1, max_dim))
    mask = (rng.random((h, w)) < rng.uniform(0.1, 0.9)).astype(np.uint8)
    feats = rng.normal(size=(h, w, d)).astype(np.float32)
    return WorkingGrid(features=feats, mask=mask, image_id="rand", orig_h=h, orig_w=w)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
