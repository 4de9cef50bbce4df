"""Turns raw multi-level feature maps into scorer inputs.

Two representations come out of this stage:

* :class:`EmbeddingVector` -- per-level global average pooling followed by
  concatenation, used by the KNN and Mahalanobis scorers.
* :class:`AlignedPatchGrid` -- per-location concatenation after aligning
  all levels onto the largest spatial grid, used by the per-patch scorer.

Alignment upsamples smaller levels by nearest-neighbor index replication
(source index = floor(target_index * src_size / tgt_size)), which keeps
feature values exact instead of blending them. All outputs are float64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnknownLevel
from .store import FeatureMapSet

DEFAULT_LEVELS = ("block4", "block6", "block7")


@dataclass(frozen=True)
class EmbeddingVector:
    """Pooled, concatenated descriptor. ``level_slices`` maps each level
    name to its (start, stop) range inside ``values``."""

    values: np.ndarray
    level_slices: dict[str, tuple[int, int]]

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class AlignedPatchGrid:
    """Concatenated spatial embeddings, shape (D, H0, W0)."""

    tensor: np.ndarray
    level_slices: dict[str, tuple[int, int]]

    @property
    def grid(self) -> tuple[int, int]:
        return self.tensor.shape[1], self.tensor.shape[2]


def _resolve_levels(fm: FeatureMapSet, levels) -> list[str]:
    names = list(levels) if levels is not None else list(fm.levels)
    for name in names:
        if name not in fm.levels:
            raise UnknownLevel(f"image {fm.image_id!r} has no level {name!r} (has {list(fm.levels)})")
    return names


def global_average_pool(fm: FeatureMapSet, levels=None) -> EmbeddingVector:
    """Spatial mean per channel for each level, concatenated in the
    requested level order."""
    names = _resolve_levels(fm, levels)
    parts = []
    slices: dict[str, tuple[int, int]] = {}
    start = 0
    for name in names:
        pooled = np.asarray(fm.levels[name], dtype=np.float64).mean(axis=(1, 2))
        parts.append(pooled)
        slices[name] = (start, start + pooled.shape[0])
        start += pooled.shape[0]
    return EmbeddingVector(values=np.concatenate(parts), level_slices=slices)


def pool_level(fm: FeatureMapSet, level: str) -> np.ndarray:
    """Spatial mean per channel for a single level, shape (C,)."""
    if level not in fm.levels:
        raise UnknownLevel(f"image {fm.image_id!r} has no level {level!r}")
    return np.asarray(fm.levels[level], dtype=np.float64).mean(axis=(1, 2))


def nearest_index_map(src_size: int, tgt_size: int) -> np.ndarray:
    """floor(i * src / tgt) for i in [0, tgt)."""
    return (np.arange(tgt_size) * src_size // tgt_size).astype(np.intp)


def align_concat(fm: FeatureMapSet, levels=None) -> AlignedPatchGrid:
    """Align every requested level to the largest spatial grid and stack
    the channels at each location.

    The target grid is the (H, W) of the level with the most spatial
    positions (ties broken by requested order); other levels are expanded
    by nearest-neighbor replication.
    """
    names = _resolve_levels(fm, levels)
    shapes = [fm.levels[n].shape for n in names]
    target = max(range(len(names)), key=lambda i: shapes[i][1] * shapes[i][2])
    h0, w0 = shapes[target][1], shapes[target][2]

    parts = []
    slices: dict[str, tuple[int, int]] = {}
    start = 0
    for name in names:
        tensor = np.asarray(fm.levels[name], dtype=np.float64)
        c, h, w = tensor.shape
        if (h, w) != (h0, w0):
            rows = nearest_index_map(h, h0)
            cols = nearest_index_map(w, w0)
            tensor = tensor[:, rows][:, :, cols]
        parts.append(tensor)
        slices[name] = (start, start + c)
        start += c
    return AlignedPatchGrid(tensor=np.concatenate(parts, axis=0), level_slices=slices)
