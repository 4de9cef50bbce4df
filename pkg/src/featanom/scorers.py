"""The three anomaly scorers, sharing a fit / score / serialize contract.

* KNN: average of the squared euclidean distances to the k nearest
  training embeddings (squared by definition here; ranks are unaffected
  by the square, raw values are not).
* Mahalanobis: one Gaussian per feature level on pooled embeddings; the
  image score is the sum of per-level Mahalanobis distances.
* Per-patch ("padim"): one Gaussian per spatial location of the aligned,
  concatenated embedding grid; the image score is the maximum local
  distance and the per-location distances form a heatmap.

Fitted models are immutable; scoring is pure and safe to run concurrently.
Models round-trip bit-exactly through ``save_model`` / ``load_model``
(single file: magic bytes, JSON header, raw float64 tensors).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import covariance as cov
from .covariance import GaussianStats
from .errors import DimensionMismatch, EmptyInput, FormatError, UnknownLevel
from .pipeline import AlignedPatchGrid, EmbeddingVector, align_concat, global_average_pool, pool_level
from .store import FeatureMapSet

MODEL_MAGIC = b"FANOMDL1"
MODEL_FORMAT_VERSION = 1

KIND_KNN = "knn"
KIND_MAHALANOBIS = "mahalanobis"
KIND_PADIM = "padim"


# -- model types -----------------------------------------------------------


@dataclass(frozen=True)
class KnnModel:
    train_embeddings: np.ndarray  # (n, D) float64, stored verbatim
    k: int
    levels: tuple[str, ...] = ()
    level_slices: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.train_embeddings.shape[0]
        if not (1 <= self.k <= n):
            raise EmptyInput(f"k={self.k} must satisfy 1 <= k <= n={n}")

    @property
    def n_train(self) -> int:
        return self.train_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.train_embeddings.shape[1]


@dataclass(frozen=True)
class MahalanobisModel:
    per_level: dict[str, GaussianStats]  # insertion order = level order
    estimator: str

    @property
    def levels(self) -> tuple[str, ...]:
        return tuple(self.per_level)


@dataclass(frozen=True)
class PadimModel:
    """Per-location Gaussians stored as stacked arrays.

    ``means`` has shape (H0, W0, D) and ``precisions`` (H0, W0, D, D);
    the covariances are dropped after fitting to halve the footprint.
    ``channel_subset`` holds sorted indices into the concatenated channel
    axis when the optional random channel reduction was used (off by
    default).
    """

    grid: tuple[int, int]
    means: np.ndarray
    precisions: np.ndarray
    shrinkages: np.ndarray
    estimator: str
    n_samples: int
    levels: tuple[str, ...]
    level_slices: dict[str, tuple[int, int]]
    channel_subset: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.means.shape[2]

    def stats_at(self, i: int, j: int) -> GaussianStats:
        return GaussianStats(
            mean=self.means[i, j],
            covariance=None,
            precision=self.precisions[i, j],
            estimator=self.estimator,
            shrinkage=float(self.shrinkages[i, j]),
            n_samples=self.n_samples,
        )


@dataclass(frozen=True)
class ScoreResult:
    image_id: str
    score: float
    heatmap: np.ndarray | None = None


# -- KNN -------------------------------------------------------------------


def _as_embedding_matrix(train) -> tuple[np.ndarray, tuple[str, ...], dict]:
    if isinstance(train, np.ndarray):
        mat = np.asarray(train, dtype=np.float64)
        if mat.ndim != 2:
            raise DimensionMismatch(f"expected (n, D) matrix, got shape {mat.shape}")
        return mat, (), {}
    vectors = list(train)
    if not vectors:
        raise EmptyInput("no training embeddings")
    first = vectors[0]
    mat = np.stack([np.asarray(v.values, dtype=np.float64) for v in vectors])
    return mat, tuple(first.level_slices), dict(first.level_slices)


def knn_fit(train, k: int = 1) -> KnnModel:
    """Store the training embeddings verbatim (duplicates included)."""
    mat, levels, slices = _as_embedding_matrix(train)
    return KnnModel(train_embeddings=mat, k=k, levels=levels, level_slices=slices)


def _query_vector(y, dim: int) -> np.ndarray:
    vec = np.asarray(y.values if isinstance(y, EmbeddingVector) else y, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != dim:
        raise DimensionMismatch(f"query shape {vec.shape} vs model dimension {dim}")
    return vec


def knn_score(model: KnnModel, y) -> float:
    """Mean squared euclidean distance to the k nearest training embeddings.

    Ties at the k-th neighbor break by training insertion index; the k
    selected distances are summed in ascending order.
    """
    vec = _query_vector(y, model.dim)
    d2 = np.sum((model.train_embeddings - vec) ** 2, axis=1)
    order = np.argsort(d2, kind="stable")
    selected = d2[order[: model.k]]
    return float(selected.mean())


def knn_score_batch(model: KnnModel, queries: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Row-wise :func:`knn_score` for an (m, D) query matrix."""
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != model.dim:
        raise DimensionMismatch(f"queries shape {q.shape} vs model dimension {model.dim}")
    out = np.empty(q.shape[0])
    for lo in range(0, q.shape[0], chunk):
        block = q[lo : lo + chunk]
        d2 = np.sum((block[:, None, :] - model.train_embeddings[None, :, :]) ** 2, axis=2)
        d2.sort(axis=1)
        out[lo : lo + chunk] = d2[:, : model.k].mean(axis=1)
    return out


# -- Mahalanobis -----------------------------------------------------------


def maha_fit_arrays(level_arrays: dict[str, np.ndarray], estimator: str = cov.LEDOIT_WOLF) -> MahalanobisModel:
    """Fit one Gaussian per level from already-pooled (n, C) matrices."""
    if not level_arrays:
        raise EmptyInput("no feature levels to fit")
    per_level = {name: cov.fit(mat, estimator) for name, mat in level_arrays.items()}
    return MahalanobisModel(per_level=per_level, estimator=estimator)


def maha_fit(train: list[FeatureMapSet], levels=None, estimator: str = cov.LEDOIT_WOLF) -> MahalanobisModel:
    """Pool each level of every training image and fit level-wise Gaussians."""
    if not train:
        raise EmptyInput("no training feature maps")
    names = list(levels) if levels is not None else list(train[0].levels)
    arrays = {name: np.stack([pool_level(fm, name) for fm in train]) for name in names}
    return maha_fit_arrays(arrays, estimator)


def maha_score(model: MahalanobisModel, y: FeatureMapSet) -> float:
    """Sum of per-level Mahalanobis distances for one image."""
    total = 0.0
    for name, stats in model.per_level.items():
        total += cov.mahalanobis(stats, pool_level(y, name))
    return total


def maha_score_batch(model: MahalanobisModel, level_arrays: dict[str, np.ndarray]) -> np.ndarray:
    """Batch scoring from pooled (m, C) matrices keyed by level name."""
    total: np.ndarray | None = None
    for name, stats in model.per_level.items():
        if name not in level_arrays:
            raise UnknownLevel(f"batch input has no level {name!r}")
        dists = cov.mahalanobis_many(stats, level_arrays[name])
        total = dists if total is None else total + dists
    assert total is not None
    return total


# -- per-patch Gaussians (PaDiM) -------------------------------------------


def padim_fit_grids(
    grids: np.ndarray,
    level_slices: dict[str, tuple[int, int]],
    levels: tuple[str, ...],
    estimator: str = cov.LEDOIT_WOLF,
    n_channels: int | None = None,
    channel_seed: int = 0,
) -> PadimModel:
    """Fit one Gaussian per location of an (n, D, H0, W0) grid stack."""
    if grids.ndim != 4 or grids.shape[0] < 1:
        raise EmptyInput(f"expected non-empty (n, D, H, W) stack, got shape {grids.shape}")
    n, d, h0, w0 = grids.shape

    subset: np.ndarray | None = None
    if n_channels is not None:
        if not (1 <= n_channels <= d):
            raise DimensionMismatch(f"channel subset size {n_channels} out of range for D={d}")
        rng = np.random.default_rng(channel_seed)
        subset = np.sort(rng.choice(d, size=n_channels, replace=False))
        grids = grids[:, subset, :, :]
        d = n_channels

    means = np.empty((h0, w0, d))
    precisions = np.empty((h0, w0, d, d))
    shrinkages = np.zeros((h0, w0))
    for i in range(h0):
        for j in range(w0):
            stats = cov.fit(grids[:, :, i, j], estimator)
            means[i, j] = stats.mean
            precisions[i, j] = stats.precision
            shrinkages[i, j] = stats.shrinkage

    return PadimModel(
        grid=(h0, w0),
        means=means,
        precisions=precisions,
        shrinkages=shrinkages,
        estimator=estimator,
        n_samples=n,
        levels=tuple(levels),
        level_slices=dict(level_slices),
        channel_subset=subset,
    )


def padim_fit(
    train: list[FeatureMapSet],
    levels=None,
    estimator: str = cov.LEDOIT_WOLF,
    n_channels: int | None = None,
    channel_seed: int = 0,
) -> PadimModel:
    if not train:
        raise EmptyInput("no training feature maps")
    aligned = [align_concat(fm, levels) for fm in train]
    first = aligned[0]
    grids = np.stack([a.tensor for a in aligned])
    return padim_fit_grids(
        grids,
        level_slices=first.level_slices,
        levels=tuple(first.level_slices),
        estimator=estimator,
        n_channels=n_channels,
        channel_seed=channel_seed,
    )


def _aligned_for_model(model: PadimModel, y: FeatureMapSet) -> np.ndarray:
    grid = align_concat(y, model.levels)
    tensor = grid.tensor
    if model.channel_subset is not None:
        tensor = tensor[model.channel_subset]
    if tensor.shape != (model.dim, *model.grid):
        raise DimensionMismatch(
            f"image {y.image_id!r} aligns to shape {tensor.shape}, model expects {(model.dim, *model.grid)}"
        )
    return tensor


def padim_heatmap(model: PadimModel, y: FeatureMapSet) -> np.ndarray:
    """Per-location Mahalanobis distances, shape (H0, W0)."""
    tensor = _aligned_for_model(model, y)
    h0, w0 = model.grid
    heatmap = np.empty((h0, w0))
    for i in range(h0):
        for j in range(w0):
            diff = tensor[:, i, j] - model.means[i, j]
            q = float(diff @ model.precisions[i, j] @ diff)
            heatmap[i, j] = np.sqrt(max(q, 0.0))
    return heatmap


def padim_score(model: PadimModel, y: FeatureMapSet) -> ScoreResult:
    """Image score = maximum of the per-location distances."""
    heatmap = padim_heatmap(model, y)
    return ScoreResult(image_id=y.image_id, score=float(heatmap.max()), heatmap=heatmap)


def padim_score_batch(model: PadimModel, grids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Scores and heatmaps for an (m, D, H0, W0) stack of aligned grids."""
    if grids.shape[1:] != (model.dim, *model.grid):
        raise DimensionMismatch(f"grid stack shape {grids.shape[1:]} vs model {(model.dim, *model.grid)}")
    m = grids.shape[0]
    h0, w0 = model.grid
    heatmaps = np.empty((m, h0, w0))
    for i in range(h0):
        for j in range(w0):
            diff = grids[:, :, i, j] - model.means[i, j]
            q = np.einsum("ij,jk,ik->i", diff, model.precisions[i, j], diff)
            heatmaps[:, i, j] = np.sqrt(np.maximum(q, 0.0))
    return heatmaps.reshape(m, -1).max(axis=1), heatmaps


def align_batch(model: PadimModel, images: list[FeatureMapSet]) -> np.ndarray:
    return np.stack([_aligned_for_model(model, fm) for fm in images])


# -- embedding helpers shared by callers ------------------------------------


def pooled_matrix(images: list[FeatureMapSet], levels=None) -> tuple[np.ndarray, dict[str, tuple[int, int]]]:
    """Stack pooled embedding vectors into an (n, D) matrix."""
    if not images:
        raise EmptyInput("no feature maps")
    vectors = [global_average_pool(fm, levels) for fm in images]
    return np.stack([v.values for v in vectors]), dict(vectors[0].level_slices)


# -- serialization -----------------------------------------------------------


def _write_container(path: Path, kind: str, meta: dict, tensors: dict[str, np.ndarray]) -> None:
    records = []
    payload = bytearray()
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr)
        if data.dtype.kind == "f":
            data = data.astype("<f8", copy=False)
        elif data.dtype.kind in "iu":
            data = data.astype("<i8", copy=False)
        else:
            raise FormatError(f"cannot serialize tensor {name!r} of dtype {arr.dtype}")
        raw = data.tobytes()
        records.append(
            {
                "name": name,
                "dtype": str(data.dtype),
                "shape": list(data.shape),
                "offset": len(payload),
                "nbytes": len(raw),
            }
        )
        payload.extend(raw)

    header = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": kind,
        "meta": meta,
        "tensors": records,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(bytes(payload))


def _read_container(path: Path) -> tuple[str, dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MODEL_MAGIC) + 8 or raw[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatError(f"{path} is not a model file (bad magic bytes)")
    header_len = int.from_bytes(raw[len(MODEL_MAGIC) : len(MODEL_MAGIC) + 8], "little")
    start = len(MODEL_MAGIC) + 8
    try:
        header = json.loads(raw[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt model header in {path}: {exc}") from exc
    if header.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"unsupported model format_version {header.get('format_version')!r}")
    payload = raw[start + header_len :]
    tensors: dict[str, np.ndarray] = {}
    for record in header["tensors"]:
        lo, hi = record["offset"], record["offset"] + record["nbytes"]
        if hi > len(payload):
            raise FormatError(f"tensor {record['name']!r} extends past end of {path}")
        tensors[record["name"]] = np.frombuffer(payload[lo:hi], dtype=record["dtype"]).reshape(record["shape"])
    return header["kind"], header.get("meta", {}), tensors


def _slices_to_json(slices: dict[str, tuple[int, int]]) -> list:
    return [[name, lo, hi] for name, (lo, hi) in slices.items()]


def _slices_from_json(items) -> dict[str, tuple[int, int]]:
    return {name: (lo, hi) for name, lo, hi in items}


def save_model(model, path: str | Path, extra_meta: dict | None = None) -> None:
    """Serialize any of the three model kinds to a single file."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    extra = dict(extra_meta or {})
    if isinstance(model, KnnModel):
        meta = {
            "k": model.k,
            "levels": list(model.levels),
            "level_slices": _slices_to_json(model.level_slices),
            **extra,
        }
        _write_container(p, KIND_KNN, meta, {"train_embeddings": model.train_embeddings})
    elif isinstance(model, MahalanobisModel):
        meta = {
            "estimator": model.estimator,
            "levels": list(model.per_level),
            "stats": {
                name: {"shrinkage": s.shrinkage, "n_samples": s.n_samples}
                for name, s in model.per_level.items()
            },
            **extra,
        }
        tensors: dict[str, np.ndarray] = {}
        for name, s in model.per_level.items():
            tensors[f"mean/{name}"] = s.mean
            tensors[f"precision/{name}"] = s.precision
            if s.covariance is not None:
                tensors[f"covariance/{name}"] = s.covariance
        _write_container(p, KIND_MAHALANOBIS, meta, tensors)
    elif isinstance(model, PadimModel):
        meta = {
            "estimator": model.estimator,
            "grid": list(model.grid),
            "n_samples": model.n_samples,
            "levels": list(model.levels),
            "level_slices": _slices_to_json(model.level_slices),
            **extra,
        }
        tensors = {
            "means": model.means,
            "precisions": model.precisions,
            "shrinkages": model.shrinkages,
        }
        if model.channel_subset is not None:
            tensors["channel_subset"] = model.channel_subset
        _write_container(p, KIND_PADIM, meta, tensors)
    else:
        raise FormatError(f"cannot serialize object of type {type(model).__name__}")


def load_model(path: str | Path):
    """Inverse of :func:`save_model`; returns the matching model type."""
    kind, meta, tensors = _read_container(Path(path))
    if kind == KIND_KNN:
        return KnnModel(
            train_embeddings=tensors["train_embeddings"],
            k=int(meta["k"]),
            levels=tuple(meta.get("levels", ())),
            level_slices=_slices_from_json(meta.get("level_slices", [])),
        )
    if kind == KIND_MAHALANOBIS:
        per_level = {}
        for name in meta["levels"]:
            info = meta["stats"][name]
            per_level[name] = GaussianStats(
                mean=tensors[f"mean/{name}"],
                covariance=tensors.get(f"covariance/{name}"),
                precision=tensors[f"precision/{name}"],
                estimator=meta["estimator"],
                shrinkage=float(info["shrinkage"]),
                n_samples=int(info["n_samples"]),
            )
        return MahalanobisModel(per_level=per_level, estimator=meta["estimator"])
    if kind == KIND_PADIM:
        return PadimModel(
            grid=tuple(meta["grid"]),
            means=tensors["means"],
            precisions=tensors["precisions"],
            shrinkages=tensors["shrinkages"],
            estimator=meta["estimator"],
            n_samples=int(meta["n_samples"]),
            levels=tuple(meta["levels"]),
            level_slices=_slices_from_json(meta["level_slices"]),
            channel_subset=tensors.get("channel_subset"),
        )
    raise FormatError(f"unknown model kind {kind!r} in {path}")


def heatmap_to_png(heatmap: np.ndarray, path: str | Path) -> None:
    """Write a min-max normalized 8-bit grayscale PNG of a heatmap."""
    from PIL import Image

    arr = np.asarray(heatmap, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        scaled = (arr - lo) / (hi - lo) * 255.0
    else:
        scaled = np.zeros_like(arr)
    Image.fromarray(np.rint(scaled).astype(np.uint8), mode="L").save(path)
