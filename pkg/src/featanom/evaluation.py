"""ROC-AUC, the low-data robustness protocol, and report aggregation.

The protocol: on a grid of sample sizes, draw N training images without
replacement, fit every configured method on exactly those images, score
the full test split, and repeat M times per N. The draw depends only on
(master_seed, category, N, replicate) -- never on the method -- so all
methods see the same samples, and reruns reproduce the same reports
byte for byte. Embeddings are computed once up front; each fit touches
only the cheap statistics on top of them.

Robustness is summarized by the area under the curve of AUC versus the
fraction of the full training set used, normalized so a constant AUC c
integrates to c; that makes the number comparable across categories with
different training-set sizes.
"""
from __future__ import annotations

import hashlib
import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import covariance as cov
from . import scorers
from .errors import EmptyInput, FormatError, UndefinedMetric
from .pipeline import align_concat
from .store import LABEL_ANOMALOUS, LABEL_NORMAL, EmbeddingDataset, is_augmented_id
from .svgplot import render_line_plot

TEXTURE_CATEGORIES = ("carpet", "grid", "leather", "tile", "wood")


# -- metrics -----------------------------------------------------------------


def _as_anomalous_mask(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if isinstance(lab, str):
            if lab not in (LABEL_NORMAL, LABEL_ANOMALOUS):
                raise FormatError(f"unknown label {lab!r}")
            out.append(lab == LABEL_ANOMALOUS)
        else:
            out.append(bool(lab))
    return np.asarray(out, dtype=bool)


def roc_auc(scores, labels) -> float:
    """Image-level ROC-AUC via the rank (Mann-Whitney) formulation.

    Equal scores across the class boundary earn 0.5 credit, which the
    tie-corrected average ranks implement exactly.
    """
    s = np.asarray(scores, dtype=np.float64)
    anom = _as_anomalous_mask(labels)
    if s.shape[0] != anom.shape[0]:
        raise FormatError(f"{s.shape[0]} scores vs {anom.shape[0]} labels")
    n_pos = int(anom.sum())
    n_neg = int((~anom).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("ROC-AUC needs at least one normal and one anomalous sample")

    n = s.shape[0]
    order = np.argsort(s, kind="mergesort")
    inv = np.empty(n, dtype=np.intp)
    inv[order] = np.arange(n)
    sorted_s = s[order]
    boundaries = np.r_[True, sorted_s[1:] != sorted_s[:-1]]
    group = np.cumsum(boundaries) - 1
    starts = np.flatnonzero(boundaries)
    ends = np.r_[starts[1:], n]
    avg_rank = (starts + ends + 1) / 2.0  # 1-based average rank per tie group
    ranks = avg_rank[group][inv]

    rank_sum = float(ranks[anom].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def build_sample_grid(n_max: int) -> list[int]:
    """Sample sizes: step 5 below 50, step 10 from 50 up, plus the full size."""
    if n_max < 5:
        return [n_max]
    grid = {n for n in range(5, 50, 5) if n <= n_max}
    grid.update(range(50, n_max + 1, 10))
    grid.add(n_max)
    return sorted(grid)


def derive_seed(master_seed: int, category: str, n: int, replicate: int) -> int:
    """64-bit mixing hash of (master_seed, category, N, replicate)."""
    key = f"{master_seed}|{category}|{n}|{replicate}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


def auc_percent_area(report: "RobustnessReport", category: str, method: str, aug_factor: int = 0) -> float:
    """Normalized area under mean AUC as a function of N / N_max.

    Trapezoidal integral over the covered range, divided by its width, so
    a constant AUC c yields exactly c.
    """
    by_n: dict[int, list[float]] = {}
    for rec in report.records:
        if rec.category == category and rec.method == method and rec.aug_factor == aug_factor:
            by_n.setdefault(rec.n, []).append(rec.auc)
    if len(by_n) < 2:
        raise UndefinedMetric(f"area needs >= 2 distinct sample sizes, got {sorted(by_n)}")
    n_max = max(by_n)
    xs = np.array(sorted(by_n), dtype=np.float64) / n_max
    ys = np.array([float(np.mean(by_n[n])) for n in sorted(by_n)])
    area = float(np.sum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs)))
    return area / float(xs[-1] - xs[0])


# -- protocol ----------------------------------------------------------------


@dataclass(frozen=True)
class MethodConfig:
    """One scorer configuration to benchmark."""

    name: str
    kind: str  # "knn" | "mahalanobis" | "padim"
    estimator: str = cov.LEDOIT_WOLF
    k: int = 1

    def __post_init__(self) -> None:
        if self.kind not in (scorers.KIND_KNN, scorers.KIND_MAHALANOBIS, scorers.KIND_PADIM):
            raise FormatError(f"unknown method kind {self.kind!r}")
        if self.kind != scorers.KIND_KNN and self.estimator not in cov.ESTIMATORS:
            raise FormatError(f"unknown estimator {self.estimator!r}")


DEFAULT_METHODS = (
    MethodConfig(name="knn", kind=scorers.KIND_KNN, k=1),
    MethodConfig(name="mahalanobis-empirical", kind=scorers.KIND_MAHALANOBIS, estimator=cov.EMPIRICAL),
    MethodConfig(name="mahalanobis-ledoit", kind=scorers.KIND_MAHALANOBIS, estimator=cov.LEDOIT_WOLF),
    MethodConfig(name="padim-ledoit", kind=scorers.KIND_PADIM, estimator=cov.LEDOIT_WOLF),
)


@dataclass
class RobustnessRunSpec:
    """Protocol parameters: grid, replicates, seed, methods, augmentation."""

    sample_grid: list[int] | None = None  # None -> build_sample_grid(N_max)
    replicates: int = 5
    master_seed: int = 0
    methods: tuple[MethodConfig, ...] = DEFAULT_METHODS
    aug_factors: tuple[int, ...] = (0,)
    keep_originals: bool = True
    levels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise FormatError(f"replicates must be >= 1, got {self.replicates}")
        if self.sample_grid is not None:
            if len(set(self.sample_grid)) != len(self.sample_grid):
                raise FormatError("sample grid has duplicate values")
            if any(n < 1 for n in self.sample_grid):
                raise FormatError("sample grid values must be >= 1")
        if not self.methods:
            raise FormatError("no methods configured")
        if any(f < 0 for f in self.aug_factors):
            raise FormatError("augmentation factors must be >= 0")


@dataclass(frozen=True)
class RunRecord:
    category: str
    method: str
    estimator: str
    aug_factor: int
    n: int
    replicate: int
    seed: int
    auc: float
    fit_time: float
    score_time: float
    indices: tuple[int, ...]


@dataclass
class RobustnessReport:
    records: list[RunRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def categories(self) -> list[str]:
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.category, None)
        return list(seen)

    @property
    def methods(self) -> list[str]:
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.method, None)
        return list(seen)

    def mean_auc_rows(self) -> list[dict]:
        """Mean AUC over replicates per (category, method, aug_factor, N)."""
        groups: dict[tuple, list[float]] = {}
        for rec in self.records:
            groups.setdefault((rec.category, rec.method, rec.aug_factor, rec.n), []).append(rec.auc)
        rows = []
        for (category, method, aug_factor, n), aucs in sorted(groups.items()):
            rows.append(
                {
                    "category": category,
                    "method": method,
                    "aug_factor": aug_factor,
                    "N": n,
                    "mean_auc": float(np.mean(aucs)),
                    "replicates": len(aucs),
                }
            )
        return rows

    def extend(self, other: "RobustnessReport") -> None:
        self.records.extend(other.records)


def aggregate(report: RobustnessReport, grouping: str = "all", exclusions=()) -> list[dict]:
    """Unweighted mean over categories per (method, aug_factor, N).

    ``grouping`` is "all", "textures" or "objects"; ``exclusions`` removes
    named categories from the average (e.g. ones with too few samples for
    curves to be comparable).
    """
    if grouping not in ("all", "textures", "objects"):
        raise FormatError(f"unknown grouping {grouping!r}")
    excluded = set(exclusions)

    def included(category: str) -> bool:
        if category in excluded:
            return False
        if grouping == "textures":
            return category in TEXTURE_CATEGORIES
        if grouping == "objects":
            return category not in TEXTURE_CATEGORIES
        return True

    per_category: dict[tuple, dict[str, float]] = {}
    for row in report.mean_auc_rows():
        if not included(row["category"]):
            continue
        key = (row["method"], row["aug_factor"], row["N"])
        per_category.setdefault(key, {})[row["category"]] = row["mean_auc"]

    if not per_category:
        raise EmptyInput(f"no categories in group {grouping!r}")

    rows = []
    for (method, aug_factor, n), values in sorted(per_category.items()):
        rows.append(
            {
                "group": grouping,
                "method": method,
                "aug_factor": aug_factor,
                "N": n,
                "mean_auc": float(np.mean(list(values.values()))),
                "categories": len(values),
            }
        )
    return rows


# -- precomputed embeddings ---------------------------------------------------


class _EmbeddingBank:
    """All representations of one dataset, computed once and reused."""

    def __init__(self, ds: EmbeddingDataset, levels: tuple[str, ...], need_aligned: bool):
        self.ids = [s.image_id for s in ds.samples]
        self.row = {image_id: i for i, image_id in enumerate(self.ids)}
        self.labels = [s.label for s in ds.samples]
        maps = ds.ordered_feature_maps()
        self.pooled, self.level_slices = scorers.pooled_matrix(maps, levels)
        self.level_arrays = {
            name: self.pooled[:, lo:hi] for name, (lo, hi) in self.level_slices.items()
        }
        self.aligned: np.ndarray | None = None
        if need_aligned:
            grids = [align_concat(fm, levels) for fm in maps]
            self.aligned = np.stack([g.tensor for g in grids])
            self.aligned_slices = grids[0].level_slices

    def rows_for(self, ids: list[str]) -> np.ndarray:
        missing = [i for i in ids if i not in self.row]
        if missing:
            raise FormatError(f"archive has no features for: {missing[:5]}")
        return np.asarray([self.row[i] for i in ids], dtype=np.intp)


def _fit_ids(originals: list[str], picked: np.ndarray, factor: int, keep_originals: bool) -> list[str]:
    chosen = [originals[i] for i in picked]
    if factor == 0:
        return chosen
    ids: list[str] = list(chosen) if keep_originals else []
    for image_id in chosen:
        ids.extend(f"{image_id}__aug{k}" for k in range(1, factor + 1))
    return ids


def _run_cell(
    method: MethodConfig,
    levels: tuple[str, ...],
    train_bank: _EmbeddingBank,
    test_bank: _EmbeddingBank,
    fit_rows: np.ndarray,
) -> tuple[float, float, float]:
    """Fit one method on the given train rows and AUC it on the full test
    split. Returns (auc, fit_time, score_time)."""
    t0 = time.perf_counter()
    if method.kind == scorers.KIND_KNN:
        model = scorers.knn_fit(train_bank.pooled[fit_rows], k=method.k)
        fit_time = time.perf_counter() - t0
        t1 = time.perf_counter()
        test_scores = scorers.knn_score_batch(model, test_bank.pooled)
    elif method.kind == scorers.KIND_MAHALANOBIS:
        arrays = {name: arr[fit_rows] for name, arr in train_bank.level_arrays.items()}
        model = scorers.maha_fit_arrays(arrays, estimator=method.estimator)
        fit_time = time.perf_counter() - t0
        t1 = time.perf_counter()
        test_scores = scorers.maha_score_batch(model, test_bank.level_arrays)
    else:
        assert train_bank.aligned is not None and test_bank.aligned is not None
        model = scorers.padim_fit_grids(
            train_bank.aligned[fit_rows],
            level_slices=train_bank.aligned_slices,
            levels=levels,
            estimator=method.estimator,
        )
        fit_time = time.perf_counter() - t0
        t1 = time.perf_counter()
        test_scores, _ = scorers.padim_score_batch(model, test_bank.aligned)
    score_time = time.perf_counter() - t1
    auc = roc_auc(test_scores, test_bank.labels)
    return auc, fit_time, score_time


def plan_model_count(n_originals: int, spec: RobustnessRunSpec) -> int:
    """Number of model fits the protocol will perform for one category."""
    grid = spec.sample_grid if spec.sample_grid is not None else build_sample_grid(n_originals)
    usable = [n for n in grid if n <= n_originals]
    return len(usable) * spec.replicates * len(spec.methods) * len(spec.aug_factors)


def run_robustness(
    train_ds: EmbeddingDataset,
    test_ds: EmbeddingDataset,
    spec: RobustnessRunSpec,
    category: str | None = None,
    jobs: int = 1,
) -> RobustnessReport:
    """Execute the subsampling protocol for one category.

    Training indices are drawn over the original (non-augmented) normal
    samples in manifest order; augmentation factor f > 0 swaps in the
    precomputed features of the staged variants ``<id>__aug1..f`` of the
    drawn originals (plus the originals themselves unless the spec drops
    them). Grid values above the available sample count are skipped with
    a warning.
    """
    category = category if category is not None else str(train_ds.manifest.get("category", ""))
    levels = tuple(spec.levels) if spec.levels else train_ds.level_names
    if not levels:
        raise EmptyInput("training dataset has no feature levels")

    need_aligned = any(m.kind == scorers.KIND_PADIM for m in spec.methods)
    train_bank = _EmbeddingBank(train_ds, levels, need_aligned)
    test_bank = _EmbeddingBank(test_ds, levels, need_aligned)

    originals = [
        s.image_id
        for s in train_ds.samples
        if s.label == LABEL_NORMAL and not is_augmented_id(s.image_id)
    ]
    if not originals:
        raise EmptyInput("training dataset has no original normal samples")
    n_orig = len(originals)

    grid = spec.sample_grid if spec.sample_grid is not None else build_sample_grid(n_orig)
    usable = []
    for n in sorted(grid):
        if n > n_orig:
            warnings.warn(f"skipping N={n}: only {n_orig} training samples available", stacklevel=2)
        else:
            usable.append(n)
    if not usable:
        raise EmptyInput(f"no usable grid values for {n_orig} training samples")

    cells = []
    for n in usable:
        for m in range(1, spec.replicates + 1):
            seed = derive_seed(spec.master_seed, category, n, m)
            rng = np.random.default_rng(seed)
            picked = np.sort(rng.choice(n_orig, size=n, replace=False))
            for factor in spec.aug_factors:
                fit_rows = train_bank.rows_for(_fit_ids(originals, picked, factor, spec.keep_originals))
                for method in spec.methods:
                    cells.append((n, m, seed, picked, factor, method, fit_rows))

    def execute(cell):
        n, m, seed, picked, factor, method, fit_rows = cell
        auc, fit_time, score_time = _run_cell(method, levels, train_bank, test_bank, fit_rows)
        return RunRecord(
            category=category,
            method=method.name,
            estimator="" if method.kind == scorers.KIND_KNN else method.estimator,
            aug_factor=factor,
            n=n,
            replicate=m,
            seed=seed,
            auc=auc,
            fit_time=fit_time,
            score_time=score_time,
            indices=tuple(int(i) for i in picked),
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(execute, cells))
    else:
        records = [execute(cell) for cell in cells]

    return RobustnessReport(
        records=records,
        metadata={
            "category": category,
            "levels": list(levels),
            "replicates": spec.replicates,
            "master_seed": spec.master_seed,
            "seed_derivation": "blake2b-64(master_seed|category|N|replicate)",
            "n_originals": n_orig,
            "sample_grid": usable,
            "aug_factors": list(spec.aug_factors),
            "keep_originals": spec.keep_originals,
        },
    )


# -- report output -------------------------------------------------------------

_CSV_COLUMNS = ("category", "method", "estimator", "aug_factor", "N", "replicate", "seed", "auc", "indices")


def _record_row(rec: RunRecord) -> list[str]:
    return [
        rec.category,
        rec.method,
        rec.estimator,
        str(rec.aug_factor),
        str(rec.n),
        str(rec.replicate),
        str(rec.seed),
        repr(rec.auc),
        ";".join(str(i) for i in rec.indices),
    ]


def write_records_csv(report: RobustnessReport, path: str | Path) -> None:
    """Deterministic per-record CSV (no wall-clock columns, so reruns with
    the same seed are byte-identical)."""
    lines = [",".join(_CSV_COLUMNS)]
    for rec in report.records:
        lines.append(",".join(_record_row(rec)))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_timings_csv(report: RobustnessReport, path: str | Path) -> None:
    """Fit/score wall times per record; separate file because timings are
    inherently non-reproducible."""
    columns = ("category", "method", "estimator", "aug_factor", "N", "replicate", "fit_time_s", "score_time_s")
    lines = [",".join(columns)]
    for rec in report.records:
        lines.append(
            ",".join(
                [
                    rec.category,
                    rec.method,
                    rec.estimator,
                    str(rec.aug_factor),
                    str(rec.n),
                    str(rec.replicate),
                    f"{rec.fit_time:.6f}",
                    f"{rec.score_time:.6f}",
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_aggregates_json(report: RobustnessReport, path: str | Path, exclusions=()) -> None:
    payload: dict = {
        "metadata": report.metadata,
        "mean_auc": report.mean_auc_rows(),
        "auc_percent_area": [],
        "groups": {},
    }
    for category in report.categories:
        for method in report.methods:
            factors = sorted({r.aug_factor for r in report.records if r.category == category and r.method == method})
            for factor in factors:
                try:
                    area = auc_percent_area(report, category, method, factor)
                except UndefinedMetric:
                    continue
                payload["auc_percent_area"].append(
                    {"category": category, "method": method, "aug_factor": factor, "area": area}
                )
    for grouping in ("all", "textures", "objects"):
        try:
            payload["groups"][grouping] = aggregate(report, grouping, exclusions)
        except EmptyInput:
            continue
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def plot_auc_curves(report: RobustnessReport, path: str | Path, category: str, aug_factor: int = 0) -> None:
    """AUC versus sample size, one line per method."""
    series: dict[str, list[tuple[float, float]]] = {}
    for row in report.mean_auc_rows():
        if row["category"] != category or row["aug_factor"] != aug_factor:
            continue
        series.setdefault(row["method"], []).append((float(row["N"]), row["mean_auc"]))
    if not series:
        raise EmptyInput(f"no records for category {category!r} at augmentation factor {aug_factor}")
    render_line_plot(
        series,
        path,
        title=f"{category}: AUC vs training sample size (aug x{aug_factor})",
        xlabel="training sample size N",
        ylabel="ROC-AUC",
    )
