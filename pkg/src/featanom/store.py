"""On-disk interchange format for feature-map datasets.

An archive is a directory holding exactly two files:

* ``manifest.json`` -- versioned JSON manifest (``"format_version": 1``)
  listing dataset metadata, the per-level shapes shared by every image,
  and one record per sample (image_id, label, defect_type, per-level
  byte offsets into the tensor file).
* ``tensors.bin`` -- raw little-endian 32-bit floats. Each tensor is laid
  out channel-major, then row-major over height and width (C order of a
  C x H x W array).

Tensors are 32-bit on disk; all downstream statistics run in 64-bit.
Loading is single-threaded; a loaded dataset is immutable and safe to
read from many threads.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    FormatError,
    MalformedTree,
    MissingManifest,
    NonFiniteValue,
    ShapeMismatch,
)

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
TENSORS_NAME = "tensors.bin"

LABEL_NORMAL = "normal"
LABEL_ANOMALOUS = "anomalous"
GOOD_DEFECT = "good"

_DISK_DTYPE = np.dtype("<f4")


@dataclass
class FeatureMapSet:
    """Per-image multi-level feature tensors.

    ``levels`` maps level name to a (C, H, W) float32 array; insertion
    order is the level order. Every tensor must be finite.
    """

    image_id: str
    levels: dict[str, np.ndarray]

    def level_shape(self, name: str) -> tuple[int, int, int]:
        return tuple(self.levels[name].shape)  # type: ignore[return-value]

    def validate(self) -> None:
        for name, tensor in self.levels.items():
            if tensor.ndim != 3:
                raise ShapeMismatch(self.image_id, f"level {name!r} of image {self.image_id!r} is not 3-D")
            if not np.isfinite(tensor).all():
                raise NonFiniteValue(self.image_id)


@dataclass(frozen=True)
class LabeledSample:
    """Label record for one image: normal iff the defect type is "good"."""

    image_id: str
    label: str
    defect_type: str
    category: str = ""

    def __post_init__(self) -> None:
        if (self.label == LABEL_NORMAL) != (self.defect_type == GOOD_DEFECT):
            raise FormatError(
                f"sample {self.image_id!r}: label {self.label!r} inconsistent with defect type {self.defect_type!r}"
            )
        if self.label not in (LABEL_NORMAL, LABEL_ANOMALOUS):
            raise FormatError(f"sample {self.image_id!r}: unknown label {self.label!r}")


@dataclass
class EmbeddingDataset:
    """Labeled samples plus their feature maps and dataset metadata."""

    samples: list[LabeledSample]
    features: dict[str, FeatureMapSet]
    manifest: dict = field(default_factory=dict)

    def validate(self) -> None:
        sample_ids = [s.image_id for s in self.samples]
        if len(set(sample_ids)) != len(sample_ids):
            raise FormatError("duplicate image ids in sample list")
        if set(sample_ids) != set(self.features):
            missing = set(sample_ids) ^ set(self.features)
            raise FormatError(f"samples and features disagree on ids: {sorted(missing)[:5]}")
        reference: dict[str, tuple[int, int, int]] | None = None
        ref_id = ""
        for sid in sample_ids:
            fm = self.features[sid]
            fm.validate()
            shapes = {name: tuple(t.shape) for name, t in fm.levels.items()}
            if reference is None:
                reference, ref_id = shapes, sid
            elif shapes != reference:
                raise ShapeMismatch(sid, f"image {sid!r} levels {shapes} differ from {ref_id!r} levels {reference}")

    @property
    def level_names(self) -> tuple[str, ...]:
        if not self.samples:
            return ()
        first = self.features[self.samples[0].image_id]
        return tuple(first.levels)

    def ordered_feature_maps(self) -> list[FeatureMapSet]:
        return [self.features[s.image_id] for s in self.samples]


def save_dataset(ds: EmbeddingDataset, path: str | Path) -> None:
    """Write ``ds`` as a manifest + tensor-blob archive.

    Round-trip is bit-exact: tensors are serialized as the little-endian
    float32 bytes of their C-ordered (C, H, W) layout.
    """
    ds.validate()
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)

    records = []
    offset = 0
    with open(out / TENSORS_NAME, "wb") as blob:
        for sample in ds.samples:
            fm = ds.features[sample.image_id]
            level_records = []
            for name, tensor in fm.levels.items():
                data = np.ascontiguousarray(tensor, dtype=_DISK_DTYPE)
                raw = data.tobytes()
                blob.write(raw)
                level_records.append(
                    {
                        "name": name,
                        "shape": list(data.shape),
                        "offset": offset,
                        "nbytes": len(raw),
                    }
                )
                offset += len(raw)
            records.append(
                {
                    "image_id": sample.image_id,
                    "label": sample.label,
                    "defect_type": sample.defect_type,
                    "category": sample.category,
                    "levels": level_records,
                }
            )

    level_decl = []
    if ds.samples:
        first = ds.features[ds.samples[0].image_id]
        level_decl = [{"name": n, "shape": list(t.shape)} for n, t in first.levels.items()]

    manifest = {
        "format_version": FORMAT_VERSION,
        "metadata": dict(ds.manifest),
        "levels": level_decl,
        "samples": records,
    }
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=False)
        fh.write("\n")


def load_dataset(path: str | Path) -> EmbeddingDataset:
    """Load an archive written by :func:`save_dataset`.

    Sample order is the manifest order. Raises typed errors naming the
    offending image for shape disagreements and non-finite tensors.
    """
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingManifest(f"no {MANIFEST_NAME} under {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"unparseable manifest in {root}: {exc}") from exc

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")

    tensors_path = root / TENSORS_NAME
    if not tensors_path.is_file():
        raise FormatError(f"no {TENSORS_NAME} under {root}")
    blob = tensors_path.read_bytes()

    declared = {
        entry["name"]: tuple(entry["shape"]) for entry in manifest.get("levels", [])
    }

    samples: list[LabeledSample] = []
    features: dict[str, FeatureMapSet] = {}
    for record in manifest.get("samples", []):
        image_id = record["image_id"]
        levels: dict[str, np.ndarray] = {}
        for lvl in record["levels"]:
            name = lvl["name"]
            shape = tuple(lvl["shape"])
            if name in levels:
                raise FormatError(f"duplicate level {name!r} for image {image_id!r}")
            if declared and (name not in declared or declared[name] != shape):
                raise ShapeMismatch(
                    image_id,
                    f"image {image_id!r} level {name!r} has shape {shape}, manifest declares "
                    f"{declared.get(name)}",
                )
            nbytes = int(np.prod(shape)) * _DISK_DTYPE.itemsize
            if lvl["nbytes"] != nbytes:
                raise FormatError(
                    f"image {image_id!r} level {name!r}: {lvl['nbytes']} bytes recorded, shape needs {nbytes}"
                )
            start = lvl["offset"]
            end = start + nbytes
            if end > len(blob):
                raise FormatError(f"image {image_id!r} level {name!r} extends past end of tensor file")
            tensor = np.frombuffer(blob[start:end], dtype=_DISK_DTYPE).reshape(shape)
            if not np.isfinite(tensor).all():
                raise NonFiniteValue(image_id)
            levels[name] = tensor
        samples.append(
            LabeledSample(
                image_id=image_id,
                label=record["label"],
                defect_type=record["defect_type"],
                category=record.get("category", ""),
            )
        )
        features[image_id] = FeatureMapSet(image_id=image_id, levels=levels)

    ds = EmbeddingDataset(samples=samples, features=features, manifest=dict(manifest.get("metadata", {})))
    ds.validate()
    return ds


# -- MVTec-style directory trees ------------------------------------------

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def image_id_for(path: Path, root: Path) -> str:
    """Relative posix path with the extension stripped; the archive key."""
    rel = path.relative_to(root)
    return rel.with_suffix("").as_posix()


def scan_mvtec_category(root: str | Path, category: str) -> dict[str, list[LabeledSample]]:
    """Derive labeled samples from an ``<category>/<split>/<defect>/*.png`` tree.

    The "good" folder maps to normal, everything else to anomalous. Image
    ids are relative to the category directory, extension stripped, so a
    training image ends up as e.g. ``train/good/000``. Only the tree
    structure is read; images are never decoded here.
    """
    cat_dir = Path(root) / category
    train_good = cat_dir / "train" / GOOD_DEFECT
    if not train_good.is_dir():
        raise MalformedTree(f"{cat_dir} has no train/{GOOD_DEFECT} directory")

    splits: dict[str, list[LabeledSample]] = {}
    for split in ("train", "test"):
        split_dir = cat_dir / split
        if not split_dir.is_dir():
            continue
        samples: list[LabeledSample] = []
        for defect_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
            defect = defect_dir.name
            label = LABEL_NORMAL if defect == GOOD_DEFECT else LABEL_ANOMALOUS
            for img in sorted(defect_dir.iterdir()):
                if img.suffix.lower() not in _IMAGE_SUFFIXES:
                    continue
                samples.append(
                    LabeledSample(
                        image_id=image_id_for(img, cat_dir),
                        label=label,
                        defect_type=defect,
                        category=category,
                    )
                )
        splits[split] = samples
    return splits


def list_mvtec_categories(root: str | Path) -> list[str]:
    """Category directories under ``root`` that look like MVTec trees."""
    rootp = Path(root)
    if not rootp.is_dir():
        raise MalformedTree(f"{rootp} is not a directory")
    found = []
    for child in sorted(rootp.iterdir()):
        if child.is_dir() and (child / "train" / GOOD_DEFECT).is_dir():
            found.append(child.name)
    if not found:
        raise MalformedTree(f"no <category>/train/{GOOD_DEFECT} trees under {rootp}")
    return found


_AUG_ID_RE = re.compile(r"__aug\d+$")


def is_augmented_id(image_id: str) -> bool:
    """True for ids produced by the augmentation staging convention."""
    return bool(_AUG_ID_RE.search(image_id))
