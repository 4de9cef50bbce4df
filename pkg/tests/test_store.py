import json

import numpy as np
import pytest

from featanom.errors import FormatError, MalformedTree, MissingManifest, NonFiniteValue, ShapeMismatch
from featanom.store import (
    EmbeddingDataset,
    FeatureMapSet,
    LabeledSample,
    is_augmented_id,
    list_mvtec_categories,
    load_dataset,
    save_dataset,
    scan_mvtec_category,
)

from conftest import make_dataset, make_fm


def test_round_trip_three_images(tmp_path):
    rng = np.random.default_rng(0)
    entries = [
        (f"img{i}", "normal", "good", {"a": rng.normal(size=(3, 2, 2)), "b": rng.normal(size=(5, 1, 1))})
        for i in range(3)
    ]
    ds = make_dataset(entries)
    save_dataset(ds, tmp_path / "arch")
    loaded = load_dataset(tmp_path / "arch")

    assert [s.image_id for s in loaded.samples] == ["img0", "img1", "img2"]
    shapes = {tuple(fm.levels["a"].shape) for fm in loaded.features.values()}
    assert shapes == {(3, 2, 2)}
    for image_id, fm in ds.features.items():
        for name, tensor in fm.levels.items():
            got = loaded.features[image_id].levels[name]
            assert got.tobytes() == tensor.tobytes()


def test_round_trip_extractor_scale_shapes(tmp_path):
    # shapes produced by the reference extractor on a 380x380 input
    rng = np.random.default_rng(1)
    levels = {
        "block4": rng.normal(size=(112, 24, 24)),
        "block6": rng.normal(size=(272, 12, 12)),
        "block7": rng.normal(size=(448, 12, 12)),
    }
    ds = make_dataset([("only", "normal", "good", levels)])
    save_dataset(ds, tmp_path / "arch")
    loaded = load_dataset(tmp_path / "arch")
    for name, tensor in ds.features["only"].levels.items():
        assert loaded.features["only"].levels[name].tobytes() == tensor.tobytes()


def test_round_trip_empty_dataset(tmp_path):
    ds = EmbeddingDataset(samples=[], features={}, manifest={"category": "none"})
    save_dataset(ds, tmp_path / "arch")
    loaded = load_dataset(tmp_path / "arch")
    assert loaded.samples == []
    assert loaded.manifest["category"] == "none"


def test_deterministic_ordering(tmp_path):
    rng = np.random.default_rng(2)
    ds = make_dataset([(f"z{i}", "normal", "good", {"a": rng.normal(size=(2, 2, 2))}) for i in range(6)])
    save_dataset(ds, tmp_path / "arch")
    first = [s.image_id for s in load_dataset(tmp_path / "arch").samples]
    second = [s.image_id for s in load_dataset(tmp_path / "arch").samples]
    assert first == second == [f"z{i}" for i in range(6)]


def test_missing_manifest(tmp_path):
    (tmp_path / "arch").mkdir()
    with pytest.raises(MissingManifest):
        load_dataset(tmp_path / "arch")


def test_declared_shape_mismatch_names_image(tmp_path):
    rng = np.random.default_rng(3)
    ds = make_dataset(
        [
            ("A", "normal", "good", {"a": rng.normal(size=(4, 2, 2))}),
            ("B", "normal", "good", {"a": rng.normal(size=(4, 2, 2))}),
        ]
    )
    save_dataset(ds, tmp_path / "arch")
    manifest_path = tmp_path / "arch" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["samples"][1]["levels"][0]["shape"] = [2, 2, 2]
    manifest["samples"][1]["levels"][0]["nbytes"] = 2 * 2 * 2 * 4
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ShapeMismatch) as excinfo:
        load_dataset(tmp_path / "arch")
    assert excinfo.value.image_id == "B"


def test_cross_image_shape_mismatch_rejected():
    rng = np.random.default_rng(4)
    ds = make_dataset(
        [
            ("A", "normal", "good", {"a": rng.normal(size=(4, 2, 2))}),
            ("B", "normal", "good", {"a": rng.normal(size=(2, 2, 2))}),
        ]
    )
    with pytest.raises(ShapeMismatch) as excinfo:
        ds.validate()
    assert excinfo.value.image_id == "B"


def test_nan_tensor_rejected_on_save_and_load(tmp_path):
    bad = np.zeros((2, 2, 2), dtype=np.float32)
    bad[0, 0, 0] = np.nan
    ds = make_dataset([("A", "normal", "good", {"a": bad})])
    with pytest.raises(NonFiniteValue) as excinfo:
        save_dataset(ds, tmp_path / "arch")
    assert excinfo.value.image_id == "A"

    good = make_dataset([("A", "normal", "good", {"a": np.zeros((2, 2, 2))})])
    save_dataset(good, tmp_path / "arch2")
    blob = np.full(8, np.nan, dtype="<f4").tobytes()
    (tmp_path / "arch2" / "tensors.bin").write_bytes(blob)
    with pytest.raises(NonFiniteValue):
        load_dataset(tmp_path / "arch2")


def test_label_defect_consistency_enforced():
    with pytest.raises(FormatError):
        LabeledSample(image_id="x", label="normal", defect_type="crack")
    with pytest.raises(FormatError):
        LabeledSample(image_id="x", label="anomalous", defect_type="good")
    LabeledSample(image_id="x", label="anomalous", defect_type="crack")


def test_sample_feature_id_agreement():
    fm = make_fm("A", {"a": np.zeros((1, 1, 1))})
    ds = EmbeddingDataset(
        samples=[LabeledSample(image_id="A", label="normal", defect_type="good")],
        features={"A": fm, "B": make_fm("B", {"a": np.zeros((1, 1, 1))})},
    )
    with pytest.raises(FormatError):
        ds.validate()


def _build_tree(root, category="widget"):
    for defect, split, count in (("good", "train", 4), ("good", "test", 2), ("scratch", "test", 3)):
        d = root / category / split / defect
        d.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            (d / f"{i:03d}.png").write_bytes(b"")


def test_scan_mvtec_tree(tmp_path):
    _build_tree(tmp_path)
    splits = scan_mvtec_category(tmp_path, "widget")
    assert [s.image_id for s in splits["train"]] == [f"train/good/{i:03d}" for i in range(4)]
    assert all(s.label == "normal" for s in splits["train"])
    test_labels = {s.image_id: s.label for s in splits["test"]}
    assert test_labels["test/scratch/001"] == "anomalous"
    assert test_labels["test/good/000"] == "normal"
    assert list_mvtec_categories(tmp_path) == ["widget"]


def test_scan_requires_train_good(tmp_path):
    (tmp_path / "widget" / "test" / "scratch").mkdir(parents=True)
    with pytest.raises(MalformedTree):
        scan_mvtec_category(tmp_path, "widget")


def test_augmented_id_convention():
    assert is_augmented_id("train/good/000__aug3")
    assert not is_augmented_id("train/good/000")
    assert not is_augmented_id("aug3")
