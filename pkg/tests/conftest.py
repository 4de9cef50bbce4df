import numpy as np
import pytest

from featanom.store import EmbeddingDataset, FeatureMapSet, LabeledSample


def make_fm(image_id, levels):
    """FeatureMapSet from {name: array-like} with float32 tensors."""
    return FeatureMapSet(
        image_id=image_id,
        levels={name: np.asarray(data, dtype=np.float32) for name, data in levels.items()},
    )


def vector_fm(image_id, values):
    """A p-dimensional vector packaged as a single 1x1 feature level."""
    arr = np.asarray(values, dtype=np.float32)
    return make_fm(image_id, {"emb": arr.reshape(-1, 1, 1)})


def make_dataset(entries, category="synth", metadata=None):
    """Dataset from (image_id, label, defect_type, {level: tensor}) tuples."""
    samples, features = [], {}
    for image_id, label, defect, levels in entries:
        samples.append(LabeledSample(image_id=image_id, label=label, defect_type=defect, category=category))
        features[image_id] = make_fm(image_id, levels)
    meta = {"category": category}
    if metadata:
        meta.update(metadata)
    return EmbeddingDataset(samples=samples, features=features, manifest=meta)


LEVEL_SHAPES = {"block_a": (4, 4, 4), "block_b": (6, 2, 2)}


def random_levels(rng, scale=1.0, shift=0.0):
    return {
        name: (rng.normal(size=shape) * scale + shift).astype(np.float32)
        for name, shape in LEVEL_SHAPES.items()
    }


@pytest.fixture
def synth_pair(tmp_path):
    """A small separable train/test dataset pair with two feature levels."""
    rng = np.random.default_rng(1234)
    train_entries = [
        (f"train/good/{i:03d}", "normal", "good", random_levels(rng))
        for i in range(20)
    ]
    test_entries = [
        (f"test/good/{i:03d}", "normal", "good", random_levels(rng))
        for i in range(10)
    ] + [
        (f"test/dent/{i:03d}", "anomalous", "dent", random_levels(rng, shift=3.0))
        for i in range(10)
    ]
    return make_dataset(train_entries), make_dataset(test_entries)
