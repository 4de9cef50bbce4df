import numpy as np
import pytest

from featanom.augment import (
    AugmentationPlan,
    AugmentationPolicy,
    augment_dataset,
    augment_image,
    default_policy_config,
    iter_augmented,
    load_policy,
    replicate_rng,
    staged_name,
)
from featanom.errors import FormatError, UnknownCategory


def gray(value, size=(16, 16)):
    return np.full((*size, 3), value, dtype=np.uint8)


def random_image(rng, size=(16, 16)):
    return rng.integers(0, 256, size=(*size, 3), dtype=np.uint8)


def test_default_config_covers_fifteen_categories():
    table = default_policy_config()
    assert len(table) == 15


def test_load_policy_capsule_row():
    policy = load_policy("capsule")
    assert policy.flip_h is False and policy.flip_v is False
    assert policy.translate == (10, 10)
    assert policy.rotate_deg == (-3.0, 3.0)
    assert policy.zoom == (0.98, 1.02)
    assert policy.add == (-10, 10)
    assert policy.multiply == (0.9, 1.1)


def test_load_policy_zipper_row():
    policy = load_policy("zipper")
    assert policy.flip_h is True and policy.flip_v is False
    assert policy.translate == (30, 0)
    assert policy.rotate_deg is None
    assert policy.zoom is None


def test_load_policy_cable_has_no_zoom():
    assert load_policy("cable").zoom is None


def test_load_policy_unknown_category():
    with pytest.raises(UnknownCategory):
        load_policy("unknown")


def test_policy_validation():
    with pytest.raises(FormatError):
        AugmentationPolicy(zoom=(1.05, 1.10))  # does not touch 1.0
    with pytest.raises(FormatError):
        AugmentationPolicy(add=(10, -10))
    with pytest.raises(FormatError):
        AugmentationPolicy(multiply=(0.0, 1.0))
    with pytest.raises(FormatError):
        AugmentationPolicy(translate=(-1, 0))


def test_identity_policy_returns_input():
    rng = np.random.default_rng(0)
    img = random_image(rng)
    out = augment_image(img, AugmentationPolicy.identity(), replicate_rng(0, 0, 1))
    np.testing.assert_array_equal(out, img)


def test_rotate_90s_square_preserves_pixel_multiset():
    rng = np.random.default_rng(1)
    img = random_image(rng, size=(12, 12))
    policy = AugmentationPolicy(rotate_90s=True)
    for rep in range(8):
        out = augment_image(img, policy, replicate_rng(3, 0, rep + 1))
        assert out.shape == img.shape
        assert sorted(out.reshape(-1, 3).tolist()) == sorted(img.reshape(-1, 3).tolist())


def test_add_clamps_at_255():
    policy = AugmentationPolicy(add=(5, 5))
    out = augment_image(gray(250), policy, replicate_rng(0, 0, 1))
    assert (out == 255).all()


def test_multiply_clamps_and_rounds():
    policy = AugmentationPolicy(multiply=(2.0, 2.0))
    out = augment_image(gray(200), policy, replicate_rng(0, 0, 1))
    assert (out == 255).all()


def test_counts_factor_10_keep_originals():
    rng = np.random.default_rng(2)
    images = [random_image(rng) for _ in range(10)]
    plan = AugmentationPlan(factor=10, keep_originals=True, seed=7)
    out = augment_dataset(images, load_policy("capsule"), plan)
    assert len(out) == 110


def test_counts_factor_0_is_identity():
    rng = np.random.default_rng(3)
    images = [random_image(rng) for _ in range(4)]
    plan = AugmentationPlan(factor=0, keep_originals=True, seed=0)
    out = augment_dataset(images, load_policy("capsule"), plan)
    assert len(out) == 4
    for a, b in zip(images, out):
        np.testing.assert_array_equal(a, b)


def test_counts_factor_1_discard_originals_changes_images():
    # brightness add range (5, 5) guarantees a change on a mid-gray image
    policy = AugmentationPolicy(add=(5, 5))
    images = [gray(100 + i) for i in range(10)]
    plan = AugmentationPlan(factor=1, keep_originals=False, seed=1)
    out = augment_dataset(images, policy, plan)
    assert len(out) == 10
    for original, augmented in zip(images, out):
        assert not np.array_equal(original, augmented)


def test_determinism_same_seed():
    rng = np.random.default_rng(4)
    images = [random_image(rng) for _ in range(5)]
    policy = load_policy("hazelnut")
    plan = AugmentationPlan(factor=3, keep_originals=False, seed=11)
    a = augment_dataset(images, policy, plan)
    b = augment_dataset(images, policy, plan)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_different_seed_changes_something():
    rng = np.random.default_rng(5)
    images = [random_image(rng) for _ in range(10)]
    policy = load_policy("hazelnut")
    a = augment_dataset(images, policy, AugmentationPlan(factor=1, keep_originals=False, seed=1))
    b = augment_dataset(images, policy, AugmentationPlan(factor=1, keep_originals=False, seed=2))
    assert any(not np.array_equal(x, y) for x, y in zip(a, b))


def test_translate_bounds_via_impulse():
    size = 21
    img = np.zeros((size, size, 3), dtype=np.uint8)
    img[10, 10] = 255
    policy = AugmentationPolicy(translate=(3, 2))
    for rep in range(1, 30):
        out = augment_image(img, policy, replicate_rng(9, 0, rep))
        ys, xs, _ = np.nonzero(out)
        assert len(set(zip(ys.tolist(), xs.tolist()))) == 1
        assert abs(int(xs[0]) - 10) <= 3
        assert abs(int(ys[0]) - 10) <= 2


def test_rotation_keeps_dimensions():
    rng = np.random.default_rng(6)
    img = random_image(rng, size=(15, 9))
    policy = AugmentationPolicy(rotate_deg=(-20.0, 20.0))
    out = augment_image(img, policy, replicate_rng(0, 0, 1))
    assert out.shape == img.shape


def test_zoom_keeps_dimensions_and_center():
    img = gray(0, size=(17, 17))
    img[8, 8] = 200
    policy = AugmentationPolicy(zoom=(1.0, 1.0))
    out = augment_image(img, policy, replicate_rng(0, 0, 1))
    assert out.shape == img.shape
    assert out[8, 8, 0] > 0


def test_staged_names():
    assert staged_name("train/good/000", 0) == "train/good/000"
    assert staged_name("train/good/000", 3) == "train/good/000__aug3"


def test_iter_augmented_pairs_index_and_replicate():
    rng = np.random.default_rng(7)
    images = [random_image(rng) for _ in range(2)]
    plan = AugmentationPlan(factor=2, keep_originals=True, seed=0)
    seen = [(idx, rep) for idx, rep, _ in iter_augmented(images, AugmentationPolicy.identity(), plan)]
    assert seen == [(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]
