"""Image-space data augmentation driven by per-category policies.

A policy names which transforms apply to a category and their ranges;
``augment_image`` applies the enabled ones in a fixed order:

    flip_h, flip_v, translate, rotate, rotate_90s, zoom, add, multiply

Enabled flips fire with probability 0.5. Translation offsets are uniform
integers within the per-axis maxima, rotation angles and zoom factors are
uniform floats in their ranges, brightness adds a uniform integer and
multiplies by a uniform float, both clamped to [0, 255]. Pixels moved in
from outside the frame are black; non-right-angle rotations and zoom use
bilinear interpolation. The result always has the input's dimensions.

Every parameter is drawn from the supplied generator, and
``augment_dataset`` derives one generator per (seed, image index,
replicate index), so outputs are byte-reproducible and each image can be
augmented in parallel without changing the stream.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, UnknownCategory

TRANSFORM_ORDER = ("flip_h", "flip_v", "translate", "rotate", "rotate_90s", "zoom", "add", "multiply")


@dataclass(frozen=True)
class AugmentationPolicy:
    flip_h: bool = False
    flip_v: bool = False
    translate: tuple[int, int] = (0, 0)
    rotate_deg: tuple[float, float] | None = None
    rotate_90s: bool = False
    zoom: tuple[float, float] | None = None
    add: tuple[int, int] = (0, 0)
    multiply: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self) -> None:
        if self.translate[0] < 0 or self.translate[1] < 0:
            raise FormatError(f"translate maxima must be non-negative, got {self.translate}")
        for name, rng in (("rotate", self.rotate_deg), ("zoom", self.zoom), ("add", self.add), ("multiply", self.multiply)):
            if rng is not None and rng[0] > rng[1]:
                raise FormatError(f"{name} range {rng} has lo > hi")
        if self.zoom is not None and not (self.zoom[0] <= 1.0 <= self.zoom[1]):
            raise FormatError(f"zoom range {self.zoom} must straddle or touch 1.0")
        if self.multiply[0] <= 0:
            raise FormatError(f"multiply range {self.multiply} must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "AugmentationPolicy":
        def pair(value, cast):
            if value is None:
                return None
            return (cast(value[0]), cast(value[1]))

        return cls(
            flip_h=bool(raw.get("flip_horizontal", False)),
            flip_v=bool(raw.get("flip_vertical", False)),
            translate=pair(raw.get("translate", [0, 0]), int) or (0, 0),
            rotate_deg=pair(raw.get("rotate"), float),
            rotate_90s=bool(raw.get("rotate_90s", False)),
            zoom=pair(raw.get("zoom"), float),
            add=pair(raw.get("add", [0, 0]), int) or (0, 0),
            multiply=pair(raw.get("multiply", [1.0, 1.0]), float) or (1.0, 1.0),
        )

    @classmethod
    def identity(cls) -> "AugmentationPolicy":
        return cls()


@dataclass(frozen=True)
class AugmentationPlan:
    """How many variants to make per image and whether originals stay."""

    factor: int
    keep_originals: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.factor < 0:
            raise FormatError(f"augmentation factor must be >= 0, got {self.factor}")


def default_policy_config() -> dict:
    """The shipped per-category policy table."""
    text = resources.files("featanom").joinpath("policies.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_policy(category: str, config: str | Path | dict | None = None) -> AugmentationPolicy:
    """Look up a category's policy in a config mapping or JSON file.

    With ``config=None`` the packaged defaults are used.
    """
    if config is None:
        table = default_policy_config()
    elif isinstance(config, dict):
        table = config
    else:
        try:
            table = json.loads(Path(config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"unparseable policy config {config}: {exc}") from exc
    if category not in table:
        raise UnknownCategory(f"no augmentation policy for category {category!r} (have {sorted(k for k in table if not k.startswith('_'))})")
    return AugmentationPolicy.from_dict(table[category])


def _check_image(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img)
    if arr.size == 0:
        raise FormatError("empty image")
    if arr.dtype != np.uint8:
        raise FormatError(f"expected 8-bit image, got dtype {arr.dtype}")
    if arr.ndim == 2:
        arr = arr[:, :, None].repeat(3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise FormatError(f"expected (H, W, 3) image, got shape {arr.shape}")
    return arr


def _translate(arr: np.ndarray, dx: int, dy: int) -> np.ndarray:
    out = np.zeros_like(arr)
    h, w = arr.shape[:2]
    src_x = slice(max(0, -dx), min(w, w - dx))
    dst_x = slice(max(0, dx), min(w, w + dx))
    src_y = slice(max(0, -dy), min(h, h - dy))
    dst_y = slice(max(0, dy), min(h, h + dy))
    out[dst_y, dst_x] = arr[src_y, src_x]
    return out


def _rotate(arr: np.ndarray, angle: float) -> np.ndarray:
    img = Image.fromarray(arr, mode="RGB")
    rotated = img.rotate(angle, resample=Image.BILINEAR, expand=False, fillcolor=(0, 0, 0))
    return np.asarray(rotated)


def _zoom(arr: np.ndarray, factor: float) -> np.ndarray:
    h, w = arr.shape[:2]
    cx, cy = w / 2.0, h / 2.0
    inv = 1.0 / factor
    # output (x, y) samples input (inv*x + cx*(1-inv), inv*y + cy*(1-inv))
    coeffs = (inv, 0.0, cx * (1.0 - inv), 0.0, inv, cy * (1.0 - inv))
    img = Image.fromarray(arr, mode="RGB")
    zoomed = img.transform((w, h), Image.AFFINE, coeffs, resample=Image.BILINEAR, fillcolor=(0, 0, 0))
    return np.asarray(zoomed)


def augment_image(img: np.ndarray, policy: AugmentationPolicy, rng: np.random.Generator) -> np.ndarray:
    """Apply one freshly-sampled instance of the policy to an 8-bit RGB image."""
    arr = _check_image(img)

    if policy.flip_h and rng.random() < 0.5:
        arr = arr[:, ::-1]
    if policy.flip_v and rng.random() < 0.5:
        arr = arr[::-1]
    if policy.translate != (0, 0):
        mx, my = policy.translate
        dx = int(rng.integers(-mx, mx + 1)) if mx else 0
        dy = int(rng.integers(-my, my + 1)) if my else 0
        arr = _translate(np.ascontiguousarray(arr), dx, dy)
    if policy.rotate_deg is not None:
        angle = float(rng.uniform(policy.rotate_deg[0], policy.rotate_deg[1]))
        arr = _rotate(np.ascontiguousarray(arr), angle)
    if policy.rotate_90s:
        quarter = int(rng.integers(0, 4))
        arr = np.rot90(arr, quarter)
    if policy.zoom is not None:
        factor = float(rng.uniform(policy.zoom[0], policy.zoom[1]))
        arr = _zoom(np.ascontiguousarray(arr), factor)
    if policy.add != (0, 0):
        value = int(rng.integers(policy.add[0], policy.add[1] + 1))
        arr = np.clip(arr.astype(np.int16) + value, 0, 255).astype(np.uint8)
    if policy.multiply != (1.0, 1.0):
        factor = float(rng.uniform(policy.multiply[0], policy.multiply[1]))
        arr = np.clip(np.rint(arr.astype(np.float64) * factor), 0, 255).astype(np.uint8)
    return np.ascontiguousarray(arr)


def replicate_rng(seed: int, image_index: int, replicate: int) -> np.random.Generator:
    """Generator for one (image, replicate) cell; pre-split so parallel
    execution cannot reorder draws."""
    return np.random.default_rng([seed, image_index, replicate])


def iter_augmented(images, policy: AugmentationPolicy, plan: AugmentationPlan):
    """Yield (image_index, replicate, image); replicate 0 is the original.

    For each input image the original comes first when the plan keeps
    originals, followed by replicates 1..factor.
    """
    for index, img in enumerate(images):
        if plan.keep_originals:
            yield index, 0, _check_image(img)
        for rep in range(1, plan.factor + 1):
            rng = replicate_rng(plan.seed, index, rep)
            yield index, rep, augment_image(img, policy, rng)


def augment_dataset(images, policy: AugmentationPolicy, plan: AugmentationPlan) -> list[np.ndarray]:
    """Materialize the augmented set: N * factor images, plus the N
    originals when the plan keeps them."""
    return [img for _, _, img in iter_augmented(images, policy, plan)]


def staged_name(image_id: str, replicate: int) -> str:
    """Deterministic staging id: originals keep their id, replicate k
    becomes ``<image_id>__aug<k>``."""
    return image_id if replicate == 0 else f"{image_id}__aug{replicate}"
