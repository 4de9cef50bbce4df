"""Inspect the per-category augmentation policies and apply one.

Each category gets its own mix of flips, translations, rotations, zoom
and brightness changes; enabled transforms are applied every time with
freshly sampled parameters, flips fire with probability 0.5. A factor-f
plan yields f variants per image (plus the originals if kept), so factor
10 turns 10 images into an effective set of 110.

Run:  python demos/04_augmentation_policies.py
Outputs land in demos/out/augmented/.
"""
from pathlib import Path

import numpy as np
from PIL import Image

from featanom.augment import (
    AugmentationPlan,
    default_policy_config,
    iter_augmented,
    load_policy,
    staged_name,
)

OUT = Path(__file__).parent / "out" / "augmented"
OUT.mkdir(parents=True, exist_ok=True)

table = default_policy_config()
print(f"{'category':>12s} {'flips':>7s} {'translate':>10s} {'rotate':>12s} {'90s':>4s} {'zoom':>13s}")
for category in sorted(table):
    policy = load_policy(category)
    flips = ("H" if policy.flip_h else "-") + ("V" if policy.flip_v else "-")
    rotate = f"{policy.rotate_deg}" if policy.rotate_deg else "-"
    zoom = f"{policy.zoom}" if policy.zoom else "-"
    print(f"{category:>12s} {flips:>7s} {str(policy.translate):>10s} {rotate:>12s} "
          f"{'yes' if policy.rotate_90s else 'no':>4s} {zoom:>13s}")

# a recognizable synthetic test card: gradient background, bright square
rng = np.random.default_rng(3)
img = np.zeros((96, 96, 3), dtype=np.uint8)
img[:, :, 0] = np.linspace(30, 220, 96, dtype=np.uint8)[None, :]
img[:, :, 1] = np.linspace(220, 30, 96, dtype=np.uint8)[:, None]
img[36:60, 36:60] = (250, 250, 40)

policy = load_policy("hazelnut")
plan = AugmentationPlan(factor=8, keep_originals=True, seed=5)
for index, rep, out in iter_augmented([img], policy, plan):
    name = staged_name("card", rep) + ".png"
    Image.fromarray(out, mode="RGB").save(OUT / name)
print(f"\nwrote {plan.factor + 1} images to {OUT} (original + {plan.factor} variants)")
