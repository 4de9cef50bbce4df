"""Walk through the three scorers on a synthetic feature dataset.

We fake the output of a frozen feature extractor: every "image" gets two
feature levels (a 4-channel 4x4 map and a 6-channel 2x2 map). Normal
images are draws around zero, anomalies are shifted. Then we fit each
scorer on the normal set and look at how the scores separate.

Run:  python demos/01_scoring_methods.py
"""
import numpy as np

from featanom.pipeline import global_average_pool
from featanom.scorers import knn_fit, knn_score, maha_fit, maha_score, padim_fit, padim_score
from featanom.store import FeatureMapSet

rng = np.random.default_rng(0)


def fake_features(image_id, shift=0.0):
    return FeatureMapSet(
        image_id,
        {
            "block_a": (rng.normal(size=(4, 4, 4)) + shift).astype(np.float32),
            "block_b": (rng.normal(size=(6, 2, 2)) + shift).astype(np.float32),
        },
    )


train = [fake_features(f"train/{i}") for i in range(30)]
normals = [fake_features(f"test/good/{i}") for i in range(5)]
anomalies = [fake_features(f"test/bad/{i}", shift=2.0) for i in range(5)]

levels = ("block_a", "block_b")

# 1. Nearest neighbor on pooled embeddings: the score is the mean SQUARED
#    euclidean distance to the k nearest training embeddings (k=1 here).
knn = knn_fit([global_average_pool(fm, levels) for fm in train], k=1)

# 2. One Gaussian per level on the pooled embeddings; the image score is
#    the sum of per-level Mahalanobis distances. Shrinkage keeps the
#    covariances invertible even with few samples.
maha = maha_fit(train, levels, estimator="ledoit_wolf")

# 3. Per-patch Gaussians on the aligned, concatenated grids; the image
#    score is the worst local distance, and the per-location distances
#    form a heatmap.
padim = padim_fit(train, levels, estimator="ledoit_wolf")

print(f"{'image':>14s} {'knn':>10s} {'mahalanobis':>12s} {'padim':>10s}")
for fm in normals + anomalies:
    k = knn_score(knn, global_average_pool(fm, levels))
    m = maha_score(maha, fm)
    p = padim_score(padim, fm)
    print(f"{fm.image_id:>14s} {k:10.3f} {m:12.3f} {p.score:10.3f}")

result = padim_score(padim, anomalies[0])
print("\nper-patch heatmap of the first anomaly (grid "
      f"{result.heatmap.shape[0]}x{result.heatmap.shape[1]}):")
print(np.array_str(result.heatmap, precision=2))
