"""Reference VQ pipeline error on iid Gaussian 512x512 matrices.

Block absmax normalization (block 64, float scales), scipy kmeans2 with
kmeans++ seeding on d=2 vectors with 2^(b*d) centroids, decode, rescale.
Prints the mean relative Frobenius error over a few seeds; the value is
frozen in tests/test_pipeline.cpp.
"""
import numpy as np
from scipy.cluster.vq import kmeans2


def pipeline_error(seed, b=3, d=2, block=64):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((512, 512))
    x = w.reshape(-1, block)
    scale = np.abs(x).max(axis=1, keepdims=True)
    v = (x / scale).reshape(-1, d)
    centroids, labels = kmeans2(v, 2 ** (b * d), minit="++", iter=100, seed=seed)
    y = (centroids[labels].reshape(-1, block) * scale).reshape(w.shape)
    return np.linalg.norm(w - y) / np.linalg.norm(w)


if __name__ == "__main__":
    errs = [pipeline_error(s) for s in range(3)]
    print(" ".join(f"{e:.6f}" for e in errs), f"mean {np.mean(errs):.6f}")
