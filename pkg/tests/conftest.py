"""Shared helpers: seeded data makers and a non-degenerate instance
factory used across the unit and acceptance suites."""
from __future__ import annotations

import numpy as np

from cluster_sieve.core import DataMatrix, NotAvailable
from cluster_sieve.kmeans import KMeansConfig, run_kmeans


def gauss_data(seed: int, n: int, q: int, mu: np.ndarray | None = None,
               sigma: float = 1.0) -> DataMatrix:
    rng = np.random.default_rng(seed)
    values = sigma * rng.standard_normal((n, q))
    if mu is not None:
        values = values + mu
    return DataMatrix(values)


def blocked_means(n: int, q: int, centers: np.ndarray) -> np.ndarray:
    """Row-block mean layout: the k-th block of n // K rows sits at
    centers[k]. n must be divisible by len(centers)."""
    centers = np.asarray(centers, dtype=float)
    K = len(centers)
    assert n % K == 0
    mu = np.zeros((n, q))
    block = n // K
    for k in range(K):
        mu[k * block:(k + 1) * block, :centers.shape[1]] = centers[k]
    return mu


def traced_instance(seed: int, n: int, q: int, K: int, sigma: float = 1.0,
                    sep: float = 0.0, max_iter: int = 50, max_tries: int = 50):
    """Draw data and run the traced clustering, retrying with fresh
    seeds until the run is non-degenerate. Returns (X, trace)."""
    for t in range(max_tries):
        mu = None
        if sep:
            centers = np.zeros((K, min(q, 2) if q >= 2 else 1))
            for k in range(K):
                centers[k, 0] = k * sep
            mu = blocked_means(n, q, centers) if n % K == 0 else None
        X = gauss_data(seed + 1000 * t, n, q, mu=mu, sigma=sigma)
        try:
            trace = run_kmeans(X, KMeansConfig(K=K, max_iter=max_iter, seed=seed + t))
            return X, trace
        except NotAvailable:
            continue
    raise RuntimeError(f"no non-degenerate instance found for seed {seed}")
