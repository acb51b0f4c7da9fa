"""PCA over encoder embeddings and decoding along principal axes."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PCA:
    mean: np.ndarray         # L
    axes: np.ndarray         # L x L, column k is the k-th principal axis
    eigenvalues: np.ndarray  # L, descending

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def project(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.axes

    def reconstruct(self, coords) -> np.ndarray:
        return np.asarray(coords, dtype=np.float64) @ self.axes.T + self.mean

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "axes": self.axes.reshape(-1).tolist(),
            "dim": self.dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PCA":
        dim = int(d["dim"])
        return cls(
            np.asarray(d["mean"], dtype=np.float64),
            np.asarray(d["axes"], dtype=np.float64).reshape(dim, dim),
            np.asarray(d["eigenvalues"], dtype=np.float64),
        )


def pca_fit(embeddings) -> PCA:
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"embeddings must be N x L, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ValueError("PCA needs at least two embeddings")
    if not np.isfinite(x).all():
        raise ValueError("embeddings contain non-finite values")
    mean = x.mean(axis=0)
    cov = np.cov(x, rowvar=False, ddof=1).reshape(x.shape[1], x.shape[1])
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals, kind="stable")[::-1]
    vals, vecs = vals[order], vecs[:, order]
    vals = np.maximum(vals, 0.0)  # eigh can return tiny negatives for rank-deficient input
    # sign: the largest-magnitude component of every axis is positive
    lead = np.abs(vecs).argmax(axis=0)
    signs = np.sign(vecs[lead, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1
    return PCA(mean, vecs * signs, vals)


def perturb_axis(mu, pca: PCA, k: int, amount: float) -> np.ndarray:
    """mu + amount * (k-th principal axis), returned as float32."""
    if not 0 <= k < pca.dim:
        raise IndexError(f"axis {k} out of range for {pca.dim}-d PCA")
    mu = np.asarray(mu, dtype=np.float32)
    if mu.shape != (pca.dim,):
        raise ValueError(f"latent has shape {mu.shape}, PCA is {pca.dim}-d")
    return mu + np.float32(amount) * pca.axes[:, k].astype(np.float32)


def save_pca(pca: PCA, path) -> None:
    with open(path, "w") as f:
        json.dump(pca.to_dict(), f)
        f.write("\n")


def load_pca(path) -> PCA:
    with open(path) as f:
        return PCA.from_dict(json.load(f))
