"""Two-dimensional PCA embeddings of hidden-layer activations."""

from __future__ import annotations

import csv

import numpy as np

from ..errors import ContractError, DegenerateEmbeddingError
from ..nnmodel import MlpParams, activations
from .. import ndgrad as nd


def pca_2d(A) -> np.ndarray:
    """Project mean-centered rows of ``A`` onto the top two principal axes.

    Each axis is signed so that its largest-magnitude loading is positive.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 2:
        raise ContractError(f"pca_2d: need at least two rows, got shape {A.shape}")
    centered = A - A.mean(axis=0)
    if np.abs(centered).max() <= 1e-12 * (1.0 + np.abs(A).max()):
        raise DegenerateEmbeddingError("activations have zero variance")
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:2]
    if axes.shape[0] < 2:
        axes = np.vstack([axes, np.zeros((2 - axes.shape[0], A.shape[1]))])
    for i in range(axes.shape[0]):
        if axes[i, np.argmax(np.abs(axes[i]))] < 0:
            axes[i] = -axes[i]
    return centered @ axes.T


def embed_features(params: MlpParams, layer: int, X) -> np.ndarray:
    """PCA coordinates of the activations after ``layer`` (1 = first hidden layer,
    ``params.n_layers`` = the softmax output)."""
    if not 1 <= layer <= params.n_layers:
        raise ContractError(f"layer must lie in 1..{params.n_layers}, got {layer}")
    acts = activations(params, X, upto=layer)[-1]
    if layer == params.n_layers:
        acts = nd.softmax(acts)
    flat = acts.data.reshape(acts.shape[0], -1)
    return pca_2d(flat)


def write_embedding_csv(path, coords, labels) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "label"])
        for (x, y), label in zip(coords, labels):
            w.writerow([repr(float(x)), repr(float(y)), int(label)])
