"""2-D projections of penultimate features (PCA or t-SNE), as CSV and plot."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Mapping, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np
import pandas as pd
import torch
from sklearn.decomposition import PCA
from sklearn.manifold import TSNE

from src.cskd.errors import ConfigurationError, NumericalError
from src.cskd.guidance.dataset import LabeledImageSet
from src.cskd.guidance.stats import extract_features
from src.cskd.models.classifiers import Classifier
from src.cskd.utils import PathLike

logger = logging.getLogger(__name__)

Method = Literal["pca", "tsne"]


@dataclass
class Projection:
    points: np.ndarray
    labels: np.ndarray
    sources: Optional[np.ndarray] = None

    def to_frame(self) -> pd.DataFrame:
        sources = self.sources if self.sources is not None else np.full(len(self.labels), "")
        return pd.DataFrame(
            {"x": self.points[:, 0], "y": self.points[:, 1], "label": self.labels, "source": sources}
        )


def tsne_perplexity(n: int, perplexity: float = 30.0) -> float:
    return min(perplexity, (n - 1) / 3)


def feature_projection_2d(
    features,
    labels,
    method: Method = "pca",
    seed: int = 0,
    perplexity: float = 30.0,
) -> Projection:
    """Embed ``features`` in two dimensions.

    Args:
        features: (N, d) array or tensor.
        labels: (N,) class labels, carried through unchanged.
        method: ``pca`` (deterministic) or ``tsne`` (deterministic per seed).
        seed: t-SNE random state.
        perplexity: t-SNE perplexity, capped at (N - 1) / 3.

    Raises:
        ConfigurationError: fewer than 3 points or an unknown method.
        NumericalError: ``pca`` on features with zero variance.
    """
    if isinstance(features, torch.Tensor):
        features = features.detach().cpu().numpy()
    if isinstance(labels, torch.Tensor):
        labels = labels.detach().cpu().numpy()
    x = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ConfigurationError(f"projection needs an (N >= 3, d) feature matrix, got shape {x.shape}")
    if method == "pca":
        if not np.any(x.var(axis=0) > 0):
            raise NumericalError("cannot run PCA on features with zero variance")
        k = min(2, x.shape[1])
        points = PCA(n_components=k, svd_solver="full").fit_transform(x)
        if k < 2:
            points = np.hstack([points, np.zeros((len(points), 1))])
    elif method == "tsne":
        tsne = TSNE(
            n_components=2,
            perplexity=tsne_perplexity(len(x), perplexity),
            init="pca",
            random_state=seed,
        )
        points = tsne.fit_transform(x)
    else:
        raise ConfigurationError(f"unknown projection method {method!r}; valid: pca, tsne")
    return Projection(points, labels)


def project_sets(
    model: Classifier,
    sets: Mapping[str, LabeledImageSet],
    method: Method = "tsne",
    seed: int = 0,
) -> Projection:
    """Jointly project the penultimate features of several labeled sets, tagged by name."""
    feats, labels, sources = [], [], []
    for name, data in sets.items():
        feats.append(extract_features(model, data).numpy())
        labels.append(data.labels.cpu().numpy())
        sources.append(np.full(len(data), name))
    projection = feature_projection_2d(np.concatenate(feats), np.concatenate(labels), method, seed)
    projection.sources = np.concatenate(sources)
    return projection


def save_projection(projection: Projection, directory: PathLike, stem: str = "projection") -> Path:
    """Write ``<stem>.csv`` (x, y, label, source) and ``<stem>.png`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame = projection.to_frame()
    csv_path = directory / f"{stem}.csv"
    frame.to_csv(csv_path, index=False)

    fig, ax = plt.subplots(figsize=(6, 6))
    markers = ["o", "^", "s", "x"]
    for i, (source, group) in enumerate(frame.groupby("source", sort=True)):
        ax.scatter(
            group["x"], group["y"], c=group["label"], cmap="tab10", s=8,
            marker=markers[i % len(markers)], label=source or None, vmin=0, vmax=max(int(frame["label"].max()), 1),
        )
    if frame["source"].nunique() > 1:
        ax.legend(loc="best")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(directory / f"{stem}.png", dpi=150)
    plt.close(fig)
    logger.info("wrote projection of %d points to %s", len(frame), csv_path)
    return csv_path
