"""PCA over speaker embeddings, cluster summaries and principal-component replacement."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

GROUPS = ("announcer", "non-expert")
GENDERS = ("male", "female")


@dataclass(frozen=True)
class EmbeddingSet:
    vectors: np.ndarray  # (n_items, dim)
    speaker_ids: tuple
    groups: tuple
    genders: tuple

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise ValueError("vectors must be a 2-D (n_items, dim) matrix")
        n = vectors.shape[0]
        if n < 2:
            raise ValueError(f"need at least 2 embeddings, got {n}")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embedding vectors must be finite")
        for name in ("speaker_ids", "groups", "genders"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has {len(getattr(self, name))} labels for {n} vectors")
        for g in self.groups:
            if g not in GROUPS:
                raise ValueError(f"unknown group {g!r}; expected one of {GROUPS}")
        for g in self.genders:
            if g not in GENDERS:
                raise ValueError(f"unknown gender {g!r}; expected one of {GENDERS}")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        for name in ("speaker_ids", "groups", "genders"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def select(self, speaker_id=None, group=None, gender=None) -> np.ndarray:
        """Boolean mask of items matching every given label."""
        mask = np.ones(len(self), dtype=bool)
        for labels, want in ((self.speaker_ids, speaker_id), (self.groups, group), (self.genders, gender)):
            if want is not None:
                mask &= np.array([lab == want for lab in labels])
        return mask


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (n_components, dim), orthonormal rows
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PcaModel":
        return cls(
            np.asarray(data["mean"], dtype=np.float64),
            np.asarray(data["components"], dtype=np.float64),
            np.asarray(data["explained_variance"], dtype=np.float64),
        )


@dataclass(frozen=True)
class ClusterSummary:
    group: str
    gender: str
    n_items: int
    centroid: np.ndarray  # (pc1, pc2)
    covariance: np.ndarray  # 2x2
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "gender": self.gender,
            "n_items": self.n_items,
            "centroid": self.centroid.tolist(),
            "covariance": self.covariance.tolist(),
            "degenerate": self.degenerate,
        }


def _orient(components: np.ndarray) -> np.ndarray:
    # flip each row so its largest-magnitude entry is positive (first index wins ties)
    lead = np.argmax(np.abs(components), axis=1)
    signs = np.where(components[np.arange(components.shape[0]), lead] < 0, -1.0, 1.0)
    return components * signs[:, None]


def fit_pca(data, n_components: int) -> PcaModel:
    """PCA by SVD of the centered data matrix.

    ``data`` is an :class:`EmbeddingSet` or a plain ``(n_items, dim)`` array.
    Component signs follow a fixed convention so fits are reproducible.
    """
    x = np.asarray(data.vectors if isinstance(data, EmbeddingSet) else data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("PCA needs at least 2 items")
    n, dim = x.shape
    if not 1 <= n_components <= min(n - 1, dim):
        raise ValueError(f"n_components must be in [1, {min(n - 1, dim)}], got {n_components}")
    mean = x.mean(axis=0)
    _, sing, vt = np.linalg.svd(x - mean, full_matrices=False)
    components = _orient(vt[:n_components])
    variance = sing[:n_components] ** 2 / (n - 1)
    return PcaModel(mean, components, variance)


def project(model: PcaModel, vector) -> np.ndarray:
    """Scores of one vector ``(dim,)`` or a stack ``(n, dim)`` on every component."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape[-1] != model.mean.size:
        raise ValueError(f"dimension mismatch: vector has {v.shape[-1]}, model has {model.mean.size}")
    return (v - model.mean) @ model.components.T


def reconstruct(model: PcaModel, scores) -> np.ndarray:
    return model.mean + np.asarray(scores, dtype=np.float64) @ model.components


def replace_component(model: PcaModel, vector, k: int, target: float) -> np.ndarray:
    """Move ``vector`` along component ``k`` (0-based) so its score becomes ``target``.

    Other scores and the out-of-span residual are left unchanged.
    """
    if not 0 <= k < model.n_components:
        raise ValueError(f"component index {k} out of range for {model.n_components} components")
    v = np.asarray(vector, dtype=np.float64)
    current = project(model, v)[..., k]
    return v + np.multiply.outer(target - current, model.components[k])


def group_mean_score(
    model: PcaModel,
    data: EmbeddingSet,
    k: int,
    group: Optional[str] = None,
    gender: Optional[str] = None,
    speaker_id: Optional[str] = None,
) -> float:
    """Mean score on component ``k`` over the items matching the filter."""
    if not 0 <= k < model.n_components:
        raise ValueError(f"component index {k} out of range for {model.n_components} components")
    mask = data.select(speaker_id=speaker_id, group=group, gender=gender)
    if not mask.any():
        raise ValueError(f"no embeddings match group={group!r} gender={gender!r} speaker={speaker_id!r}")
    return float(np.mean(project(model, data.vectors[mask])[:, k]))


def cluster_stats(model: PcaModel, data: EmbeddingSet) -> list[ClusterSummary]:
    """Centroid and unbiased covariance of (PC1, PC2) scores per (group, gender)."""
    if model.n_components < 2:
        raise ValueError("cluster statistics need at least 2 components")
    scores = project(model, data.vectors)[:, :2]
    out = []
    for key in sorted(set(zip(data.groups, data.genders))):
        pts = scores[data.select(group=key[0], gender=key[1])]
        centroid = pts.mean(axis=0)
        if len(pts) < 2:
            out.append(ClusterSummary(key[0], key[1], len(pts), centroid, np.zeros((2, 2)), True))
            continue
        dev = pts - centroid
        cov = dev.T @ dev / (len(pts) - 1)
        cov = (cov + cov.T) / 2
        out.append(ClusterSummary(key[0], key[1], len(pts), centroid, cov))
    return out


# --------------------------------------------------------------------------- files

def read_embeddings(path, expect_dim: Optional[int] = None) -> EmbeddingSet:
    """Read ``speaker_id,group,gender,e0,...,e{D-1}`` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["speaker_id", "group", "gender"]:
            raise ValueError(f"{path}: header must start with speaker_id,group,gender")
        dims = header[3:]
        if dims != [f"e{i}" for i in range(len(dims))] or not dims:
            raise ValueError(f"{path}: embedding columns must be e0..e{{D-1}}")
        ids, groups, genders, rows = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            ids.append(row[0])
            groups.append(row[1])
            genders.append(row[2])
            rows.append([float(v) for v in row[3:]])
    if expect_dim is not None and len(dims) != expect_dim:
        raise ValueError(f"{path}: embedding dimension {len(dims)} != expected {expect_dim}")
    return EmbeddingSet(np.array(rows), ids, groups, genders)


def write_embeddings(path, data: EmbeddingSet, rows=None, vectors=None) -> None:
    """Write ``data`` as embedding CSV.

    ``rows`` restricts output to those item indices and ``vectors`` substitutes
    the written vectors (e.g. after component replacement).
    """
    vectors = data.vectors if vectors is None else np.asarray(vectors, dtype=np.float64)
    rows = range(len(data)) if rows is None else rows
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["speaker_id", "group", "gender"] + [f"e{i}" for i in range(data.dim)])
        for i in rows:
            writer.writerow(
                [data.speaker_ids[i], data.groups[i], data.genders[i]] + [repr(float(v)) for v in vectors[i]]
            )


def write_scores(path, model: PcaModel, data: EmbeddingSet) -> None:
    scores = project(model, data.vectors)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["speaker_id", "group", "gender"] + [f"pc{i + 1}" for i in range(model.n_components)])
        for sid, grp, gen, row in zip(data.speaker_ids, data.groups, data.genders, scores):
            writer.writerow([sid, grp, gen] + [repr(float(v)) for v in row])


def write_model(path, model: PcaModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path) -> PcaModel:
    with open(path, encoding="utf-8") as fh:
        return PcaModel.from_dict(json.load(fh))


def write_clusters(path, clusters: Sequence[ClusterSummary]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"clusters": [c.to_dict() for c in clusters]}, fh, indent=1)
        fh.write("\n")
