"""Where a trained visual scorer puts questions in its hidden space.

States are captured from the recurrent core after the five context panels
and before any candidate panel, so the geometry reflects exactly what the
model carries into scoring. Rows are labelled with the question's relation
and its target domain; centroid distances over either labelling say which
distinction the model keeps further apart.
"""

from __future__ import annotations

import csv
import dataclasses
import itertools

import numpy as np


def capture_states(model, dataset, n: int, *, batch_size: int = 64):
    """Hidden states for the first ``n`` questions of a question file.

    Returns (states, labels): states[i] is the recurrent state after the
    five context panels of question i, labels[i] is {"relation": name,
    "domain": target-domain name}.
    """
    if not hasattr(model, "context_states"):
        raise ValueError("hidden-state capture needs a recurrent core; "
                         f"{type(model).__name__} has none")
    if n > len(dataset):
        raise ValueError(f"asked for {n} states, file holds {len(dataset)}")
    chunks = []
    labels = []
    for lo in range(0, n, batch_size):
        idx = np.arange(lo, min(lo + batch_size, n))
        panels = dataset.raster_batch(idx)[:, :5].astype(model.dtype) / 255.0
        chunks.append(model.context_states(panels))
        for i in idx:
            q = dataset.questions[i]
            labels.append({"relation": q.relation.name,
                           "domain": q.target_domain.name})
    return np.concatenate(chunks, axis=0), labels


@dataclasses.dataclass
class PcaResult:
    coordinates: np.ndarray       # (n, out_dims)
    components: np.ndarray        # (out_dims, d) rows are directions
    explained_ratio: np.ndarray   # (out_dims,)
    eigenvalues: np.ndarray       # full spectrum, descending


def pca_project(states: np.ndarray, out_dims: int = 2) -> PcaResult:
    """Project onto the top principal directions of the state cloud.

    Eigendecomposition of the mean-centred covariance (normalised by n, so
    the mean squared reconstruction error of a k-dim projection equals the
    sum of the discarded eigenvalues). A zero-variance cloud projects to
    zeros with zero explained ratios.
    """
    x = np.asarray(states, dtype=np.float64)
    if x.shape[0] < out_dims:
        raise ValueError(f"{x.shape[0]} rows cannot support {out_dims} "
                         "components")
    centred = x - x.mean(axis=0)
    cov = centred.T @ centred / x.shape[0]
    eigenvalues, vectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    vectors = vectors[:, order]
    components = vectors[:, :out_dims].T.copy()
    # fix each direction's sign so repeated runs agree
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    total = eigenvalues.sum()
    ratio = (eigenvalues[:out_dims] / total if total > 0
             else np.zeros(out_dims))
    return PcaResult(coordinates=centred @ components.T,
                     components=components,
                     explained_ratio=ratio,
                     eigenvalues=eigenvalues)


def _minmax(states: np.ndarray) -> np.ndarray:
    lo = states.min(axis=0)
    span = states.max(axis=0) - lo
    span[span == 0] = 1.0
    return (states - lo) / span


def centroid_distances(states: np.ndarray, labels: list, group_by: str, *,
                       groups=None, normalize: bool = False) -> dict:
    """Mean and standard deviation of pairwise centroid distances.

    One centroid per distinct ``group_by`` label ("relation" or "domain");
    the statistics run over all unordered centroid pairs. ``groups`` may
    name the expected label set, in which case a label without rows is an
    error. ``normalize`` first min-max scales every state dimension to
    [0, 1], which bounds any distance by sqrt(width).
    """
    x = np.asarray(states, dtype=np.float64)
    if normalize:
        x = _minmax(x)
    keys = [lab[group_by] for lab in labels]
    if groups is None:
        groups = sorted(set(keys))
    centroids = {}
    for g in groups:
        rows = x[[i for i, k in enumerate(keys) if k == g]]
        if rows.shape[0] == 0:
            raise ValueError(f"group {g!r} has no rows")
        centroids[g] = rows.mean(axis=0)
    if len(centroids) < 2:
        raise ValueError("centroid distances need at least two groups")
    dists = [float(np.linalg.norm(centroids[a] - centroids[b]))
             for a, b in itertools.combinations(groups, 2)]
    return {"mean": float(np.mean(dists)), "sd": float(np.std(dists)),
            "pairs": len(dists)}


def relation_domain_distance_report(states: np.ndarray, labels: list) -> dict:
    """Inter-relation vs inter-domain centroid separation, raw and after
    per-dimension min-max normalization."""
    out = {}
    for mode, norm in (("raw", False), ("normalized", True)):
        out[mode] = {
            "inter_relation": centroid_distances(
                states, labels, "relation", normalize=norm),
            "inter_domain": centroid_distances(
                states, labels, "domain", normalize=norm),
        }
    return out


def export_coordinates_csv(path, coordinates: np.ndarray,
                           labels: list) -> None:
    """Coordinates plus labels, one row per state, for external plotting."""
    coordinates = np.asarray(coordinates)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"pc{i + 1}" for i in range(coordinates.shape[1])]
                        + ["relation", "domain"])
        for row, lab in zip(coordinates, labels):
            writer.writerow([f"{v:.8g}" for v in row]
                            + [lab["relation"], lab["domain"]])
