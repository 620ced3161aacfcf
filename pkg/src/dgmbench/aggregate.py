"""Buyer-side aggregators.

Every aggregator maps one round's submissions to an ``AggregationResult``:
who was selected (and therefore paid), the aggregation weights, the
aggregated delta and a per-submission diagnostic score. Aggregators see
seller ids, deltas and dataset sizes only; they never see whether a seller
is malicious.

Submissions are passed as a ``(n, P)`` matrix whose rows follow ``ids``.
Results never depend on row order: every routine canonicalises by seller id.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Architecture, backward, forward_loss

__all__ = [
    "AggregationResult",
    "RoundInput",
    "fedavg",
    "fltrust",
    "martfl",
    "skymask",
    "two_means_1d",
    "two_means",
    "mask_loss",
    "mask_gradient",
    "train_mask",
    "make_aggregator",
    "FedAvg",
    "FLTrust",
    "MartFL",
    "SkyMask",
]

TIE_TOL = 1e-12


@dataclass
class AggregationResult:
    selected: list[int]
    weights: dict[int, float]
    aggregated: np.ndarray
    scores: dict[int, float]

    def reconstruct(self, ids, deltas: np.ndarray) -> np.ndarray:
        """Re-weight the given rows with the returned weights."""
        row = {int(i): k for k, i in enumerate(ids)}
        out = np.zeros(deltas.shape[1])
        for i in self.selected:
            out += self.weights[i] * deltas[row[i]]
        return out


@dataclass
class RoundInput:
    """Everything the buyer can observe in one round."""

    ids: list[int]
    deltas: np.ndarray
    sizes: np.ndarray
    root_delta: np.ndarray
    arch: Architecture | None = None
    theta: np.ndarray | None = None
    root_X: np.ndarray | None = None
    root_y: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def _canonical(ids, deltas):
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        raise ValueError("empty round: no submissions")
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.ndim != 2 or deltas.shape[0] != len(ids):
        raise ValueError("deltas must be an (n, P) matrix matching ids")
    if len(set(ids.tolist())) != len(ids):
        raise ValueError("duplicate seller ids")
    order = np.argsort(ids, kind="stable")
    return ids[order], deltas[order], order


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


# ---------------------------------------------------------------- fedavg


def fedavg(ids, deltas, sizes) -> AggregationResult:
    """Sample-size weighted mean; everyone is selected."""
    ids, deltas, order = _canonical(ids, deltas)
    sizes = np.asarray(sizes, dtype=np.float64)[order]
    if np.any(sizes < 0) or sizes.sum() <= 0:
        raise ValueError("sizes must be nonnegative with a positive total")
    w = sizes / sizes.sum()
    agg = w @ deltas
    weights = {int(i): float(x) for i, x in zip(ids, w)}
    return AggregationResult([int(i) for i in ids], weights, agg, dict(weights))


# ---------------------------------------------------------------- fltrust


def fltrust(ids, deltas, root_delta) -> AggregationResult:
    """ReLU-cosine trust scores and magnitude normalisation to the root delta."""
    ids, deltas, _ = _canonical(ids, deltas)
    root_delta = np.asarray(root_delta, dtype=np.float64)
    root_norm = np.linalg.norm(root_delta)
    if root_norm == 0:
        raise ValueError("buyer reference has zero norm")
    norms = np.linalg.norm(deltas, axis=1)
    ts = np.array([max(0.0, _cosine(g, root_delta)) for g in deltas])
    ts[norms == 0] = 0.0
    scaled = np.zeros_like(deltas)
    nz = norms > 0
    scaled[nz] = deltas[nz] * (root_norm / norms[nz])[:, None]
    total = ts.sum()
    scores = {int(i): float(s) for i, s in zip(ids, ts)}
    if total <= 0:
        return AggregationResult([], {}, np.zeros(deltas.shape[1]), scores)
    agg = (ts @ scaled) / total
    sel = [int(i) for i, s in zip(ids, ts) if s > 0]
    weights = {int(i): float(s / total) for i, s in zip(ids, ts) if s > 0}
    return AggregationResult(sel, weights, agg, scores)


def fltrust_reconstruct(result: AggregationResult, ids, deltas, root_delta) -> np.ndarray:
    """Recompute the FLTrust aggregate from its weights and renormalised rows."""
    root_norm = np.linalg.norm(root_delta)
    row = {int(i): k for k, i in enumerate(ids)}
    out = np.zeros(deltas.shape[1])
    for i in result.selected:
        g = deltas[row[i]]
        out += result.weights[i] * g * (root_norm / np.linalg.norm(g))
    return out


# ---------------------------------------------------------------- martfl


def two_means_1d(values) -> np.ndarray:
    """Optimal two-group split of scalars by within-group squared error.

    Returns a boolean mask marking the group with the higher mean. Since an
    optimal 1-D 2-means partition is contiguous in sorted order, every split
    point is tried. Equal-cost splits resolve to the lowest split point;
    identical values (within 1e-12) put everything in the upper group.
    """
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    if n == 0:
        return np.zeros(0, dtype=bool)
    if n == 1 or v.max() - v.min() <= TIE_TOL:
        return np.ones(n, dtype=bool)
    order = np.argsort(v, kind="stable")
    s = v[order]
    csum = np.cumsum(s)
    csq = np.cumsum(s * s)
    best_k, best_cost = 1, np.inf
    for k in range(1, n):
        left = csq[k - 1] - csum[k - 1] ** 2 / k
        rs, rq = csum[-1] - csum[k - 1], csq[-1] - csq[k - 1]
        right = rq - rs ** 2 / (n - k)
        cost = left + right
        if cost < best_cost - TIE_TOL:
            best_k, best_cost = k, cost
    upper = np.zeros(n, dtype=bool)
    upper[order[best_k:]] = True
    return upper


def _medoid(rows: np.ndarray) -> np.ndarray:
    dist = np.linalg.norm(rows[:, None, :] - rows[None, :, :], axis=2).sum(axis=1)
    return rows[int(np.argmin(dist))]


def martfl(ids, deltas, reference, reference_update: str = "aggregate"):
    """Similarity-to-reference selection with an evolving reference.

    Returns ``(result, next_reference)``. Cosine scores against the current
    reference are split by 1-D 2-means and the higher group is selected;
    zero-norm deltas score 0 and are left out of the split entirely.
    """
    ids, deltas, _ = _canonical(ids, deltas)
    reference = np.asarray(reference, dtype=np.float64)
    if np.linalg.norm(reference) == 0:
        raise ValueError("reference has zero norm")
    norms = np.linalg.norm(deltas, axis=1)
    s = np.array([_cosine(g, reference) for g in deltas])
    s[norms == 0] = 0.0
    scores = {int(i): float(x) for i, x in zip(ids, s)}

    live = np.flatnonzero(norms > 0)
    if len(live) == 0:
        return AggregationResult([], {}, np.zeros(deltas.shape[1]), scores), reference
    upper = two_means_1d(s[live])
    chosen = live[upper]
    w = np.maximum(0.0, s[chosen])
    if w.sum() <= 0:
        w = np.ones(len(chosen))
    w = w / w.sum()
    agg = w @ deltas[chosen]
    sel = [int(ids[k]) for k in chosen]
    weights = {int(ids[k]): float(x) for k, x in zip(chosen, w)}

    if np.linalg.norm(agg) > 0:
        nxt = agg if reference_update == "aggregate" else _medoid(deltas[chosen])
    else:
        nxt = reference
    return AggregationResult(sel, weights, agg, scores), nxt.copy()


# ---------------------------------------------------------------- skymask


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def mask_loss(arch: Architecture, theta, delta, z, X, y) -> float:
    """Root-set loss of the masked model ``theta + sigmoid(z) * delta``."""
    loss, _ = forward_loss(arch, theta + _sigmoid(z) * delta, X, y)
    return loss


def mask_gradient(arch: Architecture, theta, delta, z, X, y) -> np.ndarray:
    """d(mask_loss)/dz by the chain rule through the sigmoid mask."""
    sig = _sigmoid(z)
    g_theta = backward(arch, theta + sig * delta, X, y)
    return g_theta * delta * sig * (1.0 - sig)


def train_mask(arch, theta, delta, X, y, steps: int, lr: float) -> np.ndarray:
    """Full-batch gradient descent on the mask logits from ``z = 0``."""
    z = np.zeros_like(theta)
    for _ in range(steps):
        z -= lr * mask_gradient(arch, theta, delta, z, X, y)
    return _sigmoid(z)


def two_means(points: np.ndarray, max_iter: int = 100) -> np.ndarray:
    """Deterministic Euclidean 2-means; returns labels in {0, 1}.

    Seeds are the point farthest from the mean and the point farthest from
    that one (first index on ties), so the outcome depends only on the
    ordered input. All-identical points form a single cluster (all 0).
    """
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n < 2 or np.abs(pts - pts[0]).max() <= TIE_TOL:
        return np.zeros(n, dtype=np.int64)
    a = int(np.argmax(np.linalg.norm(pts - pts.mean(axis=0), axis=1)))
    b = int(np.argmax(np.linalg.norm(pts - pts[a], axis=1)))
    centers = np.stack([pts[a], pts[b]])
    labels = None
    for _ in range(max_iter):
        d = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=2)
        new = (d[:, 1] < d[:, 0]).astype(np.int64)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in (0, 1):
            if np.any(labels == c):
                centers[c] = pts[labels == c].mean(axis=0)
    return labels


def skymask(
    ids,
    deltas,
    arch: Architecture,
    theta: np.ndarray,
    root_X: np.ndarray,
    root_y: np.ndarray,
    mask_steps: int = 20,
    mask_lr: float = 0.1,
) -> AggregationResult:
    """Learn a sigmoid mask per delta on the root set, then 2-means the masks.

    The larger cluster is selected; equal sizes go to the cluster whose
    members' plain average gives the lower root-set loss. Scores are the
    negated distances to the own-cluster centroid.
    """
    ids, deltas, _ = _canonical(ids, deltas)
    if root_X is None or len(root_X) == 0:
        raise ValueError("root dataset is empty")
    norms = np.linalg.norm(deltas, axis=1)
    live = np.flatnonzero(norms > 0)
    scores = {int(i): 0.0 for i in ids}
    if len(live) == 0:
        return AggregationResult([], {}, np.zeros(deltas.shape[1]), scores)

    masks = np.stack([train_mask(arch, theta, deltas[k], root_X, root_y, mask_steps, mask_lr) for k in live])
    labels = two_means(masks)
    centroids = {c: masks[labels == c].mean(axis=0) for c in (0, 1) if np.any(labels == c)}
    for row, k in enumerate(live):
        scores[int(ids[k])] = -float(np.linalg.norm(masks[row] - centroids[labels[row]]))

    sizes = {c: int(np.sum(labels == c)) for c in centroids}
    if len(sizes) == 1 or sizes[0] != sizes[1]:
        pick = max(sizes, key=lambda c: (sizes[c], -c))
    else:
        losses = {
            c: forward_loss(arch, theta + deltas[live[labels == c]].mean(axis=0), root_X, root_y)[0]
            for c in (0, 1)
        }
        pick = 0 if losses[0] <= losses[1] else 1
    chosen = live[labels == pick]
    w = 1.0 / len(chosen)
    agg = deltas[chosen].mean(axis=0)
    sel = [int(ids[k]) for k in chosen]
    return AggregationResult(sel, {i: w for i in sel}, agg, scores)


# ---------------------------------------------------------------- stateful wrappers


class FedAvg:
    name = "fedavg"

    def aggregate(self, r: RoundInput) -> AggregationResult:
        return fedavg(r.ids, r.deltas, r.sizes)


class FLTrust:
    name = "fltrust"

    def aggregate(self, r: RoundInput) -> AggregationResult:
        return fltrust(r.ids, r.deltas, r.root_delta)


class MartFL:
    """Keeps the reference between rounds; it starts as the first root delta."""

    name = "martfl"

    def __init__(self, reference_update: str = "aggregate"):
        self.reference_update = reference_update
        self.reference: np.ndarray | None = None

    def aggregate(self, r: RoundInput) -> AggregationResult:
        if self.reference is None:
            self.reference = np.array(r.root_delta, dtype=np.float64)
        result, self.reference = martfl(r.ids, r.deltas, self.reference, self.reference_update)
        return result


class SkyMask:
    name = "skymask"

    def __init__(self, mask_steps: int = 20, mask_lr: float = 0.1):
        self.mask_steps = mask_steps
        self.mask_lr = mask_lr

    def aggregate(self, r: RoundInput) -> AggregationResult:
        return skymask(r.ids, r.deltas, r.arch, r.theta, r.root_X, r.root_y, self.mask_steps, self.mask_lr)


def make_aggregator(cfg):
    """Build an aggregator from an ``AggregatorConfig``."""
    if cfg.kind == "fedavg":
        return FedAvg()
    if cfg.kind == "fltrust":
        return FLTrust()
    if cfg.kind == "martfl":
        return MartFL(cfg.reference_update)
    if cfg.kind == "skymask":
        return SkyMask(cfg.mask_steps, cfg.mask_lr)
    raise ValueError(f"unknown aggregator {cfg.kind!r}")
