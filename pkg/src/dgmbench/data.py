"""Datasets and the marketplace split.

Two sources are supported: a Gaussian-mixture generator for desk-scale
experiments and a reader for IDX image files (the MNIST/Fashion-MNIST
format). ``split_market`` carves the training set into the buyer's root set
and one private set per seller.
"""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attack import apply_trigger
from .config import MarketplaceConfig

__all__ = [
    "DataFormatError",
    "Dataset",
    "Partition",
    "make_synthetic",
    "load_idx",
    "write_idx",
    "save_cache",
    "load_cache",
    "train_test_split",
    "split_market",
]

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
PROPORTION_FLOOR = 1e-6


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    num_classes: int
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ValueError("features must be (n, d) with one label per row")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.num_classes, self.image_shape)


# ---------------------------------------------------------------- sources


def make_synthetic(K: int, d: int, n: int, seed: int, separation: float = 2.0) -> Dataset:
    """Balanced Gaussian mixture rescaled into ``[0, 1]``.

    Class means lie along ``K`` random orthonormal directions at radius
    ``2 * separation``; noise is isotropic with unit variance. A single affine
    map sends the global min/max to 0/1.
    """
    if K < 2 or d < K or n < 10 * K:
        raise ValueError("need K >= 2, d >= K and n >= 10*K")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(d, K)))
    means = 2.0 * separation * q.T
    y = np.arange(n) % K
    rng.shuffle(y)
    X = means[y] + rng.normal(size=(n, d))
    lo, hi = X.min(), X.max()
    X = (X - lo) / (hi - lo)
    return Dataset(X, y.astype(np.int64), K)


def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def load_idx(images_path: str | Path, labels_path: str | Path, num_classes: int | None = None) -> Dataset:
    """Read an IDX image/label pair; pixels are scaled to ``[0, 1]``.

    Files ending in ``.gz`` are decompressed transparently.
    """
    raw = _read_bytes(images_path)
    if len(raw) < 16:
        raise DataFormatError(f"{images_path}: header truncated")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    body = raw[16:]
    if len(body) != count * rows * cols:
        raise DataFormatError(f"{images_path}: length mismatch, header promises {count} images of {rows}x{cols}")
    images = np.frombuffer(body, dtype=np.uint8).reshape(count, rows * cols)

    raw = _read_bytes(labels_path)
    if len(raw) < 8:
        raise DataFormatError(f"{labels_path}: header truncated")
    magic, n_labels = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if len(raw) - 8 != n_labels:
        raise DataFormatError(f"{labels_path}: length mismatch, header promises {n_labels} labels")
    if n_labels != count:
        raise DataFormatError(f"length mismatch: {count} images but {n_labels} labels")
    labels = np.frombuffer(raw[8:], dtype=np.uint8).astype(np.int64)

    k = num_classes if num_classes is not None else max(10, int(labels.max()) + 1 if count else 10)
    return Dataset(images.astype(np.float64) / 255.0, labels, k, (rows, cols))


def write_idx(images: np.ndarray, labels: np.ndarray, images_path: str | Path, labels_path: str | Path) -> None:
    """Write uint8 images ``(n, rows, cols)`` and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(labels.tobytes())


def save_cache(ds: Dataset, path: str | Path) -> None:
    """Dump a dataset to an ``.npz`` archive (keys X, y, num_classes, image_shape)."""
    shape = np.array(ds.image_shape if ds.image_shape else (0, 0), dtype=np.int64)
    np.savez(path, X=ds.X, y=ds.y, num_classes=np.int64(ds.num_classes), image_shape=shape)


def load_cache(path: str | Path) -> Dataset:
    with np.load(path) as z:
        shape = tuple(int(s) for s in z["image_shape"])
        return Dataset(z["X"], z["y"], int(z["num_classes"]), shape if shape != (0, 0) else None)


def train_test_split(ds: Dataset, test_fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    order = rng.permutation(len(ds))
    n_test = int(round(test_fraction * len(ds)))
    return ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))


# ---------------------------------------------------------------- split


@dataclass(frozen=True)
class Partition:
    """Buyer root set, seller sets and test sets of one experiment.

    Index arrays refer to rows of ``train``. ``test_triggered_labels`` keeps the
    true labels of the triggered copies.
    """

    train: Dataset
    buyer_idx: np.ndarray
    seller_idx: list[np.ndarray]
    test: Dataset
    test_triggered: Dataset | None
    test_triggered_labels: np.ndarray | None
    class_proportions: np.ndarray  # (N, K) realised seller class shares
    buyer_proportions: np.ndarray = field(default=None)

    @property
    def buyer(self) -> Dataset:
        return self.train.subset(self.buyer_idx)

    def seller(self, i: int) -> Dataset:
        return self.train.subset(self.seller_idx[i])

    @property
    def num_sellers(self) -> int:
        return len(self.seller_idx)


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer counts summing to ``total`` proportional to ``weights``."""
    weights = np.asarray(weights, dtype=np.float64)
    if total == 0 or weights.sum() <= 0:
        return np.zeros(len(weights), dtype=np.int64)
    exact = weights / weights.sum() * total
    counts = np.floor(exact).astype(np.int64)
    rest = total - counts.sum()
    # ties resolved toward the lower class index
    order = np.lexsort((np.arange(len(weights)), -(exact - counts)))
    counts[order[:rest]] += 1
    return counts


def _fill_with_caps(weights: np.ndarray, total: int, caps: np.ndarray) -> np.ndarray:
    """Largest-remainder allocation that never exceeds ``caps``.

    Shortfalls are redistributed proportionally over classes that still have
    room; classes with zero weight are used only when nothing else is left.
    """
    caps = np.asarray(caps, dtype=np.int64)
    if total > caps.sum():
        raise ValueError("pool exhausted")
    counts = np.zeros(len(caps), dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64).copy()
    while counts.sum() < total:
        room = caps - counts
        active = room > 0
        ww = np.where(active, w, 0.0)
        if ww.sum() <= 0:
            ww = active.astype(np.float64)
        add = np.minimum(_largest_remainder(ww, total - counts.sum()), room)
        if add.sum() == 0:
            # every proportional share rounded to zero; hand one unit out
            add[np.argmax(np.where(active, ww, -1.0))] = 1
        counts += add
    return counts


def _buyer_indices(train: Dataset, size: int, cfg: MarketplaceConfig, rng: np.random.Generator):
    K = train.num_classes
    by_class = [np.flatnonzero(train.y == c) for c in range(K)]
    avail = np.array([len(ix) for ix in by_class])
    if cfg.buyer_bias.kind == "dirichlet":
        target = rng.dirichlet(np.full(K, cfg.buyer_bias.alpha))
    else:
        # stratified uniform: class shares follow the training set
        target = avail / avail.sum()
    counts = _fill_with_caps(target, size, avail)
    chosen = [rng.choice(by_class[c], size=counts[c], replace=False) for c in range(K)]
    return np.sort(np.concatenate(chosen)).astype(np.int64), target


def split_market(
    train: Dataset,
    test: Dataset,
    cfg: MarketplaceConfig,
    rng: np.random.Generator,
) -> Partition:
    """Split ``train`` into the buyer root set and ``N`` seller sets.

    Seller ``i`` aims for class shares ``q_ic ∝ max(1e-6, p_Bc (1 + u_ic))``
    with ``u_ic ~ U(-f, f)`` and ``p_B`` the buyer root's class distribution.
    Seller sizes are equal up to one sample. When a class runs dry the
    shortfall is taken proportionally from classes that still have samples.
    """
    N = cfg.num_sellers
    K = train.num_classes
    n_buyer = int(round(cfg.buyer_root_fraction * len(train)))
    if len(train) < N + n_buyer:
        raise ValueError("training set too small for the requested split")

    buyer_idx, _ = _buyer_indices(train, n_buyer, cfg, rng)
    buyer_counts = np.bincount(train.y[buyer_idx], minlength=K)
    p_b = buyer_counts / buyer_counts.sum()

    mask = np.ones(len(train), dtype=bool)
    mask[buyer_idx] = False
    pools = [rng.permutation(np.flatnonzero(mask & (train.y == c))) for c in range(K)]
    pool_size = sum(len(p) for p in pools)
    sizes = np.full(N, pool_size // N)
    sizes[: pool_size % N] += 1

    f = cfg.seller_noise
    u = rng.uniform(-f, f, size=(N, K)) if f > 0 else np.zeros((N, K))
    q = np.maximum(PROPORTION_FLOOR, p_b[None, :] * (1.0 + u))
    q /= q.sum(axis=1, keepdims=True)

    cursor = np.zeros(K, dtype=np.int64)
    seller_idx, realised = [], np.zeros((N, K))
    for i in range(N):
        caps = np.array([len(pools[c]) for c in range(K)]) - cursor
        counts = _fill_with_caps(q[i], int(sizes[i]), caps)
        parts = []
        for c in range(K):
            parts.append(pools[c][cursor[c]:cursor[c] + counts[c]])
            cursor[c] += counts[c]
        seller_idx.append(np.sort(np.concatenate(parts)).astype(np.int64))
        realised[i] = counts / max(1, counts.sum())

    trig, trig_labels = None, None
    at = cfg.attack
    if at.kind in ("backdoor", "sybil_backdoor"):
        keep = np.flatnonzero(test.y != at.target_label)
        Xt, yt = apply_trigger(test.X[keep], test.y[keep], at.trigger, at.target_label, test.image_shape)
        trig = Dataset(Xt, yt, K, test.image_shape)
        trig_labels = test.y[keep].copy()

    return Partition(train, buyer_idx, seller_idx, test, trig, trig_labels, realised, p_b)
