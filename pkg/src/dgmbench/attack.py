"""Attack plug-ins: backdoor triggers, label flipping and Sybil mimicry."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import AttackConfig, TriggerConfig

__all__ = [
    "SellerRole",
    "assign_roles",
    "apply_trigger",
    "poison_dataset",
    "sybil_postprocess",
]


@dataclass(frozen=True)
class SellerRole:
    seller_id: int
    malicious: bool
    sybil_group: int | None = None

    @property
    def flag(self) -> str:
        return "malicious" if self.malicious else "benign"


def assign_roles(num_sellers: int, attack: AttackConfig, rng: np.random.Generator) -> list[SellerRole]:
    """Flag ``floor(adversary_fraction * N)`` sellers as malicious.

    The malicious sellers are the first entries of a seeded permutation. Under
    ``sybil_backdoor`` they all collude in group 0.
    """
    count = math.floor(attack.adversary_fraction * num_sellers)
    if count >= num_sellers:
        raise ValueError("adversary fraction leaves no benign seller")
    malicious = set(int(i) for i in rng.permutation(num_sellers)[:count])
    group = 0 if attack.kind == "sybil_backdoor" else None
    return [
        SellerRole(i, i in malicious, group if i in malicious else None)
        for i in range(num_sellers)
    ]


def apply_trigger(
    X: np.ndarray,
    y: np.ndarray,
    trigger: TriggerConfig,
    target_label: int,
    image_shape: tuple[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Stamp the trigger on every row of ``X`` and relabel to ``target_label``.

    Image rows get a ``patch_side`` square of ``value`` in the configured
    corner; flat feature rows get their last ``offset_dims`` entries set.
    Inputs are not modified.
    """
    X = np.array(X, dtype=np.float64, copy=True)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if image_shape is not None:
        rows, cols = image_shape
        if rows * cols != X.shape[1]:
            raise ValueError("image shape does not match feature dimension")
        s = trigger.patch_side
        if s > rows or s > cols:
            raise ValueError(f"patch side {s} larger than {rows}x{cols} image")
        if s > 0:
            r0 = rows - s if trigger.location.startswith("bottom") else 0
            c0 = cols - s if trigger.location.endswith("right") else 0
            img = X.reshape(len(X), rows, cols)
            img[:, r0:r0 + s, c0:c0 + s] = trigger.value
    else:
        k = trigger.offset_dims
        if k > X.shape[1]:
            raise ValueError("trigger covers more features than the sample has")
        if k > 0:
            X[:, X.shape[1] - k:] = trigger.value
    labels = np.full(np.shape(y), target_label, dtype=np.int64)
    if single:
        return X[0], labels
    return X, labels


def poison_dataset(
    X: np.ndarray,
    y: np.ndarray,
    attack: AttackConfig,
    num_classes: int,
    rng: np.random.Generator,
    image_shape: tuple[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Poison a malicious seller's local data; returns new arrays.

    Exactly ``round(rate * n)`` samples are chosen without replacement.
    """
    X = np.array(X, dtype=np.float64, copy=True)
    y = np.array(y, dtype=np.int64, copy=True)
    n = len(y)
    if attack.kind in ("backdoor", "sybil_backdoor"):
        count = int(round(attack.poison_rate * n))
        if count:
            idx = np.sort(rng.choice(n, size=count, replace=False))
            X[idx], y[idx] = apply_trigger(X[idx], y[idx], attack.trigger, attack.target_label, image_shape)
    elif attack.kind == "label_flip":
        count = int(round(attack.flip_fraction * n))
        if count:
            idx = np.sort(rng.choice(n, size=count, replace=False))
            # shift by 1..K-1 so the new label always differs
            shift = rng.integers(1, num_classes, size=count)
            y[idx] = (y[idx] + shift) % num_classes
    return X, y


def sybil_postprocess(raw_delta: np.ndarray, mimic_target: np.ndarray, lam: float) -> np.ndarray:
    """Blend a poisoned delta toward the public mimicry target."""
    raw_delta = np.asarray(raw_delta, dtype=np.float64)
    mimic_target = np.asarray(mimic_target, dtype=np.float64)
    if raw_delta.shape != mimic_target.shape:
        raise ValueError("delta and mimicry target differ in dimension")
    if lam == 1.0:
        return raw_delta.copy()
    if lam == 0.0:
        return mimic_target.copy()
    return lam * raw_delta + (1.0 - lam) * mimic_target
