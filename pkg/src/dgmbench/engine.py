"""Marketplace lifecycle: split, train/submit/aggregate/settle rounds, settlement.

Every random choice draws from a generator seeded through ``derive_seed`` so
a trace depends only on the configuration and the run seed.
"""
from __future__ import annotations

import functools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attack as attacks
from .aggregate import RoundInput, make_aggregator
from .config import MarketplaceConfig, config_from_dict, config_hash, derive_seed
from .data import Dataset, Partition, load_idx, make_synthetic, split_market, train_test_split
from .model import Architecture, accuracy, local_train, predict

__all__ = [
    "RoundLedger",
    "RunTrace",
    "MarketState",
    "setup",
    "run_round",
    "run_experiment",
    "run_repeats",
    "repeat_seed",
    "settle",
    "write_trace",
    "read_trace",
]


@dataclass
class RoundLedger:
    round: int
    sampled: list[int]
    selected: list[int]
    weights: dict[int, float]
    scores: dict[int, float]
    payments: dict[int, int]
    divergence: dict[int, float]
    cost: int
    accuracy: float
    asr: float | None

    def to_json(self) -> dict:
        return {
            "round": self.round,
            "sampled": self.sampled,
            "selected": self.selected,
            "weights": {str(k): v for k, v in self.weights.items()},
            "scores": {str(k): v for k, v in self.scores.items()},
            "payments": {str(k): v for k, v in self.payments.items()},
            "divergence": {str(k): v for k, v in self.divergence.items()},
            "cost": self.cost,
            "accuracy": self.accuracy,
            "asr": self.asr,
        }

    @classmethod
    def from_json(cls, d: dict) -> "RoundLedger":
        def ints(m):
            return {int(k): v for k, v in m.items()}

        return cls(
            d["round"], d["sampled"], d["selected"], ints(d["weights"]), ints(d["scores"]),
            ints(d["payments"]), ints(d["divergence"]), d["cost"], d["accuracy"], d["asr"],
        )


@dataclass
class RunTrace:
    config_hash: str
    seed: int
    num_sellers: int
    malicious: list[int]
    sybil: list[int]
    ledgers: list[RoundLedger]
    initial_model: np.ndarray
    final_model: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def benign(self) -> list[int]:
        bad = set(self.malicious)
        return [i for i in range(self.num_sellers) if i not in bad]


@dataclass
class MarketState:
    cfg: MarketplaceConfig
    seed: int
    arch: Architecture
    partition: Partition
    roles: list[attacks.SellerRole]
    seller_data: list[tuple[np.ndarray, np.ndarray]]
    buyer_X: np.ndarray
    buyer_y: np.ndarray
    theta: np.ndarray
    initial_theta: np.ndarray
    aggregator: object
    prev_global_delta: np.ndarray


@functools.lru_cache(maxsize=4)
def _idx_pair(images: str, labels: str) -> Dataset:
    return load_idx(images, labels)


def _load_data(cfg: MarketplaceConfig, seed: int) -> tuple[Dataset, Dataset]:
    ds = cfg.dataset
    if ds.kind == "synthetic":
        full = make_synthetic(ds.classes, ds.dim, ds.samples, derive_seed(seed, "dataset", 0), ds.separation)
        return train_test_split(full, ds.test_fraction, np.random.default_rng(derive_seed(seed, "test-split", 0)))
    train = _idx_pair(ds.train_images, ds.train_labels)
    test = _idx_pair(ds.test_images, ds.test_labels)
    k = max(train.num_classes, test.num_classes)
    return (
        Dataset(train.X, train.y, k, train.image_shape),
        Dataset(test.X, test.y, k, test.image_shape),
    )


def setup(cfg: MarketplaceConfig, seed: int | None = None) -> MarketState:
    """Phase one: load data, split the market, assign roles, poison, init model."""
    seed = cfg.seed if seed is None else seed
    train, test = _load_data(cfg, seed)
    if cfg.attack.target_label >= train.num_classes:
        raise ValueError("attack.target_label is not a valid class")
    part = split_market(train, test, cfg, np.random.default_rng(derive_seed(seed, "split", 0)))
    roles = attacks.assign_roles(cfg.num_sellers, cfg.attack, np.random.default_rng(derive_seed(seed, "roles", 0)))

    seller_data = []
    for i, role in enumerate(roles):
        sd = part.seller(i)
        X, y = sd.X, sd.y
        if role.malicious and cfg.attack.kind != "none":
            rng = np.random.default_rng(derive_seed(seed, "poison", i))
            X, y = attacks.poison_dataset(X, y, cfg.attack, train.num_classes, rng, train.image_shape)
        seller_data.append((X, y))

    arch = Architecture(cfg.architecture, train.dim, train.num_classes, cfg.model.hidden)
    theta = arch.init(np.random.default_rng(derive_seed(seed, "init", 0)))
    buyer = part.buyer
    return MarketState(
        cfg=cfg,
        seed=seed,
        arch=arch,
        partition=part,
        roles=roles,
        seller_data=seller_data,
        buyer_X=buyer.X,
        buyer_y=buyer.y,
        theta=theta,
        initial_theta=theta.copy(),
        aggregator=make_aggregator(cfg.aggregator),
        prev_global_delta=np.zeros_like(theta),
    )


def _train(state: MarketState, X, y, seed: int) -> np.ndarray:
    cfg = state.cfg
    return local_train(state.arch, state.theta, X, y, cfg.local_epochs, cfg.batch_size, cfg.local_lr, seed)


def run_round(state: MarketState, t: int) -> RoundLedger:
    """Phase two for round ``t`` (1-based). Updates ``state`` in place."""
    cfg = state.cfg
    N = cfg.num_sellers
    rng = np.random.default_rng(derive_seed(state.seed, "sample", t))
    sampled = sorted(int(i) for i in rng.choice(N, size=cfg.sampled_per_round, replace=False))

    deltas = []
    for i in sampled:
        X, y = state.seller_data[i]
        g = _train(state, X, y, derive_seed(state.seed, f"seller-local:{t}", i))
        role = state.roles[i]
        if role.sybil_group is not None:
            g = attacks.sybil_postprocess(g, state.prev_global_delta, cfg.attack.mimicry_lambda)
        deltas.append(g)
    deltas = np.stack(deltas)
    sizes = np.array([len(state.seller_data[i][1]) for i in sampled], dtype=np.float64)

    root_delta = _train(state, state.buyer_X, state.buyer_y, derive_seed(state.seed, "buyer", t))
    result = state.aggregator.aggregate(
        RoundInput(sampled, deltas, sizes, root_delta, state.arch, state.theta, state.buyer_X, state.buyer_y)
    )

    state.theta = state.theta + result.aggregated
    state.prev_global_delta = result.aggregated.copy()

    part = state.partition
    acc = accuracy(state.arch, state.theta, part.test.X, part.test.y)
    asr = None
    if part.test_triggered is not None and len(part.test_triggered):
        pred = predict(state.arch, state.theta, part.test_triggered.X)
        asr = float((pred == cfg.attack.target_label).mean())

    chosen = set(result.selected)
    return RoundLedger(
        round=t,
        sampled=sampled,
        selected=sorted(chosen),
        weights={i: result.weights[i] for i in sorted(chosen)},
        scores={i: result.scores.get(i, 0.0) for i in sampled},
        payments={i: int(i in chosen) for i in sampled},
        divergence={i: float(np.linalg.norm(g - root_delta)) for i, g in zip(sampled, deltas)},
        cost=len(chosen),
        accuracy=acc,
        asr=asr,
    )


def repeat_seed(cfg: MarketplaceConfig, repeat: int) -> int:
    return derive_seed(cfg.seed, "repeat", repeat)


def run_experiment(cfg: MarketplaceConfig, repeat: int | None = None) -> RunTrace:
    """Run all three phases once.

    With ``repeat=None`` the config seed is used directly; otherwise the run
    seed is ``derive_seed(seed, "repeat", repeat)``.
    """
    seed = cfg.seed if repeat is None else repeat_seed(cfg, repeat)
    state = setup(cfg, seed)
    ledgers = [run_round(state, t) for t in range(1, cfg.num_rounds + 1)]
    return RunTrace(
        config_hash=config_hash(cfg),
        seed=seed,
        num_sellers=cfg.num_sellers,
        malicious=[r.seller_id for r in state.roles if r.malicious],
        sybil=[r.seller_id for r in state.roles if r.sybil_group is not None],
        ledgers=ledgers,
        initial_model=state.initial_theta,
        final_model=state.theta,
        config=cfg.to_dict(),
    )


def _run_one(args) -> RunTrace:
    raw, repeat = args
    return run_experiment(config_from_dict(raw), repeat)


def run_repeats(cfg: MarketplaceConfig, jobs: int = 1) -> list[RunTrace]:
    """All ``cfg.repeats`` runs, ordered by repeat index whatever ``jobs`` is."""
    work = [(cfg.to_dict(), r) for r in range(cfg.repeats)]
    if jobs <= 1 or cfg.repeats == 1:
        return [_run_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, work))


def settle(trace: RunTrace) -> dict[int, int]:
    """Phase three: cumulative unit payments for every seller."""
    pay = {i: 0 for i in range(trace.num_sellers)}
    for led in trace.ledgers:
        for i, p in led.payments.items():
            pay[i] += p
    return pay


# ---------------------------------------------------------------- trace files


def write_trace(trace: RunTrace, path: str | Path) -> None:
    """Line-delimited JSON: a header record, one record per round, a final record."""
    header = {
        "type": "header",
        "config_hash": trace.config_hash,
        "seed": trace.seed,
        "num_sellers": trace.num_sellers,
        "malicious": trace.malicious,
        "sybil": trace.sybil,
        "config": trace.config,
        "initial_model": trace.initial_model.tolist(),
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps({"type": "round", **led.to_json()}, sort_keys=True) for led in trace.ledgers]
    lines.append(json.dumps({"type": "final", "final_model": trace.final_model.tolist()}, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace(path: str | Path) -> RunTrace:
    header, ledgers, final = None, [], None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("type")
            if kind == "header":
                header = rec
            elif kind == "round":
                ledgers.append(RoundLedger.from_json(rec))
            elif kind == "final":
                final = np.array(rec["final_model"])
    if header is None or final is None:
        raise ValueError(f"{path}: incomplete trace file")
    return RunTrace(
        header["config_hash"], header["seed"], header["num_sellers"], header["malicious"], header["sybil"],
        ledgers, np.array(header["initial_model"]), final, header["config"],
    )
