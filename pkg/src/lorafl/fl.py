"""Federated learning core: MLP model, local SGD, client sampling and FedAvg."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Stream identifiers for ``stream``; every consumer of randomness gets its own.
INIT, SAMPLING, TRAINING, PARTITION, TOPOLOGY, LINK, INTERFERENCE, DATA = range(8)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator derived from the master seed and an integer key."""
    return np.random.default_rng([int(seed), *[int(k) for k in key]])


class TrainingDiverged(RuntimeError):
    pass


class NoUpdates(ValueError):
    """Aggregation was asked to average an empty set of updates."""


@dataclass(frozen=True)
class TrainConfig:
    local_epochs: int = 1
    batch_size: int = 10
    learning_rate: float = 0.1
    layers: tuple[int, ...] = (784, 32, 10)
    activation: str = "relu"

    def __post_init__(self) -> None:
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ValueError("local_epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if len(self.layers) < 2 or min(self.layers) < 1:
            raise ValueError("layers must list at least input and output widths")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        if len(self.x) != len(self.y):
            raise ValueError("features and labels differ in length")

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])


class MLP:
    """Fully connected ReLU network with a softmax cross-entropy head.

    Parameters live in one flat vector ordered layer by layer as
    ``W (fan_in x fan_out)`` followed by ``b (fan_out)``.
    """

    def __init__(self, layers: Sequence[int]) -> None:
        self.layers = tuple(int(n) for n in layers)
        self.shapes: list[tuple[tuple[int, int], tuple[int]]] = [
            ((a, b), (b,)) for a, b in zip(self.layers, self.layers[1:])
        ]
        self.size = sum(a * b + b for (a, b), _ in self.shapes)

    @property
    def n_classes(self) -> int:
        return self.layers[-1]

    def unflatten(self, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        if theta.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {theta.shape}")
        out, pos = [], 0
        for (a, b), _ in self.shapes:
            w = theta[pos : pos + a * b].reshape(a, b)
            pos += a * b
            out.append((w, theta[pos : pos + b]))
            pos += b
        return out

    def init(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
        parts = []
        for (a, b), _ in self.shapes:
            bound = 1.0 / math.sqrt(a)
            parts.append(rng.uniform(-bound, bound, a * b))
            parts.append(rng.uniform(-bound, bound, b))
        return np.concatenate(parts).astype(np.float32)

    def logits(self, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
        h = x
        params = self.unflatten(theta)
        for i, (w, b) in enumerate(params):
            h = h @ w + b
            if i < len(params) - 1:
                h = np.maximum(h, 0.0)
        return h

    def loss_and_grad(self, theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
        """Mean cross-entropy over the batch and its gradient w.r.t. ``theta``."""
        params = self.unflatten(theta)
        acts = [x]
        h = x
        for i, (w, b) in enumerate(params):
            h = h @ w + b
            if i < len(params) - 1:
                h = np.maximum(h, 0.0)
            acts.append(h)
        z = acts[-1]
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        n = len(y)
        loss = -float(logp[np.arange(n), y].mean())
        delta = np.exp(logp)
        delta[np.arange(n), y] -= 1.0
        delta /= n
        grads: list[np.ndarray] = []
        for i in range(len(params) - 1, -1, -1):
            w, _ = params[i]
            grads.append(delta.sum(axis=0))
            grads.append((acts[i].T @ delta).reshape(-1))
            if i > 0:
                delta = (delta @ w.T) * (acts[i] > 0)
        return loss, np.concatenate(grads[::-1])

    def loss(self, theta: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        z = self.logits(theta, x)
        z = z - z.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return -float(logp[np.arange(len(y)), y].mean())


def build_model(cfg: TrainConfig) -> MLP:
    return MLP(cfg.layers)


def init_global(model: MLP, seed: int) -> np.ndarray:
    """Initial global model; every device computes the same vector from the seed."""
    return model.init(stream(seed, INIT))


def sample_clients(n_clients: int, m: int, rng: np.random.Generator, channels: int | None = None) -> list[int]:
    if not 1 <= m <= n_clients:
        raise ValueError(f"need 1 <= m <= N, got m={m}, N={n_clients}")
    if channels is not None and m > channels:
        raise ValueError(f"{m} sampled clients exceed the {channels} available channels")
    return [int(i) for i in rng.choice(n_clients, size=m, replace=False)]


def local_train(
    model: MLP, theta: np.ndarray, shard: Dataset, cfg: TrainConfig, rng: np.random.Generator
) -> np.ndarray:
    """Mini-batch SGD on cross-entropy for ``cfg.local_epochs`` epochs."""
    w = np.asarray(theta, dtype=np.float64).copy()
    n = len(shard)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grad = model.loss_and_grad(w, shard.x[idx], shard.y[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss}")
            w -= cfg.learning_rate * grad
    with np.errstate(over="ignore"):
        out = w.astype(np.float32)
    if not np.all(np.isfinite(out)):
        raise TrainingDiverged("non-finite parameters after local training")
    return out


def fedavg(updates: Sequence[tuple[np.ndarray, int]]) -> np.ndarray:
    """Dataset-size weighted average, accumulated in the given order."""
    if not updates:
        raise NoUpdates("no local updates to aggregate")
    size = updates[0][0].shape
    total = float(sum(n for _, n in updates))
    if total <= 0:
        raise ValueError("dataset sizes must be positive")
    acc = np.zeros(size, dtype=np.float64)
    for theta, n in updates:
        if theta.shape != size:
            raise ValueError("updates differ in length")
        acc += (n / total) * np.asarray(theta, dtype=np.float64)
    if not np.all(np.isfinite(acc)):
        raise ValueError("non-finite aggregate")
    return acc


def evaluate(model: MLP, theta: np.ndarray, test: Dataset) -> tuple[float, float]:
    """Return (accuracy, mean cross-entropy) on ``test``."""
    if len(test) == 0:
        raise ValueError("empty test set")
    z = model.logits(np.asarray(theta, dtype=np.float64), test.x)
    acc = float(np.mean(np.argmax(z, axis=1) == test.y))
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return acc, -float(logp[np.arange(len(test)), test.y].mean())


def partition_dataset(data: Dataset, n: int, rng: np.random.Generator, shuffle: bool = True) -> list[Dataset]:
    """Split into ``n`` disjoint IID shards whose sizes differ by at most one."""
    if len(data) < n:
        raise ValueError(f"cannot split {len(data)} samples among {n} clients")
    idx = rng.permutation(len(data)) if shuffle else np.arange(len(data))
    return [data.subset(part) for part in np.array_split(idx, n)]


def train_round_client(
    model: MLP, theta: np.ndarray, shard: Dataset, cfg: TrainConfig, seed: int, rnd: int, client: int
) -> np.ndarray:
    return local_train(model, theta, shard, cfg, stream(seed, TRAINING, rnd, client))


@dataclass
class FederatedRun:
    """Network-free FedAvg loop sharing the simulator's seeding scheme.

    ``transform`` optionally maps each (received global, local model) pair to
    what the server reconstructs, e.g. a codec round trip.
    """

    model: MLP
    shards: list[Dataset]
    test: Dataset
    cfg: TrainConfig
    seed: int
    clients_per_round: int
    history: list[tuple[float, float]] = field(default_factory=list)

    def run(self, rounds: int, transform=None, broadcast=None) -> list[tuple[float, float]]:
        theta = init_global(self.model, self.seed)
        sampler = stream(self.seed, SAMPLING)
        for t in range(1, rounds + 1):
            chosen = sorted(sample_clients(len(self.shards), self.clients_per_round, sampler))
            received = theta if t == 1 or broadcast is None else broadcast(theta)
            updates = []
            for c in chosen:
                local = train_round_client(self.model, received, self.shards[c], self.cfg, self.seed, t, c)
                if transform is not None:
                    local = transform(received, local)
                updates.append((local, len(self.shards[c])))
            theta = fedavg(updates).astype(np.float32)
            self.history.append(evaluate(self.model, theta, self.test))
        return self.history
