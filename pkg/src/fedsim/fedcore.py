"""One FedAvg communication round: client sampling, local SGD, weighted aggregation."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import FederatedPartition
from .errors import ConfigError, StructuralError
from .nn import MiniBatch, NetworkSpec, train_step_


@dataclass
class FederationConfig:
    n_clients: int = 100
    clients_per_round: int = 10
    local_epochs: float = 5.0
    batch_size: int = 10
    learning_rate: float = 0.01
    max_rounds: int = 500

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.n_clients < 1:
            raise ConfigError("must be >= 1", "n_clients")
        if not 1 <= self.clients_per_round <= self.n_clients:
            raise ConfigError(
                f"must be in [1, n_clients={self.n_clients}]", "clients_per_round"
            )
        if not self.local_epochs > 0:
            raise ConfigError("must be positive", "local_epochs")
        if self.batch_size < 1:
            raise ConfigError("must be >= 1", "batch_size")
        if not self.learning_rate >= 0:
            raise ConfigError("must be non-negative", "learning_rate")
        if self.max_rounds < 1:
            raise ConfigError("must be >= 1", "max_rounds")


@dataclass
class ClientUpdate:
    params: np.ndarray
    sample_count: int
    client_id: int
    steps_taken: int
    mean_loss: float = 0.0


@dataclass
class RoundPlan:
    round: int
    selected: list[int]
    epochs: float


def sample_clients(rng: np.random.Generator, n: int, m: int) -> list[int]:
    """``m`` distinct client ids chosen uniformly without replacement, ascending."""
    if not 1 <= m <= n:
        raise ConfigError(f"cannot pick {m} of {n} clients", "clients_per_round")
    return sorted(int(i) for i in rng.choice(n, size=m, replace=False))


def steps_for(n_samples: int, epochs: float, batch_size: int) -> int:
    return math.floor(epochs * math.ceil(n_samples / batch_size))


def local_train(
    w: np.ndarray,
    client: MiniBatch,
    epochs: float,
    cfg: FederationConfig,
    rng: np.random.Generator,
    spec: NetworkSpec,
    client_id: int = 0,
) -> ClientUpdate:
    """Minibatch SGD from a copy of ``w``; fractional epochs stop part-way through a pass."""
    n = len(client)
    if n == 0:
        raise ConfigError(f"client {client_id} has no samples", "partition")
    B = cfg.batch_size
    per_epoch = math.ceil(n / B)
    steps = steps_for(n, epochs, B)

    params = np.array(w, dtype=np.float64, copy=True)
    loss_sum = 0.0
    order = None
    for s in range(steps):
        j = s % per_epoch
        if j == 0:
            order = rng.permutation(n)
        idx = order[j * B:(j + 1) * B]
        loss_sum += train_step_(params, spec, MiniBatch(client.images[idx], client.labels[idx]), cfg.learning_rate)
    return ClientUpdate(
        params=params,
        sample_count=n,
        client_id=client_id,
        steps_taken=steps,
        mean_loss=loss_sum / steps if steps else 0.0,
    )


def _ordered(updates):
    if not updates:
        raise ConfigError("no client updates to aggregate", "updates")
    updates = sorted(updates, key=lambda u: u.client_id)
    size = updates[0].params.shape
    for u in updates:
        if u.params.shape != size:
            raise StructuralError(
                f"client {u.client_id} params {u.params.shape} vs {size}"
            )
    total = sum(u.sample_count for u in updates)
    return updates, [u.sample_count / total for u in updates]


def aggregate(updates: list[ClientUpdate]) -> np.ndarray:
    """Sample-count-weighted mean of client parameters, summed in client-id order.

    Weights are normalised over the participating clients only.
    """
    updates, weights = _ordered(updates)
    if len(updates) == 1:
        return updates[0].params.copy()
    out = np.zeros_like(updates[0].params)
    for u, a in zip(updates, weights):
        out += a * u.params
    return out


def aggregate_deltas(w: np.ndarray, updates: list[ClientUpdate]) -> np.ndarray:
    """The same round written as a unit-step move along the weighted mean delta."""
    updates, weights = _ordered(updates)
    step = np.zeros_like(w)
    for u, a in zip(updates, weights):
        step += a * (w - u.params)
    return w - step


def run_round(
    global_params: np.ndarray,
    plan: RoundPlan,
    partition: FederatedPartition,
    data: MiniBatch,
    cfg: FederationConfig,
    spec: NetworkSpec,
    client_rng: Callable[[int], np.random.Generator],
    workers: int = 1,
):
    """Train every selected client from ``global_params`` and aggregate.

    ``client_rng(i)`` must return client ``i``'s own stream for this round, so
    the result does not depend on ``workers`` or completion order.
    """
    for i in plan.selected:
        if not 0 <= i < partition.n_clients:
            raise ConfigError(f"client {i} not in partition", "selected")

    def train(i):
        view = data.subset(partition.client_indices[i])
        return local_train(global_params, view, plan.epochs, cfg, client_rng(i), spec, client_id=i)

    if workers > 1 and len(plan.selected) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            updates = list(pool.map(train, plan.selected))
    else:
        updates = [train(i) for i in plan.selected]
    return aggregate(updates), updates
