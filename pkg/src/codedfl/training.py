"""Mini-batch gradient training under a simulated wall clock.

Three schemes share one loop: the naive baseline waits for every client,
the greedy baseline waits for the fastest (1 - psi) fraction, and the
coded scheme aggregates whatever arrived by the fixed deadline plus the
server's parity gradient.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .coding import ParityDataset
from .delays import NodeProfile, sample_delay
from .embedding import EmbeddedDataset

__all__ = [
    "ModelState",
    "TraceRecord",
    "TrainingTrace",
    "LrSchedule",
    "ClientTrainData",
    "TrainingSetup",
    "local_gradient",
    "coded_gradient",
    "coded_federated_aggregate",
    "sgd_step",
    "simulate_iteration_time",
    "classification_accuracy",
    "run_training",
    "iteration_complexity_bound",
]

SCHEMES = ("naive", "greedy", "coded")


@dataclass(frozen=True)
class ModelState:
    theta: np.ndarray  # (q, c)
    iteration: int = 0
    sim_clock: float = 0.0


@dataclass(frozen=True)
class TraceRecord:
    scheme: str
    iteration: int
    sim_clock: float
    test_accuracy: float


@dataclass
class TrainingTrace:
    scheme: str
    records: list[TraceRecord] = field(default_factory=list)
    final_theta: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class LrSchedule:
    """Step-decayed learning rate with L2 shrinkage."""

    base: float
    decay: float
    decay_epochs: tuple[int, ...]
    weight_decay: float

    def rate(self, epoch: int) -> float:
        steps = sum(1 for e in self.decay_epochs if epoch >= e)
        return self.base * self.decay**steps


@dataclass
class ClientTrainData:
    """One client's sequential local mini-batches and coded-subset masks."""

    client_id: int
    profile: NodeProfile
    batches: list[EmbeddedDataset]
    subset_masks: list[np.ndarray] | None = None  # processed rows, per batch
    ell_star: int = 0


@dataclass
class TrainingSetup:
    """Everything one scheme run needs besides its random stream."""

    clients: list[ClientTrainData]
    test: EmbeddedDataset
    m: int
    schedule: LrSchedule
    epochs: int
    psi: float = 0.1
    t_star: float = 0.0
    u_star: int = 0
    parity: list[ParityDataset] | None = None  # one per global mini-batch
    server_profile: NodeProfile | None = None
    pnr_server: float = 0.0
    parity_upload_seconds: float = 0.0

    @property
    def batches_per_epoch(self) -> int:
        return len(self.clients[0].batches)


def local_gradient(embedded: EmbeddedDataset, theta: np.ndarray) -> np.ndarray:
    """Normalized squared-loss gradient (1/l) X^T (X theta - Y)."""
    n = len(embedded)
    if n == 0:
        raise ValueError("cannot take a gradient over an empty subset")
    resid = embedded.features @ theta - embedded.labels
    return embedded.features.T @ resid / n


def coded_gradient(
    parity: ParityDataset,
    theta: np.ndarray,
    u_star: int,
    pnr_c: float,
    arrived: bool,
) -> np.ndarray:
    """Server-side parity gradient, inflated by 1/(1 - pnr_c) when it arrives."""
    if pnr_c >= 1.0:
        raise ValueError("pnr_c must be < 1; the coded path never returns")
    if not arrived:
        return np.zeros_like(theta)
    resid = parity.features @ theta - parity.labels
    return parity.features.T @ resid / ((1.0 - pnr_c) * u_star)


def coded_federated_aggregate(
    uncoded: list[tuple[int, bool, np.ndarray | None, int]],
    coded: np.ndarray,
    m: int,
) -> np.ndarray:
    """(1/m) (coded + sum over arrived clients of ell_star_j * gradient_j).

    ``uncoded`` rows are (client_id, arrived, gradient, ell_star); the
    gradient of a client that did not arrive may be None.
    """
    if m <= 0:
        raise ValueError(f"m must be positive, got {m}")
    total = coded.copy()
    for _, arrived, grad, ell_star in uncoded:
        if arrived and ell_star > 0:
            total += ell_star * grad
    return total / m


def sgd_step(
    state: ModelState, gradient: np.ndarray, lr: float, lam: float
) -> ModelState:
    """theta <- theta - lr * (gradient + lam * theta); iteration += 1."""
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    theta = state.theta - lr * (gradient + lam * state.theta)
    return ModelState(theta=theta, iteration=state.iteration + 1, sim_clock=state.sim_clock)


def simulate_iteration_time(
    scheme: str,
    profiles: list[NodeProfile],
    loads: list[float],
    rng: np.random.Generator,
    psi: float | None = None,
    t_star: float | None = None,
) -> float:
    """Wall-clock seconds one round takes under the given waiting rule.

    naive waits for every client, greedy for the fastest ceil((1-psi)*n)
    clients, and the coded scheme always proceeds exactly at t_star.
    """
    if scheme == "coded":
        if t_star is None or t_star <= 0:
            raise ValueError("coded scheme needs t_star > 0")
        return float(t_star)
    totals = [
        sample_delay(profile, load, rng).total
        for profile, load in zip(profiles, loads)
    ]
    if scheme == "naive":
        return max(totals)
    if scheme == "greedy":
        if psi is None or not 0.0 < psi < 1.0:
            raise ValueError("greedy scheme needs 0 < psi < 1")
        k = math.ceil((1.0 - psi) * len(totals))
        return sorted(totals)[k - 1]
    raise ValueError(f"unknown scheme {scheme!r}")


def classification_accuracy(test: EmbeddedDataset, theta: np.ndarray) -> float:
    """Fraction of rows whose top-scoring class matches the label."""
    pred = np.argmax(test.features @ theta, axis=1)
    truth = np.argmax(test.labels, axis=1)
    return float(np.mean(pred == truth))


def _subset(batch: EmbeddedDataset, mask: np.ndarray) -> EmbeddedDataset:
    return EmbeddedDataset(features=batch.features[mask], labels=batch.labels[mask])


def run_training(
    scheme: str, setup: TrainingSetup, rng: np.random.Generator
) -> TrainingTrace:
    """Run the full schedule for one scheme and record the accuracy trace.

    Model parameters start at zero.  Local mini-batches cycle sequentially;
    each iteration samples fresh delays, aggregates per the scheme, updates
    the model, advances the simulated clock, and logs test accuracy.  The
    coded scheme pays the one-time parity upload before the first round.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if not setup.clients:
        raise ValueError("no clients configured")
    bpe = setup.batches_per_epoch
    if any(len(c.batches) != bpe for c in setup.clients):
        raise ValueError("clients must have equal mini-batch counts")
    if scheme == "coded":
        if setup.parity is None or len(setup.parity) != bpe:
            raise ValueError("coded scheme needs one parity dataset per mini-batch")
        if setup.t_star <= 0 or setup.u_star <= 0:
            raise ValueError("coded scheme needs a solved allocation")

    q = setup.test.features.shape[1]
    c = setup.test.labels.shape[1]
    state = ModelState(theta=np.zeros((q, c)))
    if scheme == "coded":
        state = replace(state, sim_clock=setup.parity_upload_seconds)

    trace = TrainingTrace(scheme=scheme)
    total_iters = setup.epochs * bpe
    for it in range(total_iters):
        epoch, batch_idx = divmod(it, bpe)
        lr = setup.schedule.rate(epoch)

        if scheme == "coded":
            gradient, dt = _coded_round(setup, state.theta, batch_idx, rng)
        else:
            gradient, dt = _uncoded_round(scheme, setup, state.theta, batch_idx, rng)

        state = sgd_step(state, gradient, lr, setup.schedule.weight_decay)
        state = replace(state, sim_clock=state.sim_clock + dt)
        trace.records.append(
            TraceRecord(
                scheme=scheme,
                iteration=state.iteration,
                sim_clock=float(state.sim_clock),
                test_accuracy=classification_accuracy(setup.test, state.theta),
            )
        )
    trace.final_theta = state.theta
    return trace


def _uncoded_round(scheme, setup, theta, batch_idx, rng):
    batches = [client.batches[batch_idx] for client in setup.clients]
    totals = np.asarray(
        [
            sample_delay(client.profile, len(batch), rng).total
            for client, batch in zip(setup.clients, batches)
        ]
    )
    if scheme == "naive":
        arrived = np.ones(len(totals), dtype=bool)
        dt = float(totals.max())
    else:
        k = math.ceil((1.0 - setup.psi) * len(totals))
        order = np.argsort(totals, kind="stable")
        arrived = np.zeros(len(totals), dtype=bool)
        arrived[order[:k]] = True
        dt = float(totals[order[k - 1]])
    received = sum(len(b) for b, a in zip(batches, arrived) if a)
    total = np.zeros_like(theta)
    for batch, a in zip(batches, arrived):
        if a:
            total += len(batch) * local_gradient(batch, theta)
    return total / received, dt


def _coded_round(setup, theta, batch_idx, rng):
    uncoded = []
    for client in setup.clients:
        if client.ell_star <= 0:
            continue
        arrived = (
            sample_delay(client.profile, client.ell_star, rng).total <= setup.t_star
        )
        grad = None
        if arrived:
            subset = _subset(
                client.batches[batch_idx], client.subset_masks[batch_idx]
            )
            grad = local_gradient(subset, theta)
        uncoded.append((client.client_id, arrived, grad, client.ell_star))

    server = setup.server_profile
    if server is not None and not server.ideal:
        coded_arrived = (
            sample_delay(server, setup.u_star, rng).total <= setup.t_star
        )
    else:
        coded_arrived = True
    g_coded = coded_gradient(
        setup.parity[batch_idx], theta, setup.u_star, setup.pnr_server, coded_arrived
    )
    gradient = coded_federated_aggregate(uncoded, g_coded, setup.m)
    return gradient, float(setup.t_star)


def iteration_complexity_bound(R: float, B: float, L: float, epsilon: float) -> int:
    """Order-level iteration count R^2 * max(2B/eps^2, L/eps), rounded up.

    A diagnostic for the convex-regression regime, not a guarantee; the
    hidden constant is reported as one.
    """
    if min(R, B, L, epsilon) <= 0:
        raise ValueError("all inputs must be positive")
    return math.ceil(R * R * max(2.0 * B / (epsilon * epsilon), L / epsilon))
