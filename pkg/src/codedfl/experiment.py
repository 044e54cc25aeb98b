"""Experiment orchestration: config, profile synthesis, non-IID sharding,
the end-to-end pipeline, and metrics output.

All randomness forks from one master seed through named SeedSequence
domains, so a run is reproducible byte for byte from its manifest.
"""

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocation import (
    AllocationResult,
    integerize_loads,
    solve_allocation,
)
from .coding import (
    ParityDataset,
    aggregate_global,
    build_weight_spec,
    encode_local,
    generate_encoding_matrix,
)
from .datasets import load_idx_dataset, stratified_head
from .delays import NodeProfile, cdf_delay, mean_delay
from .embedding import EmbeddedDataset, derive_params, embed_matrix
from .privacy import PrivacyReport, privacy_budget
from .training import (
    ClientTrainData,
    LrSchedule,
    TrainingSetup,
    TrainingTrace,
    run_training,
)

__all__ = [
    "ExperimentConfig",
    "ClientShard",
    "ExperimentResult",
    "ServerState",
    "load_config",
    "save_config",
    "build_profiles",
    "partition_noniid",
    "run_pipeline",
    "run_experiment",
    "write_metrics",
]

# SeedSequence domains hung off the master seed; streams never overlap.
_DOMAIN_PROFILES = 1
_DOMAIN_PARTITION = 2
_DOMAIN_MASKS = 3
_DOMAIN_ENCODING = 4
_DOMAIN_TRAIN = {"naive": 5, "greedy": 6, "coded": 7}

def _macs_per_point(q: int, c: int) -> int:
    # gradient cost per data point: one forward and one backward pass over
    # a q x c linear model
    return 2 * q * c


def _stream(master_seed: int, domain: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master_seed, domain, index]))


@dataclass
class ExperimentConfig:
    """Resolved experiment parameters; defaults give the desk-scale run.

    Keys carry explicit units where they have one (seconds, bps, MAC/s).
    ``ladder_span`` controls how many decay steps of the k1/k2 ladders the
    client population spans; zero means n_clients - 1 (one step each).
    """

    n_clients: int = 10
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    train_per_class: int = 600   # 0 keeps the full file
    test_per_class: int = 100
    num_classes: int = 10        # used before ingestion (e.g. allocate CLI)
    q: int = 2000
    sigma: float = 5.0
    rff_seed: int = 11
    m: int = 1200
    delta: float = 0.1
    psi: float = 0.1
    k1: float = 0.95
    k2: float = 0.8
    ladder_span: int = 29
    base_rate_bps: float = 216e3
    base_mac_per_s: float = 3.072e6
    p_fail: float = 0.1
    alpha: float = 2.0
    overhead_frac: float = 0.1
    epochs: int = 70
    lr: float = 6.0
    lr_decay: float = 0.8
    lr_decay_epochs: tuple[int, ...] = (40, 65)
    weight_decay: float = 9e-6
    schemes: tuple[str, ...] = ("naive", "greedy", "coded")
    encoding_dist: str = "rademacher"
    master_seed: int = 1
    server_ideal: bool = True
    server_rate_bps: float = 1e8
    server_mac_per_s: float = 1e10
    server_p_fail: float = 0.01
    server_alpha: float = 10.0

    def validate(self) -> None:
        if not (0 < self.k1 <= 1 and 0 < self.k2 <= 1):
            raise ValueError("k1 and k2 must be in (0, 1]")
        if not 0 <= self.delta <= 1:
            raise ValueError("delta must be in [0, 1]")
        if not 0 < self.psi < 1:
            raise ValueError("psi must be in (0, 1)")
        if self.n_clients < 1:
            raise ValueError("need at least one client")
        if self.m % self.n_clients != 0:
            raise ValueError(
                f"m={self.m} must divide evenly over {self.n_clients} clients"
            )
        for scheme in self.schemes:
            if scheme not in ("naive", "greedy", "coded"):
                raise ValueError(f"unknown scheme {scheme!r}")


@dataclass
class ClientShard:
    """One client's raw rows plus its assigned delay profile."""

    client_id: int
    features: np.ndarray
    labels: np.ndarray
    profile: NodeProfile


@dataclass
class ServerState:
    """Everything the simulated server is allowed to hold.

    Client-private artifacts (raw shards, generator matrices, processed
    masks) must never appear here; a structural audit test enforces it.
    """

    parity: list[ParityDataset] = field(default_factory=list)
    allocation: AllocationResult | None = None
    loads_int: list[int] | None = None
    traces: list[TrainingTrace] = field(default_factory=list)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list[TrainingTrace]
    allocation: AllocationResult | None
    loads_int: list[int] | None
    privacy: list[PrivacyReport]
    server_state: ServerState


def _parse_value(text: str, py_type):
    text = text.strip()
    if py_type is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if py_type is int:
        return int(text)
    if py_type is float:
        return float(text)
    if py_type is str:
        return text
    # tuple fields: comma-separated
    if text == "":
        return ()
    items = [t.strip() for t in text.split(",") if t.strip()]
    if all(i.lstrip("+-").isdigit() for i in items):
        return tuple(int(i) for i in items)
    return tuple(items)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_SIMPLE = {"int": int, "float": float, "str": str, "bool": bool, int: int,
           float: float, str: str, bool: bool}


def _field_type(name: str):
    return _SIMPLE.get(_FIELD_TYPES[name], tuple)


def load_config(path) -> ExperimentConfig:
    """Read a flat key = value config file (# starts a comment)."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(text, _field_type(key))
    config = ExperimentConfig(**values)
    config.validate()
    return config


def save_config(config: ExperimentConfig, path) -> None:
    lines = []
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f.name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")


def build_profiles(
    config: ExperimentConfig, num_classes: int, rng: np.random.Generator
) -> list[NodeProfile]:
    """Synthesize client profiles from the rate/compute ladders, server last.

    Effective link rates follow base_rate * k1^e and MAC rates
    base_mac * k2^e with exponents spread over [0, ladder_span], each
    ladder assigned to clients by an independent random permutation.
    A packet carries the q x c model (32-bit scalars plus protocol
    overhead); processing one data point costs 2*q*c MAC operations.
    """
    n = config.n_clients
    span = config.ladder_span if config.ladder_span > 0 else n - 1
    expo = np.arange(n) * (span / (n - 1)) if n > 1 else np.zeros(1)
    rates = config.base_rate_bps * config.k1**expo
    macs = config.base_mac_per_s * config.k2**expo
    rates = rng.permutation(rates)
    macs = rng.permutation(macs)

    packet_bits = config.q * num_classes * 32 * (1.0 + config.overhead_frac)
    ell = config.m // n
    profiles = [
        NodeProfile(
            mu=float(mac) / _macs_per_point(config.q, num_classes),
            alpha=config.alpha,
            tau=packet_bits / float(rate),
            p=config.p_fail,
            ell_max=ell,
        )
        for rate, mac in zip(rates, macs)
    ]
    u_max = int(round(config.delta * config.m))
    profiles.append(
        NodeProfile(
            mu=config.server_mac_per_s / _macs_per_point(config.q, num_classes),
            alpha=config.server_alpha,
            tau=packet_bits / config.server_rate_bps,
            p=config.server_p_fail,
            ell_max=u_max,
            ideal=config.server_ideal,
        )
    )
    return profiles


def partition_noniid(
    features: np.ndarray,
    labels: np.ndarray,
    config: ExperimentConfig,
    profiles: list[NodeProfile],
    rng: np.random.Generator,
) -> list[ClientShard]:
    """Label-sorted equal shards, assigned in order of expected delay.

    Rows sort by class label; the sorted data splits into n equal shards;
    clients sort ascending by mean delay at the local mini-batch size and
    the i-th shard goes to the i-th fastest client.
    """
    del rng  # assignment is deterministic given profiles; kept for symmetry
    n = config.n_clients
    total = features.shape[0]
    if total % n != 0:
        raise ValueError(f"{total} rows do not split into {n} equal shards")
    order = np.argsort(np.argmax(labels, axis=1), kind="stable")
    feats = features[order]
    labs = labels[order]
    shard_size = total // n

    ell_batch = config.m // n
    client_order = sorted(
        range(n), key=lambda j: mean_delay(profiles[j], ell_batch)
    )
    shards: list[ClientShard | None] = [None] * n
    for shard_idx, client_id in enumerate(client_order):
        sl = slice(shard_idx * shard_size, (shard_idx + 1) * shard_size)
        shards[client_id] = ClientShard(
            client_id=client_id,
            features=feats[sl],
            labels=labs[sl],
            profile=profiles[client_id],
        )
    return shards  # type: ignore[return-value]


def _split_batches(embedded: EmbeddedDataset, batch_size: int) -> list[EmbeddedDataset]:
    n_batches = len(embedded) // batch_size
    return [
        EmbeddedDataset(
            features=embedded.features[i * batch_size : (i + 1) * batch_size],
            labels=embedded.labels[i * batch_size : (i + 1) * batch_size],
        )
        for i in range(n_batches)
    ]


def _parity_upload_seconds(
    clients: list[NodeProfile], config: ExperimentConfig, num_classes: int,
    u_star: int, n_batches: int,
) -> float:
    # Each client ships n_batches * u * (q + c) coded scalars at its
    # effective link rate with expected retransmissions; uploads run in
    # parallel, so the clock pays the slowest client.
    scalars_per_packet = config.q * num_classes
    times = [
        p.tau * (n_batches * u_star * (config.q + num_classes))
        / scalars_per_packet / (1.0 - p.p)
        for p in clients
    ]
    return max(times)


def run_pipeline(
    config: ExperimentConfig,
    train_features: np.ndarray,
    train_labels: np.ndarray,
    test_features: np.ndarray,
    test_labels: np.ndarray,
) -> ExperimentResult:
    """Partition, embed, allocate, encode, and train every configured scheme."""
    config.validate()
    n = config.n_clients
    num_classes = train_labels.shape[1]
    total = train_features.shape[0]
    if total % config.m != 0:
        raise ValueError(
            f"{total} training rows do not split into whole global "
            f"mini-batches of {config.m}"
        )
    n_batches = total // config.m
    ell_batch = config.m // n

    profiles = build_profiles(
        config, num_classes, _stream(config.master_seed, _DOMAIN_PROFILES)
    )
    client_profiles = profiles[:-1]
    server_profile = profiles[-1]

    shards = partition_noniid(
        train_features, train_labels, config, client_profiles,
        _stream(config.master_seed, _DOMAIN_PARTITION),
    )

    params = derive_params(
        config.rff_seed, train_features.shape[1], config.q, config.sigma
    )
    # Embedding happens independently "at" each client from the shared seed.
    embedded = [embed_matrix(params, s.features, s.labels) for s in shards]
    test_emb = embed_matrix(params, test_features, test_labels)

    clients = [
        ClientTrainData(
            client_id=s.client_id,
            profile=s.profile,
            batches=_split_batches(emb, ell_batch),
        )
        for s, emb in zip(shards, embedded)
    ]

    schedule = LrSchedule(
        base=config.lr,
        decay=config.lr_decay,
        decay_epochs=tuple(config.lr_decay_epochs),
        weight_decay=config.weight_decay,
    )

    allocation = None
    loads_int = None
    privacy_reports: list[PrivacyReport] = []
    server_state = ServerState()
    parity_batches: list[ParityDataset] | None = None
    pnr_server = 0.0
    upload_seconds = 0.0
    u_star = 0

    if "coded" in config.schemes:
        allocation = solve_allocation(profiles, config.m)
        loads_int = integerize_loads(profiles, allocation, config.m)
        u_star = loads_int[-1]
        t_star = allocation.t_star
        pnr_server = (
            0.0 if server_profile.ideal
            else 1.0 - cdf_delay(server_profile, u_star, t_star)
        )

        per_batch_parities: list[list[ParityDataset]] = [[] for _ in range(n_batches)]
        for client in clients:
            client.ell_star = loads_int[client.client_id]
            mask_rng = _stream(config.master_seed, _DOMAIN_MASKS, client.client_id)
            code_rng = _stream(config.master_seed, _DOMAIN_ENCODING, client.client_id)
            client.subset_masks = []
            for b, batch in enumerate(client.batches):
                spec = build_weight_spec(
                    client.profile, client.ell_star, t_star, mask_rng
                )
                client.subset_masks.append(spec.processed_mask)
                G = generate_encoding_matrix(
                    u_star, len(batch), code_rng, config.encoding_dist
                )
                per_batch_parities[b].append(encode_local(batch, spec, G))
            privacy_reports.append(
                privacy_budget(
                    embedded[client.client_id].features, u_star, config.encoding_dist
                )
            )
        # fold in ascending client id (clients list is id-ordered)
        parity_batches = [aggregate_global(parts) for parts in per_batch_parities]
        upload_seconds = _parity_upload_seconds(
            client_profiles, config, num_classes, u_star, n_batches
        )
        server_state.parity = parity_batches
        server_state.allocation = allocation
        server_state.loads_int = loads_int

    traces = []
    for scheme in config.schemes:
        setup = TrainingSetup(
            clients=clients,
            test=test_emb,
            m=config.m,
            schedule=schedule,
            epochs=config.epochs,
            psi=config.psi,
            t_star=allocation.t_star if allocation else 0.0,
            u_star=u_star,
            parity=parity_batches,
            server_profile=server_profile,
            pnr_server=pnr_server,
            parity_upload_seconds=upload_seconds,
        )
        trace = run_training(
            scheme, setup, _stream(config.master_seed, _DOMAIN_TRAIN[scheme])
        )
        traces.append(trace)
    server_state.traces = traces

    return ExperimentResult(
        config=config,
        traces=traces,
        allocation=allocation,
        loads_int=loads_int,
        privacy=privacy_reports,
        server_state=server_state,
    )


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Ingest the configured IDX files, subset them, and run the pipeline."""
    train_f, train_l = load_idx_dataset(config.train_images, config.train_labels)
    test_f, test_l = load_idx_dataset(config.test_images, config.test_labels)
    if config.train_per_class > 0:
        train_f, train_l = stratified_head(train_f, train_l, config.train_per_class)
    if config.test_per_class > 0:
        test_f, test_l = stratified_head(test_f, test_l, config.test_per_class)
    return run_pipeline(config, train_f, train_l, test_f, test_l)


def write_metrics(
    traces: list[TrainingTrace], out_dir, config: ExperimentConfig | None = None
) -> list[Path]:
    """One CSV per trace plus a manifest of the resolved config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for trace in traces:
        path = out / f"trace_{trace.scheme}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scheme", "iteration", "sim_clock_s", "test_accuracy"])
            for rec in trace.records:
                writer.writerow(
                    [
                        rec.scheme,
                        rec.iteration,
                        repr(float(rec.sim_clock)),
                        repr(float(rec.test_accuracy)),
                    ]
                )
        paths.append(path)
    if config is not None:
        manifest = out / "manifest.cfg"
        save_config(config, manifest)
        paths.append(manifest)
    return paths
