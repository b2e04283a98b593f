"""Round engines: seed-replay zero-order training, the local-epochs variant,
first-order baselines, and communication accounting.

One round: honest clients compute k (or E*k) coefficients on seeded
batches, the adversary substitutes the Byzantine reports with oracle
access to the honest values, the federator trims per direction, and every
replica replays the aggregated coefficients through the same seeds.
Everything is a pure function of the config: reruns and different client
thread counts produce byte-identical logs.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .adversary import AttackKind, AttackSpec, adversary_seed, byzantine_value, flip_labels
from .core import project_ball
from .data import BatchCursor, Dataset, load_idx, partition_iid, partition_noniid, synth_generate
from .losses import LogisticRegressionModel, QuadraticModel
from .robust import AggregationInput, coordwise_trimmed_mean, mean_aggregate, robust_direction_aggregate
from .seedstream import DirectionMode, SeedTuple, StreamKind, derive_seed, make_direction, sphere_direction
from .zo import ClientReport, NonFiniteLossError, ZoConfig, apply_update, direction_seed

THREADS_ENV = "CYBER0_THREADS"
MNIST_DIR_ENV = "CYBER0_MNIST_DIR"

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

_CHOICES = {
    "model": ("logreg", "quadratic"),
    "data": ("synth", "mnist"),
    "distribution": ("iid", "noniid"),
    "direction_mode": ("gaussian", "sphere"),
    "algorithm": ("cyber0", "fedavg", "coordwise_tm"),
    "attack": tuple(k.value for k in AttackKind),
    "init": ("zeros", "sphere"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat, file-serializable description of one run (defaults: the MNIST
    logistic-regression reference setup: 12 clients, 3 Byzantine capacity,
    beta 0.25, learning rate 0.01, batch 64, 400 steps)."""

    model: str = "logreg"
    quad_lambda: float = 1.0
    quad_dim: int = 16
    data: str = "synth"
    mnist_dir: str = ""
    synth_samples: int = 2400
    synth_features: int = 20
    synth_classes: int = 4
    distribution: str = "iid"
    clients: int = 12
    alpha: float = 0.25
    beta: float = 0.25
    mu: float = 0.001
    mu_zero: bool = False
    k: int = 64
    eta: float = 0.01
    steps: int = 400
    local_epochs: int = 1
    batch_size: int = 64
    full_local_data: bool = False
    direction_mode: str = "gaussian"
    attack: str = "none"
    algorithm: str = "cyber0"
    root_seed: int = 1234
    data_seed: int = 99
    eval_every: int = 1
    init: str = "zeros"
    init_radius: float = 1.0
    project_radius: float = 0.0
    broadcast_model: bool = False
    debug_replicas: bool = False

    def __post_init__(self) -> None:
        for name, allowed in _CHOICES.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.clients < 1:
            raise ValueError("need at least one client")
        if not 0.0 <= self.alpha < 0.5:
            raise ValueError("alpha must satisfy 0 <= alpha < 1/2")
        if not 0.0 <= self.beta < 0.5:
            raise ValueError("beta must satisfy 0 <= beta < 1/2")
        if self.clients - 2 * int(np.floor(self.beta * self.clients)) < 1:
            raise ValueError("trimming leaves no survivors for this (clients, beta)")
        if min(self.k, self.steps, self.local_epochs, self.batch_size, self.eval_every) < 1:
            raise ValueError("k, steps, local_epochs, batch_size, eval_every must be >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.mu_zero != (self.mu == 0.0):
            raise ValueError("exactly one of mu > 0 or mu_zero must hold (set mu = 0 with mu_zero)")
        if not 0 <= self.root_seed < 2**64 or not 0 <= self.data_seed < 2**64:
            raise ValueError("seeds must be 64-bit unsigned integers")
        self.zo()  # surfaces mu/k problems at construction time
        kind = AttackKind(self.attack)
        if self.algorithm != "cyber0":
            if kind.substitutes_coefficients:
                raise ValueError(f"attack {self.attack!r} targets coefficient reports; "
                                 f"{self.algorithm} baselines only support none/label_flip")
            if self.local_epochs != 1:
                raise ValueError("local epochs are only defined for the cyber0 algorithm")

    def zo(self) -> ZoConfig:
        mode = DirectionMode.SPHERE if self.direction_mode == "sphere" else DirectionMode.GAUSSIAN
        return ZoConfig(mu=self.mu, k=self.k, direction_mode=mode, mu_zero=self.mu_zero)

    def to_mapping(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                out[f.name] = "true" if v else "false"
            else:
                out[f.name] = repr(v) if isinstance(v, float) else str(v)
        return out

    @staticmethod
    def from_mapping(raw: dict[str, str]) -> "ExperimentConfig":
        kwargs: dict[str, object] = {}
        types = {f.name: f.type for f in fields(ExperimentConfig)}
        for key, text in raw.items():
            if key not in types:
                raise KeyError(f"unknown config key {key!r}")
            t = types[key]
            if t == "bool":
                if text.lower() not in ("true", "false"):
                    raise ValueError(f"{key}: expected true/false, got {text!r}")
                kwargs[key] = text.lower() == "true"
            elif t in ("int", "float"):
                try:
                    kwargs[key] = int(text) if t == "int" else float(text)
                except ValueError:
                    raise ValueError(f"{key}: expected {'an integer' if t == 'int' else 'a number'}, "
                                     f"got {text!r}") from None
            else:
                kwargs[key] = text
        return ExperimentConfig(**kwargs)


@dataclass
class RoundLog:
    step: int
    train_loss: float
    test_acc: float
    uplink_scalars: int
    downlink_scalars: int
    wall_ms: int


@dataclass
class RunResult:
    config: ExperimentConfig
    logs: list[RoundLog]
    final_w: np.ndarray

    @property
    def final_test_acc(self) -> float:
        return self.logs[-1].test_acc

    @property
    def final_train_loss(self) -> float:
        return self.logs[-1].train_loss


def comm_cost(config: ExperimentConfig, t: int) -> tuple[int, int]:
    """Cumulative per-client (uplink, downlink) scalar counts after t rounds.

    CyBeR-0 uplink is E*k per round, independent of d; the downlink counts
    the broadcast coefficients plus the one-time seed and initial model.
    First-order baselines move full d-vectors both ways.
    """
    if t <= 0:
        return 0, 0
    d = model_dimension(config)
    if config.algorithm == "cyber0":
        per_round = config.local_epochs * config.k
        down_per_round = d if config.broadcast_model else per_round
        return t * per_round, d + 1 + t * down_per_round
    return t * d, d + t * d


def model_dimension(config: ExperimentConfig) -> int:
    if config.model == "quadratic":
        return config.quad_dim
    if config.data == "mnist":
        return 785 * 10
    return (config.synth_features + 1) * config.synth_classes


def resolve_mnist_dir(config: ExperimentConfig) -> Path:
    root = config.mnist_dir or os.environ.get(MNIST_DIR_ENV, "") or "data/mnist"
    return Path(root)


def mnist_available(config: ExperimentConfig) -> bool:
    root = resolve_mnist_dir(config)
    return all(
        (root / name).exists() or (root / (name + ".gz")).exists()
        for name in MNIST_FILES.values()
    )


def _mnist_file(root: Path, name: str) -> Path:
    plain = root / name
    return plain if plain.exists() else root / (name + ".gz")


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return max(n, 1)


class _Setup:
    """Everything a run needs, built deterministically from the config."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.attack = AttackSpec.build(AttackKind(config.attack), config.clients, config.alpha)
        self.byz = sorted(self.attack.byzantine_ids)
        self.honest = [i for i in range(config.clients) if i not in self.attack.byzantine_ids]

        if config.model == "quadratic":
            self.model = QuadraticModel(config.quad_lambda, np.zeros(config.quad_dim))
            self.train: Dataset | None = None
            self.test_X = self.test_y = None
            self.cursors: list[BatchCursor] | None = None
            self.labels_eff = None
        else:
            if config.data == "mnist":
                root = resolve_mnist_dir(config)
                self.train = load_idx(
                    _mnist_file(root, MNIST_FILES["train_images"]),
                    _mnist_file(root, MNIST_FILES["train_labels"]),
                )
                test = load_idx(
                    _mnist_file(root, MNIST_FILES["test_images"]),
                    _mnist_file(root, MNIST_FILES["test_labels"]),
                )
            else:
                self.train = synth_generate(
                    config.data_seed, config.synth_samples, config.synth_features,
                    config.synth_classes, split=0,
                )
                test = synth_generate(
                    config.data_seed, max(config.synth_samples // 4, config.synth_classes),
                    config.synth_features, config.synth_classes, split=1,
                )
            self.test_X, self.test_y = test.features, test.labels
            self.model = LogisticRegressionModel(
                self.train.features.shape[1], self.train.num_classes
            )
            part = (
                partition_iid(self.train, config.clients, config.data_seed)
                if config.distribution == "iid"
                else partition_noniid(self.train, config.clients, config.data_seed)
            )
            self.shards = part.shards
            self.labels_eff = self.train.labels.copy()
            if self.attack.kind == AttackKind.LABEL_FLIPPING:
                for i in self.byz:
                    rows = self.shards[i]
                    self.labels_eff[rows] = flip_labels(
                        self.train.labels[rows], self.train.num_classes
                    )
            if config.full_local_data:
                self.cursors = None
            else:
                self.cursors = [
                    BatchCursor(self.shards[i], config.batch_size, config.data_seed, i)
                    for i in range(config.clients)
                ]

        self.d = self.model.dimension
        self.zo = config.zo()
        self.w = self._initial_w()
        # clients that actually execute the protocol this run
        if self.attack.kind.substitutes_coefficients:
            self.computing = self.honest
        else:
            self.computing = list(range(config.clients))

    def _initial_w(self) -> np.ndarray:
        if self.config.init == "zeros":
            return np.zeros(self.d)
        seed = derive_seed(SeedTuple(self.config.root_seed, 2, 0, 0, StreamKind.INIT))
        return self.config.init_radius * sphere_direction(seed, self.d)

    def batch(self, client: int) -> tuple[np.ndarray, np.ndarray] | None:
        if self.train is None:
            return None
        if self.cursors is None:
            rows = self.shards[client]
        else:
            rows = self.cursors[client].next_rows()
        return self.train.features[rows], self.labels_eff[rows]

    def batches_for_step(self) -> list[tuple[np.ndarray, np.ndarray] | None]:
        # every client consumes its stream each step, so honest batches do
        # not depend on which attack is configured
        return [self.batch(i) for i in range(self.config.clients)]

    def train_loss(self, w: np.ndarray, batches) -> float:
        losses = [self.model.eval(w, batches[i]) for i in self.honest]
        return float(np.mean(losses))

    def test_acc(self, w: np.ndarray) -> float:
        if self.test_X is None:
            return float("nan")
        return self.model.accuracy(w, self.test_X, self.test_y)


def _prepare_logreg_variants(model: LogisticRegressionModel, variants: np.ndarray):
    S = len(variants)
    W = variants.reshape(S, model.input_dim + 1, model.num_classes)
    Wp = np.ascontiguousarray(
        W[:, :-1, :].transpose(1, 0, 2).reshape(model.input_dim, S * model.num_classes)
    )
    bias = np.ascontiguousarray(W[:, -1, :].reshape(-1))
    return Wp, bias


def _logreg_losses_prepared(model: LogisticRegressionModel, prepared, batch) -> np.ndarray:
    X, y = batch
    Wp, bias = prepared
    S = len(bias) // model.num_classes
    L = X @ Wp
    L += bias[None, :]
    L = L.reshape(len(X), S, model.num_classes)
    m = L.max(axis=2)
    true = L[np.arange(len(y)), :, y]
    L -= m[:, :, None]
    np.exp(L, out=L)
    lse = np.log(L.sum(axis=2))
    lse += m
    lse -= true
    return lse.mean(axis=0)


def _multi_losses(model, variants: np.ndarray, prepared, batch) -> np.ndarray:
    if isinstance(model, LogisticRegressionModel):
        return _logreg_losses_prepared(model, prepared, batch)
    return model.loss_batch_multi(variants, batch)


def _bracket_variants(w: np.ndarray, mu: float, dirs: list[np.ndarray]) -> np.ndarray:
    """Stack of the 2k evaluation points, mirroring the in-place schedule:
    v[2r] = w + mu z_r and v[2r+1] = (w + mu z_r) - 2 mu z_r."""
    k = len(dirs)
    out = np.empty((2 * k, len(w)))
    for r, z in enumerate(dirs):
        np.multiply(z, mu, out=out[2 * r])
        out[2 * r] += w
        np.multiply(z, -2.0 * mu, out=out[2 * r + 1])
        out[2 * r + 1] += out[2 * r]
    return out


def _map_clients(worker, clients: list[int], threads: int) -> dict[int, np.ndarray]:
    """Run per-client work, collecting results keyed by client id so the
    outcome is independent of scheduling order."""
    if threads <= 1 or len(clients) <= 1:
        return {i: worker(i) for i in clients}
    out: dict[int, np.ndarray] = {}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {i: pool.submit(worker, i) for i in clients}
        for i, fut in futures.items():
            out[i] = fut.result()
    return out


def _substitute_byzantine(setup: _Setup, matrix: np.ndarray, step: int, epoch_of_col) -> None:
    """Overwrite Byzantine rows column by column, after all honest values
    for the step are known (oracle ordering)."""
    cfg = setup.config
    kind = setup.attack.kind
    if not kind.substitutes_coefficients or not setup.byz:
        return
    honest_rows = setup.honest
    for col in range(matrix.shape[1]):
        honest_vals = matrix[honest_rows, col]
        e, r = epoch_of_col(col)
        rc_seed = (
            adversary_seed(cfg.root_seed, step, r, e)
            if kind == AttackKind.RANDOM_CHOICE
            else None
        )
        matrix[setup.byz, col] = byzantine_value(kind, honest_vals, cfg.beta, cfg.clients, rc_seed)


def _aggregate(setup: _Setup, matrix: np.ndarray) -> np.ndarray:
    reports = [ClientReport(i, matrix[i]) for i in range(setup.config.clients)]
    return robust_direction_aggregate(AggregationInput(reports, setup.config.beta))


def _check_finite(matrix: np.ndarray, step: int, clients: list[int]) -> None:
    bad = np.argwhere(~np.isfinite(matrix[clients]))
    if len(bad):
        row, col = bad[0]
        raise NonFiniteLossError(
            f"non-finite coefficient at step {step}, direction {col}, client {clients[row]}",
            step=step, direction=int(col), client=int(clients[row]),
        )


def _finish_round(setup, logs, t, tr_loss, started, do_log):
    if do_log:
        acc = setup.test_acc(setup.w)
        if not np.isfinite(tr_loss):
            raise NonFiniteLossError(f"non-finite train loss at step {t}", step=t)
        up, down = comm_cost(setup.config, t + 1)
        logs.append(RoundLog(
            step=t + 1,
            train_loss=tr_loss,
            test_acc=acc,
            uplink_scalars=up,
            downlink_scalars=down,
            wall_ms=int((time.monotonic() - started) * 1000),
        ))


def _should_log(config: ExperimentConfig, t: int) -> bool:
    return (t + 1) % config.eval_every == 0 or t == config.steps - 1


def run_cyber0(config: ExperimentConfig) -> RunResult:
    """Seed-replay zero-order training, one shared round per step (E = 1)."""
    if config.local_epochs != 1:
        raise ValueError("run_cyber0 is the single-epoch engine; use run_cyber0_local_epochs")
    setup = _Setup(config)
    threads = _thread_count()
    zo = setup.zo
    replicas = _make_replicas(setup) if config.debug_replicas else None
    logs: list[RoundLog] = []
    started = time.monotonic()

    for t in range(config.steps):
        batches = setup.batches_for_step()
        do_log = _should_log(config, t)
        tr_loss = setup.train_loss(setup.w, batches) if do_log else float("nan")

        dirs = [
            make_direction(direction_seed(config.root_seed, t, r, 0), setup.d, zo.direction_mode)
            for r in range(config.k)
        ]
        matrix = np.zeros((config.clients, config.k))
        scale = zo.scale(setup.d)
        if config.mu_zero:
            D = np.stack(dirs)

            def worker(i: int) -> np.ndarray:
                g = setup.model.grad(setup.w, batches[i])
                return scale * (D @ g)

        else:
            variants = _bracket_variants(setup.w, config.mu, dirs)
            prepared = (
                _prepare_logreg_variants(setup.model, variants)
                if isinstance(setup.model, LogisticRegressionModel)
                else None
            )

            def worker(i: int) -> np.ndarray:
                losses = _multi_losses(setup.model, variants, prepared, batches[i])
                return scale * (losses[0::2] - losses[1::2]) / (2.0 * config.mu)

        for i, coeffs in _map_clients(worker, setup.computing, threads).items():
            matrix[i] = coeffs
        _check_finite(matrix, t, setup.computing)
        _substitute_byzantine(setup, matrix, t, lambda col: (0, col))
        agg = _aggregate(setup, matrix)
        apply_update(setup.w, agg, t, 0, config.eta, zo, config.root_seed, directions=dirs)
        if config.project_radius > 0:
            setup.w = project_ball(setup.w, config.project_radius)
        if replicas is not None:
            _advance_replicas(setup, replicas, [(0, agg, dirs)], t)
        _finish_round(setup, logs, t, tr_loss, started, do_log)
    return RunResult(config, logs, setup.w)


def run_cyber0_local_epochs(config: ExperimentConfig) -> RunResult:
    """Algorithm variant with E local rounds per upload (E = 1 reproduces
    run_cyber0 bit for bit)."""
    setup = _Setup(config)
    threads = _thread_count()
    zo = setup.zo
    E, k = config.local_epochs, config.k
    replicas = _make_replicas(setup) if config.debug_replicas else None
    logs: list[RoundLog] = []
    started = time.monotonic()

    for t in range(config.steps):
        epoch_batches = [setup.batches_for_step() for _ in range(E)]
        do_log = _should_log(config, t)
        tr_loss = setup.train_loss(setup.w, epoch_batches[0]) if do_log else float("nan")

        dirs = [
            [
                make_direction(direction_seed(config.root_seed, t, r, e), setup.d, zo.direction_mode)
                for r in range(k)
            ]
            for e in range(E)
        ]
        scale = zo.scale(setup.d)

        def worker(i: int) -> np.ndarray:
            # local drift runs on a scratch replica; uploading leaves the
            # client's synchronized state untouched (the in-place reset of
            # the reference procedure, made exact)
            local = setup.w.copy()
            coeffs = np.empty((E, k))
            for e in range(E):
                batch = epoch_batches[e][i]
                if config.mu_zero:
                    g = setup.model.grad(local, batch)
                    coeffs[e] = scale * (np.stack(dirs[e]) @ g)
                else:
                    variants = _bracket_variants(local, config.mu, dirs[e])
                    prepared = (
                        _prepare_logreg_variants(setup.model, variants)
                        if isinstance(setup.model, LogisticRegressionModel)
                        else None
                    )
                    losses = _multi_losses(setup.model, variants, prepared, batch)
                    coeffs[e] = scale * (losses[0::2] - losses[1::2]) / (2.0 * config.mu)
                apply_update(local, coeffs[e], t, e, config.eta, zo, config.root_seed,
                             directions=dirs[e])
            return coeffs.reshape(-1)

        matrix = np.zeros((config.clients, E * k))
        for i, coeffs in _map_clients(worker, setup.computing, threads).items():
            matrix[i] = coeffs
        _check_finite(matrix, t, setup.computing)
        _substitute_byzantine(setup, matrix, t, lambda col: (col // k, col % k))
        agg_all = _aggregate(setup, matrix)
        updates = []
        for e in range(E):
            agg_e = agg_all[e * k : (e + 1) * k]
            apply_update(setup.w, agg_e, t, e, config.eta, zo, config.root_seed,
                         directions=dirs[e])
            updates.append((e, agg_e, dirs[e]))
        if config.project_radius > 0:
            setup.w = project_ball(setup.w, config.project_radius)
        if replicas is not None:
            _advance_replicas(setup, replicas, updates, t)
        _finish_round(setup, logs, t, tr_loss, started, do_log)
    return RunResult(config, logs, setup.w)


def _make_replicas(setup: _Setup) -> dict[str, np.ndarray]:
    reps = {f"client{i}": setup.w.copy() for i in setup.honest}
    reps["federator"] = setup.w.copy()
    return reps


def _advance_replicas(setup, replicas: dict[str, np.ndarray], updates, t: int) -> None:
    """Debug mode: every replica replays the same updates; states must stay
    bit-identical to the canonical model."""
    cfg = setup.config
    for name, w in replicas.items():
        for e, agg_e, dirs_e in updates:
            apply_update(w, agg_e, t, e, cfg.eta, setup.zo, cfg.root_seed, directions=dirs_e)
        if cfg.project_radius > 0:
            replicas[name] = project_ball(w, cfg.project_radius)
    for name, w in replicas.items():
        if not np.array_equal(w, setup.w):
            raise AssertionError(f"replica {name} diverged from the canonical state at step {t}")


def _run_first_order(config: ExperimentConfig) -> RunResult:
    setup = _Setup(config)
    threads = _thread_count()
    if setup.train is None:
        # quadratic baselines are legal: every client sees the same loss
        pass
    logs: list[RoundLog] = []
    started = time.monotonic()
    use_trim = config.algorithm == "coordwise_tm"

    for t in range(config.steps):
        batches = setup.batches_for_step()
        do_log = _should_log(config, t)
        tr_loss = setup.train_loss(setup.w, batches) if do_log else float("nan")

        def worker(i: int) -> np.ndarray:
            return setup.model.grad(setup.w, batches[i])

        grads = np.zeros((config.clients, setup.d))
        for i, g in _map_clients(worker, setup.computing, threads).items():
            grads[i] = g
        if not np.all(np.isfinite(grads)):
            raise NonFiniteLossError(f"non-finite gradient at step {t}", step=t)
        agg = coordwise_trimmed_mean(grads, config.beta) if use_trim else mean_aggregate(grads)
        setup.w += (-config.eta) * agg
        if config.project_radius > 0:
            setup.w = project_ball(setup.w, config.project_radius)
        _finish_round(setup, logs, t, tr_loss, started, do_log)
    return RunResult(config, logs, setup.w)


def run_fedavg(config: ExperimentConfig) -> RunResult:
    """Clients upload full d-dimensional batch gradients; plain averaging."""
    if config.algorithm != "fedavg":
        config = replace(config, algorithm="fedavg")
    return _run_first_order(config)


def run_coordwise_tm(config: ExperimentConfig) -> RunResult:
    """First-order baseline with the coordinate-wise trimmed mean."""
    if config.algorithm != "coordwise_tm":
        config = replace(config, algorithm="coordwise_tm")
    return _run_first_order(config)


def run_experiment(config: ExperimentConfig) -> RunResult:
    if config.algorithm == "fedavg":
        return run_fedavg(config)
    if config.algorithm == "coordwise_tm":
        return run_coordwise_tm(config)
    if config.local_epochs > 1:
        return run_cyber0_local_epochs(config)
    return run_cyber0(config)
