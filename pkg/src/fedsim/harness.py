"""Experiment driver: config loading, seeded trials, CSV/JSON outputs and run comparison."""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import seeding
from .data import FederatedPartition, iid_partition, load_dataset, shard_partition
from .errors import ConfigError, DivergenceError
from .fedcore import FederationConfig, RoundPlan, run_round, sample_clients
from .metrics import THRESHOLDS, RoundRecord, ThresholdStats, TrialSummary, summarize
from .nn import MNIST_NET, MiniBatch, NetworkSpec, evaluate, init_params
from .server import (
    EpochDecayConfig,
    ModelHistory,
    ServerAveragingConfig,
    epochs_at,
    maybe_server_average,
)

log = logging.getLogger(__name__)

WORKERS_ENV = "FEDSIM_WORKERS"
CSV_HEADER = [
    "round",
    "test_accuracy",
    "mean_train_loss",
    "epochs_used",
    "cumulative_epoch_units",
    "server_avg_applied",
    "wall_ms",
]


@dataclass
class DataPaths:
    train_images: str = "train-images-idx3-ubyte"
    train_labels: str = "train-labels-idx1-ubyte"
    test_images: str = "t10k-images-idx3-ubyte"
    test_labels: str = "t10k-labels-idx1-ubyte"

    def check(self):
        for f in fields(self):
            p = Path(getattr(self, f.name))
            if not p.is_file():
                raise FileNotFoundError(f"{f.name}: no such file {p}")


@dataclass
class ExperimentConfig:
    data: DataPaths = field(default_factory=DataPaths)
    federation: FederationConfig = field(default_factory=FederationConfig)
    server_averaging: ServerAveragingConfig = field(default_factory=ServerAveragingConfig)
    epoch_decay: EpochDecayConfig = field(default_factory=EpochDecayConfig)
    trials: int = 5
    root_seed: int = 0
    eval_every: int = 1
    out_dir: str = "runs/default"
    partition: str = "shard"
    layer_sizes: tuple[int, ...] = MNIST_NET
    # stop a trial once test accuracy reaches this value (None: run all rounds)
    stop_at: float | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        self.federation.validate()
        if self.trials < 1:
            raise ConfigError("must be >= 1", "trials")
        if self.eval_every < 1:
            raise ConfigError("must be >= 1", "eval_every")
        if self.partition not in ("shard", "iid"):
            raise ConfigError(f"unknown scheme {self.partition!r}", "partition")
        if self.stop_at is not None and not 0 < self.stop_at <= 1:
            raise ConfigError("must be in (0, 1]", "stop_at")
        if self.epoch_decay.enabled and self.federation.local_epochs < 1:
            raise ConfigError("epoch decay needs local_epochs >= 1", "local_epochs")
        NetworkSpec(self.layer_sizes)

    @property
    def decay(self) -> EpochDecayConfig:
        # the decay schedule always starts from the federation's local epoch count
        return replace(self.epoch_decay, initial_epochs=self.federation.local_epochs)

    def echo(self) -> dict:
        d = asdict(self)
        d["layer_sizes"] = list(self.layer_sizes)
        d["epoch_decay"]["initial_epochs"] = self.federation.local_epochs
        return d


# -- config file -----------------------------------------------------------

_SECTIONS = {
    "federation": FederationConfig,
    "server_averaging": ServerAveragingConfig,
    "epoch_decay": EpochDecayConfig,
}
_EXPERIMENT_KEYS = {
    "trials": int,
    "root_seed": int,
    "eval_every": int,
    "out": str,
    "out_dir": str,
    "partition": str,
    "layer_sizes": lambda s: tuple(int(v) for v in s.replace(",", " ").split()),
    "stop_at": lambda s: None if s.lower() in ("", "none") else float(s),
}


def _coerce(section, key, raw, typ):
    try:
        if typ is bool:
            return configparser.ConfigParser.BOOLEAN_STATES[raw.strip().lower()]
        if typ is float:
            return float(raw)
        if typ is int:
            return int(raw, 0)
        return typ(raw)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"cannot parse {raw!r}", f"{section}.{key}") from exc


def _field_types(cls):
    hints = {"int": int, "float": float, "bool": bool, "str": str}
    return {f.name: hints.get(f.type if isinstance(f.type, str) else f.type.__name__, str)
            for f in fields(cls)}


def parse_config(text: str, base_dir=".") -> ExperimentConfig:
    """Parse the INI-style experiment file (sections mirror the config types)."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc), "config") from exc

    known = {"data", "experiment", *_SECTIONS}
    for section in cp.sections():
        if section not in known:
            raise ConfigError("unknown section", section)

    base = Path(base_dir)
    data_kwargs = {}
    if cp.has_section("data"):
        valid = {f.name for f in fields(DataPaths)}
        for key, raw in cp.items("data"):
            if key not in valid:
                raise ConfigError("unknown key", f"data.{key}")
            p = Path(raw).expanduser()
            data_kwargs[key] = str(p if p.is_absolute() else base / p)

    subs = {}
    for name, cls in _SECTIONS.items():
        kwargs = {}
        if cp.has_section(name):
            types = _field_types(cls)
            for key, raw in cp.items(name):
                if key not in types:
                    raise ConfigError("unknown key", f"{name}.{key}")
                if name == "epoch_decay" and key == "initial_epochs":
                    raise ConfigError("set federation.local_epochs instead", f"{name}.{key}")
                kwargs[key] = _coerce(name, key, raw, types[key])
        subs[name] = cls(**kwargs)

    top = {}
    if cp.has_section("experiment"):
        for key, raw in cp.items("experiment"):
            if key not in _EXPERIMENT_KEYS:
                raise ConfigError("unknown key", f"experiment.{key}")
            value = _coerce("experiment", key, raw, _EXPERIMENT_KEYS[key])
            top["out_dir" if key == "out" else key] = value

    return ExperimentConfig(data=DataPaths(**data_kwargs), **subs, **top)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def apply_overrides(cfg: ExperimentConfig, p=None, r=None, decay_d=None, trials=None,
                    seed=None, rounds=None, out=None) -> ExperimentConfig:
    """Command-line overrides. Setting P or R switches server averaging on; ``decay_d`` does the same for decay."""
    sa, ed, fed = cfg.server_averaging, cfg.epoch_decay, cfg.federation
    if p is not None or r is not None:
        sa = ServerAveragingConfig(P=p if p is not None else sa.P,
                                   R=r if r is not None else sa.R, enabled=True)
    if decay_d is not None:
        ed = replace(ed, decay_interval=decay_d, enabled=decay_d > 0) if decay_d > 0 \
            else replace(ed, enabled=False)
    if rounds is not None:
        fed = replace(fed, max_rounds=rounds)
    return replace(
        cfg,
        server_averaging=sa,
        epoch_decay=ed,
        federation=fed,
        trials=trials if trials is not None else cfg.trials,
        root_seed=seed if seed is not None else cfg.root_seed,
        out_dir=out if out is not None else cfg.out_dir,
    )


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"not an integer: {raw!r}", WORKERS_ENV) from exc
    if n < 1:
        raise ConfigError("must be >= 1", WORKERS_ENV)
    return n


# -- running ---------------------------------------------------------------

def make_partition(cfg: ExperimentConfig, labels: np.ndarray, seed: int) -> FederatedPartition:
    pseed = seeding.derived_seed(seed, 0, seeding.PARTITION)
    if cfg.partition == "iid":
        return iid_partition(len(labels), cfg.federation.n_clients, pseed)
    return shard_partition(labels, cfg.federation.n_clients, pseed)


def run_trial(cfg: ExperimentConfig, trial: int, train: MiniBatch, test: MiniBatch,
              workers: int = 1, partition: FederatedPartition | None = None):
    """Run one trial; returns ``(TrialSummary, partition, final_params)``."""
    fed, sa, decay = cfg.federation, cfg.server_averaging, cfg.decay
    spec = NetworkSpec(cfg.layer_sizes)
    seed = seeding.trial_seed(cfg.root_seed, trial)
    if partition is None:
        partition = make_partition(cfg, train.labels, seed)
    w = init_params(spec, seeding.derived_seed(seed, 0, seeding.INIT))
    history = ModelHistory(sa.P)

    records = []
    cumulative = 0.0
    loss_acc = []
    for t in range(1, fed.max_rounds + 1):
        start = time.perf_counter()
        plan = RoundPlan(
            round=t,
            selected=sample_clients(seeding.stream(seed, t, seeding.SAMPLE),
                                    fed.n_clients, fed.clients_per_round),
            epochs=epochs_at(t, decay),
        )
        w, updates = run_round(
            w, plan, partition, train, fed, spec,
            client_rng=lambda i, t=t: seeding.stream(seed, t, seeding.CLIENT, i),
            workers=workers,
        )
        if not np.all(np.isfinite(w)):
            raise DivergenceError(trial, t)
        history.push(t, w)
        averaged = maybe_server_average(history, t, sa)
        if averaged is not None:
            history.replace_newest(averaged)
            w = averaged
        cumulative += plan.epochs
        loss_acc.extend(u.mean_loss for u in updates)

        if t % cfg.eval_every == 0 or t == fed.max_rounds:
            acc = evaluate(w, spec, test)
            records.append(RoundRecord(
                round=t,
                test_accuracy=acc,
                mean_train_loss=math.fsum(loss_acc) / len(loss_acc),
                epochs_used=plan.epochs,
                cumulative_epoch_units=cumulative,
                server_avg_applied=averaged is not None,
                wall_ms=int(round((time.perf_counter() - start) * 1000)),
            ))
            loss_acc = []
            log.info("trial %d round %d acc %.4f%s", trial, t, acc, " (avg)" if averaged is not None else "")
            if cfg.stop_at is not None and acc >= cfg.stop_at:
                break
    return TrialSummary.from_records(seed, records), partition, w


def records_to_csv(records) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(CSV_HEADER)
    for r in records:
        out.writerow([
            r.round,
            f"{r.test_accuracy:.6f}",
            f"{r.mean_train_loss:.10f}",
            repr(float(r.epochs_used)),
            repr(float(r.cumulative_epoch_units)),
            int(r.server_avg_applied),
            r.wall_ms,
        ])
    return buf.getvalue()


def read_csv(path) -> list[RoundRecord]:
    with open(path, newline="") as fh:
        return [
            RoundRecord(
                round=int(row["round"]),
                test_accuracy=float(row["test_accuracy"]),
                mean_train_loss=float(row["mean_train_loss"]),
                epochs_used=float(row["epochs_used"]),
                cumulative_epoch_units=float(row["cumulative_epoch_units"]),
                server_avg_applied=row["server_avg_applied"] == "1",
                wall_ms=int(row["wall_ms"]),
            )
            for row in csv.DictReader(fh)
        ]


@dataclass
class ExperimentReport:
    config: dict
    stats: dict[float, ThresholdStats]
    trials: list[dict]

    @property
    def trial_count(self) -> int:
        return len(self.trials)

    @classmethod
    def build(cls, config: dict, summaries: list[TrialSummary], thresholds=THRESHOLDS):
        trials = [
            {
                "trial": k,
                "seed": s.seed,
                "T": {_key(a): s.T.get(a) for a in thresholds},
                "rounds_run": s.records[-1].round if s.records else 0,
                "final_accuracy": s.records[-1].test_accuracy if s.records else None,
                "cumulative_epoch_units": s.records[-1].cumulative_epoch_units if s.records else 0.0,
            }
            for k, s in enumerate(summaries)
        ]
        return cls(config, {a: summarize(summaries, a) for a in thresholds}, trials)

    def to_json(self) -> dict:
        return {
            "config": self.config,
            "trial_count": self.trial_count,
            "thresholds": {
                _key(a): {**asdict(st), "not_reached": self.trial_count - st.reached}
                for a, st in self.stats.items()
            },
            "trials": self.trials,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ExperimentReport":
        stats = {
            float(a): ThresholdStats(v["mean"], v["std"], v["reached"], v["variance_defined"])
            for a, v in d["thresholds"].items()
        }
        return cls(d.get("config", {}), stats, d.get("trials", []))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentReport":
        return cls.from_json(json.loads(Path(path).read_text()))


def _key(a: float) -> str:
    return f"{a:.2f}"


def run_experiment(cfg: ExperimentConfig, workers: int | None = None, data=None) -> ExperimentReport:
    """Run all trials and write ``trial_XX.csv``, ``partition_trial_XX.json`` and ``summary.json``.

    ``data`` may pass preloaded ``(train, test)`` batches to skip reading the IDX files.
    """
    cfg.validate()
    if workers is None:
        workers = worker_count()
    if data is None:
        cfg.data.check()
        train = load_dataset(cfg.data.train_images, cfg.data.train_labels)
        test = load_dataset(cfg.data.test_images, cfg.data.test_labels)
    else:
        train, test = data
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    summaries = []
    for k in range(cfg.trials):
        summary, partition, _ = run_trial(cfg, k, train, test, workers=workers)
        (out / f"trial_{k:02d}.csv").write_text(records_to_csv(summary.records))
        partition.save(out / f"partition_trial_{k:02d}.json")
        summaries.append(summary)

    report = ExperimentReport.build(cfg.echo(), summaries)
    report.save(out / "summary.json")
    return report


# -- comparison ------------------------------------------------------------

@dataclass
class DeltaRow:
    threshold: float
    mean_a: float | None
    mean_b: float | None
    delta: float | None  # mean_b - mean_a
    pooled_std: float | None
    first: str | None  # "a", "b", "tie", or None when incomparable

    @property
    def comparable(self) -> bool:
        return self.delta is not None


def compare_runs(report_a: ExperimentReport, report_b: ExperimentReport) -> list[DeltaRow]:
    """Per-threshold difference of mean T_a (b minus a) with pooled spread."""
    shared = sorted(set(report_a.stats) & set(report_b.stats))
    if not shared:
        raise ConfigError("reports share no thresholds", "thresholds")
    rows = []
    for a in shared:
        sa, sb = report_a.stats[a], report_b.stats[a]
        if sa.mean is None or sb.mean is None:
            rows.append(DeltaRow(a, sa.mean, sb.mean, None, None, None))
            continue
        delta = sb.mean - sa.mean
        pooled = math.sqrt((sa.std ** 2 + sb.std ** 2) / 2)
        first = "tie" if delta == 0 else ("b" if delta < 0 else "a")
        rows.append(DeltaRow(a, sa.mean, sb.mean, delta, pooled, first))
    return rows


def format_delta_table(rows: list[DeltaRow]) -> str:
    lines = [f"{'threshold':>9}  {'mean_a':>8}  {'mean_b':>8}  {'delta':>8}  {'pooled':>7}  first"]
    for r in rows:
        if not r.comparable:
            ma = "-" if r.mean_a is None else f"{r.mean_a:.2f}"
            mb = "-" if r.mean_b is None else f"{r.mean_b:.2f}"
            lines.append(f"{r.threshold:>9.2f}  {ma:>8}  {mb:>8}  incomparable")
            continue
        lines.append(
            f"{r.threshold:>9.2f}  {r.mean_a:>8.2f}  {r.mean_b:>8.2f}  {r.delta:>+8.2f}  "
            f"{r.pooled_std:>7.2f}  {r.first}"
        )
    return "\n".join(lines)
