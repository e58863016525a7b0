"""Federated round loop and the combination x strategy sweep.

A sweep runs every (client combination, strategy) cell for ``rounds`` rounds.
Each round distributes the global model, trains every participating client
from it, aggregates with the cell's strategy and scores the new global model
on the validation set. The model is checkpointed whenever validation
accuracy strictly improves.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import nullcontext
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines
from .config import ExperimentConfig, format_combination
from .data import DataLayout, DatasetShard, build_layout, client_name, load_csv
from .dualcrit import LambdaGrid, canonical, dualcrit_weights, select_lambda
from .learner import ClientReport, ModelSpec, TrainConfig, TrainingError, init_params, make_report, predict
from .metrics import classification_report
from .params import save_checkpoint

logger = logging.getLogger(__name__)

METRIC_NAMES = ("accuracy", "precision", "f1", "mcc")


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from integer parts (independent of PYTHONHASHSEED)."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# Fixed stream tags so different uses of the global seed never collide.
_INIT_STREAM = 1
_DATA_STREAM = 2
_CLIENT_STREAM = 3
_DP_STREAM = 4


@dataclass
class RoundMetrics:
    round: int
    accuracy: float
    precision: float
    f1: float
    mcc: float
    lambda_chosen: float | None = None
    weights: dict[str, float] = field(default_factory=dict)
    scores: dict[str, float] = field(default_factory=dict)


@dataclass
class CellRecord:
    combination: tuple[int, ...]
    strategy: str
    rounds: list[RoundMetrics] = field(default_factory=list)
    checkpoint: str | None = None
    checkpoint_saves: int = 0
    best_accuracy: float | None = None
    best_round: int | None = None
    status: str = "ok"
    error: str | None = None
    duration_sec: float = 0.0

    @property
    def name(self) -> str:
        return f"{format_combination(self.combination)}_{self.strategy}"


@dataclass
class RunRecord:
    cells: list[CellRecord]
    duration_sec: float = 0.0

    def cell(self, combination: Sequence[int], strategy: str) -> CellRecord:
        for c in self.cells:
            if c.combination == tuple(combination) and c.strategy == strategy:
                return c
        raise KeyError((tuple(combination), strategy))


@dataclass
class StrategyState:
    """Per-cell mutable aggregation state; only momentum carries any."""

    momentum: baselines.MomentumState | None = None


class Simulation:
    """Everything fixed for a sweep: data layout, model, hyperparameters."""

    def __init__(self, config: ExperimentConfig, layout: DataLayout | None = None, executor=None):
        self.config = config
        if layout is None:
            layout = make_layout(config)
        self.layout = layout
        self.spec = ModelSpec(layout.validation_set.dim, layout.num_classes, config.hidden_dims)
        self.grid = LambdaGrid(config.lambda_grid)
        self.executor = executor

    def initial_params(self) -> np.ndarray:
        return init_params(self.spec, derive_seed(self.config.seed, _INIT_STREAM))

    def client_seed(self, client_id: int, round_index: int) -> int:
        cid = 0 if self.config.shared_client_seed else client_id
        return derive_seed(self.config.seed, _CLIENT_STREAM, cid, round_index)

    def _train_client(self, global_params, shard: DatasetShard, round_index: int) -> ClientReport:
        cfg = TrainConfig(
            learning_rate=self.config.learning_rate,
            local_epochs=self.config.local_epochs,
            batch_size=self.config.batch_size,
            seed=self.client_seed(shard.client_id, round_index),
        )
        return make_report(global_params, shard, self.layout.evaluation_set, self.spec, cfg, round_index)

    def collect_reports(self, global_params, clients: Sequence[DatasetShard], round_index: int):
        if self.executor is None:
            return [self._train_client(global_params, s, round_index) for s in clients]
        futures = [self.executor.submit(self._train_client, global_params, s, round_index) for s in clients]
        return [f.result() for f in futures]

    def aggregate(
        self,
        strategy: str,
        reports: list[ClientReport],
        prev_global: np.ndarray,
        state: StrategyState,
        round_index: int,
    ) -> tuple[np.ndarray, float | None, dict[str, float]]:
        """Apply ``strategy``; returns (model, chosen lambda, client weights)."""
        reports = canonical(reports)
        names = [client_name(r.client_id) for r in reports]
        bc = self.config.baseline
        lam = None
        weights: list[float] | None = baselines.uniform_weights(len(reports))
        if strategy == "simple":
            model = baselines.simple_average(reports)
        elif strategy == "weighted":
            model = baselines.weighted_mean(reports)
            weights = baselines.size_weights(reports)
        elif strategy == "median":
            model = baselines.median_aggregate(reports)
            weights = None
        elif strategy == "momentum":
            if state.momentum is None:
                state.momentum = baselines.MomentumState.zeros(prev_global.size, bc.beta, bc.eta)
            model, state.momentum = baselines.momentum_aggregate(reports, prev_global, state.momentum)
            weights = baselines.size_weights(reports)
        elif strategy == "personalized":
            model = baselines.personalized_aggregate(reports, prev_global, bc.alpha)
        elif strategy == "dp":
            seed = derive_seed(self.config.seed, _DP_STREAM, bc.noise_seed, round_index)
            model = baselines.dp_average(reports, bc.epsilon, seed)
        elif strategy == "quantized":
            model = baselines.quantize_aggregate(reports, bc.q_level)
        elif strategy == "dualcrit":
            lam, model = select_lambda(reports, self.grid, self.layout.validation_set, self.spec)
            weights = dualcrit_weights(reports, lam).w
        else:
            raise ValueError(f"unknown strategy {strategy!r}; valid names: {', '.join(baselines.STRATEGIES)}")
        return model, lam, dict(zip(names, weights)) if weights is not None else {}

    def evaluate(self, params: np.ndarray, round_index: int) -> RoundMetrics:
        val = self.layout.validation_set
        pred = predict(params, self.spec, val.features)
        m = classification_report(pred, val.labels, self.spec.num_classes, self.config.average)
        return RoundMetrics(round_index, **m)

    def run_round(
        self,
        global_params: np.ndarray,
        clients: Sequence[DatasetShard],
        strategy: str,
        round_index: int,
        state: StrategyState | None = None,
    ) -> tuple[np.ndarray, RoundMetrics]:
        if len(clients) == 0:
            raise ValueError("a round needs at least one client")
        state = state if state is not None else StrategyState()
        reports = self.collect_reports(global_params, clients, round_index)
        model, lam, weights = self.aggregate(strategy, reports, global_params, state, round_index)
        metrics = self.evaluate(model, round_index)
        metrics.lambda_chosen = lam
        metrics.weights = weights
        metrics.scores = {client_name(r.client_id): r.score for r in canonical(reports)}
        return model, metrics

    def run_cell(self, combination: Sequence[int], strategy: str, out_dir: Path | None) -> CellRecord:
        started = time.perf_counter()
        record = CellRecord(tuple(combination), strategy)
        clients = [self.layout.shard(c) for c in combination]
        state = StrategyState()
        params = self.initial_params()
        writer = CsvLog(out_dir / f"metrics_{record.name}.csv", combination) if out_dir else None
        ckpt_path = out_dir / f"best_{record.name}.fagg" if out_dir else None
        with writer or nullcontext():
            for k in range(1, self.config.rounds + 1):
                try:
                    params, metrics = self.run_round(params, clients, strategy, k, state)
                except TrainingError as exc:
                    logger.error("cell %s aborted: %s", record.name, exc)
                    record.status, record.error = "diverged", str(exc)
                    break
                record.rounds.append(metrics)
                if writer:
                    writer.write(strategy, metrics)
                if record.best_accuracy is None or metrics.accuracy > record.best_accuracy:
                    record.best_accuracy, record.best_round = metrics.accuracy, k
                    record.checkpoint_saves += 1
                    if ckpt_path:
                        save_checkpoint(ckpt_path, params)
                        record.checkpoint = ckpt_path.name
        record.duration_sec = time.perf_counter() - started
        return record


class CsvLog:
    """Per-cell metrics CSV, flushed after every round."""

    def __init__(self, path: Path, combination: Sequence[int]):
        self.path = path
        self.clients = [client_name(c) for c in sorted(combination)]
        self.columns = (
            ["round", "strategy", *METRIC_NAMES, "lambda_chosen"]
            + [f"w_{c}" for c in self.clients]
            + [f"score_{c}" for c in self.clients]
        )

    def __enter__(self):
        try:
            self._fh = self.path.open("w", newline="")
        except OSError as exc:
            raise OSError(f"cannot write {self.path}: {exc.strerror}") from exc
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(self.columns)
        self._fh.flush()
        return self

    def __exit__(self, *exc):
        self._fh.close()

    def write(self, strategy: str, m: RoundMetrics) -> None:
        def fmt(x):
            return "" if x is None else repr(float(x))

        row = [m.round, strategy, *(fmt(getattr(m, k)) for k in METRIC_NAMES), fmt(m.lambda_chosen)]
        row += [fmt(m.weights.get(c)) for c in self.clients]
        row += [fmt(m.scores.get(c)) for c in self.clients]
        self._csv.writerow(row)
        self._fh.flush()


def make_layout(config: ExperimentConfig) -> DataLayout:
    source = load_csv(config.csv_path) if config.csv_path else None
    num_classes = config.num_classes
    if source is not None:
        num_classes = max(num_classes, int(source.labels.max()) + 1)
    return build_layout(
        config.client_sizes,
        config.noise_fractions,
        config.evaluation_size,
        config.validation_size,
        config.dim,
        num_classes,
        derive_seed(config.seed, _DATA_STREAM),
        config.cluster_radius,
        source=source,
    )


def summary_rows(record: RunRecord) -> dict:
    cells = []
    for cell in record.cells:
        final = asdict(cell.rounds[-1]) if cell.rounds else {}
        cells.append(
            {
                "combination": format_combination(cell.combination),
                "strategy": cell.strategy,
                "status": cell.status,
                "error": cell.error,
                "rounds": len(cell.rounds),
                "final": {k: final.get(k) for k in METRIC_NAMES},
                "final_lambda": final.get("lambda_chosen"),
                "best_accuracy": cell.best_accuracy,
                "best_round": cell.best_round,
                "checkpoint": cell.checkpoint,
                "checkpoint_saves": cell.checkpoint_saves,
                "duration_sec": round(cell.duration_sec, 3),
            }
        )
    return {"cells": cells, "duration_sec": round(record.duration_sec, 3)}


def run_sweep(config: ExperimentConfig, out_dir: str | Path | None = None, layout: DataLayout | None = None) -> RunRecord:
    """Run every (combination, strategy) cell and write CSVs, checkpoints and summary.json.

    Pass ``out_dir=None`` together with ``config.out_dir = ""`` to run fully in
    memory.
    """
    started = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else (Path(config.out_dir) if config.out_dir else None)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    cells = [(comb, strat) for comb in config.combinations for strat in config.strategies]
    if config.workers == 1:
        sim = Simulation(config, layout)
        records = [sim.run_cell(comb, strat, out) for comb, strat in cells]
    else:
        with ThreadPoolExecutor(config.workers) as client_pool, ThreadPoolExecutor(config.workers) as cell_pool:
            sim = Simulation(config, layout, executor=client_pool)
            futures = [cell_pool.submit(sim.run_cell, comb, strat, out) for comb, strat in cells]
            records = [f.result() for f in futures]
    record = RunRecord(records, time.perf_counter() - started)
    if out is not None:
        (out / "summary.json").write_text(json.dumps(summary_rows(record), indent=2) + "\n")
    return record


def run_single(config: ExperimentConfig, strategy: str, out_dir: str | Path | None = None) -> RunRecord:
    return run_sweep(replace(config, strategies=(strategy,)), out_dir)
