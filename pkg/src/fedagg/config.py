"""Experiment configuration and its INI-style text format."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from .baselines import STRATEGIES, BaselineConfig
from .data import client_name, parse_client_name
from .dualcrit import DEFAULT_GRID, LambdaGrid

DEFAULT_CONFIG_TEXT = """\
# fedagg experiment configuration.
# Lists are comma separated; client combinations are separated by ';'.

[model]
# Hidden ReLU layer widths; empty means multinomial logistic regression.
hidden_dims =

[train]
learning_rate = 0.05
local_epochs = 1
batch_size = 32

[data]
# One entry per client (C1, C2, ...): training examples and label-noise fraction.
client_sizes = 400, 400, 400, 400
noise_fractions = 0.4, 0.0, 0.0, 0.0
evaluation_size = 600
validation_size = 600
# Synthetic generator; ignored when csv_path is set.
dim = 2
num_classes = 3
cluster_radius = 2.0
# Optional CSV (header row, feature columns, integer label column).
csv_path =

[sweep]
rounds = 30
combinations = C1, C2, C3; C1, C2, C3, C4
seed = 0
workers = 1
out_dir = results
# Averaging for precision and F1: macro or micro.
average = macro
# Test mode: every client derives its training seed from (seed, round) only.
shared_client_seed = false

[strategies]
names = simple, weighted, median, momentum, personalized, dp, quantized, dualcrit
lambda_grid = 0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0
alpha = 0.5
epsilon = 1.0
q_level = 8
beta = 0.9
eta = 1.0
noise_seed = 0
"""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    hidden_dims: tuple[int, ...] = ()
    learning_rate: float = 0.05
    local_epochs: int = 1
    batch_size: int = 32
    client_sizes: tuple[int, ...] = (400, 400, 400, 400)
    noise_fractions: tuple[float, ...] = (0.4, 0.0, 0.0, 0.0)
    evaluation_size: int = 600
    validation_size: int = 600
    dim: int = 2
    num_classes: int = 3
    cluster_radius: float = 2.0
    csv_path: str | None = None
    rounds: int = 30
    combinations: tuple[tuple[int, ...], ...] = ((1, 2, 3), (1, 2, 3, 4))
    seed: int = 0
    workers: int = 1
    out_dir: str = "results"
    average: str = "macro"
    shared_client_seed: bool = False
    strategies: tuple[str, ...] = STRATEGIES
    lambda_grid: tuple[float, ...] = DEFAULT_GRID
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def __post_init__(self):
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        unknown = [s for s in self.strategies if s not in STRATEGIES]
        if unknown:
            raise ConfigError(f"unknown strategy {unknown[0]!r}; valid names: {', '.join(STRATEGIES)}")
        if not self.combinations or any(len(c) == 0 for c in self.combinations):
            raise ConfigError("client combinations must be non-empty")
        if len(self.noise_fractions) != len(self.client_sizes):
            raise ConfigError(
                f"{len(self.client_sizes)} client sizes but {len(self.noise_fractions)} noise fractions"
            )
        n_clients = len(self.client_sizes)
        for comb in self.combinations:
            bad = [c for c in comb if not 1 <= c <= n_clients]
            if bad:
                raise ConfigError(f"combination references unknown client {client_name(bad[0])}")
            if len(set(comb)) != len(comb):
                raise ConfigError(f"combination repeats a client: {comb}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        try:
            LambdaGrid(self.lambda_grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.average not in ("macro", "micro"):
            raise ConfigError(f"average must be macro or micro, got {self.average!r}")

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def _list(text: str, kind=str) -> tuple:
    return tuple(kind(x.strip()) for x in text.split(",") if x.strip())


def parse_lambda_grid(text: str) -> tuple[float, ...]:
    return _list(text, float)


def parse_combinations(text: str) -> tuple[tuple[int, ...], ...]:
    return tuple(_list(part, parse_client_name) for part in text.split(";") if part.strip())


def format_combination(comb) -> str:
    return "-".join(client_name(c) for c in comb)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse config text; unspecified keys keep their defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read_string(DEFAULT_CONFIG_TEXT)
    known = {s: set(parser[s]) for s in parser.sections()}
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"{source}: unknown section [{section}]")
        extra = set(parser[section]) - known[section]
        if extra:
            raise ConfigError(f"{source}: unknown key {sorted(extra)[0]!r} in [{section}]")
    m, t, d, s, st = (parser[k] for k in ("model", "train", "data", "sweep", "strategies"))
    try:
        baseline = BaselineConfig(
            alpha=st.getfloat("alpha"),
            epsilon=st.getfloat("epsilon"),
            q_level=st.getint("q_level"),
            beta=st.getfloat("beta"),
            eta=st.getfloat("eta"),
            noise_seed=st.getint("noise_seed"),
        )
        return ExperimentConfig(
            hidden_dims=_list(m["hidden_dims"], int),
            learning_rate=t.getfloat("learning_rate"),
            local_epochs=t.getint("local_epochs"),
            batch_size=t.getint("batch_size"),
            client_sizes=_list(d["client_sizes"], int),
            noise_fractions=_list(d["noise_fractions"], float),
            evaluation_size=d.getint("evaluation_size"),
            validation_size=d.getint("validation_size"),
            dim=d.getint("dim"),
            num_classes=d.getint("num_classes"),
            cluster_radius=d.getfloat("cluster_radius"),
            csv_path=d["csv_path"].strip() or None,
            rounds=s.getint("rounds"),
            combinations=parse_combinations(s["combinations"]),
            seed=s.getint("seed"),
            workers=s.getint("workers"),
            out_dir=s["out_dir"].strip(),
            average=s["average"].strip(),
            shared_client_seed=_bool(s["shared_client_seed"]),
            strategies=_list(st["names"]),
            lambda_grid=parse_lambda_grid(st["lambda_grid"]),
            baseline=baseline,
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
    return parse_config(text, source=str(path))
