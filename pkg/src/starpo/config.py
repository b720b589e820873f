"""Run configuration: defaults, flat ``key = value`` files and CLI overrides.

Precedence is command-line flag > config file > default.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .grpo import SurrogateConfig, TrainConfig
from .metrics import DEFAULT_TAIL_MASS, EPS_PE
from .toy.synthetic import GeneratorParams


@dataclass(frozen=True)
class RunConfig:
    # surrogate objective
    mode: str = "starpo_full"
    lambda_acf: float = 0.1
    lambda_pe: float = 0.1
    eps_clip: float = 0.2
    beta_kl: float = 0.04
    reward_shaping: str = "raw_additive"
    penalty_magnitude: float = 1.0
    eps_std: float = 1e-8
    group_size: int = 8
    # training loop
    iterations: int = 100
    learning_rate: float = 0.5
    inner_steps: int = 1
    queries_per_iter: int = 4
    eval_episodes: int = 64
    puzzles: str = ""
    embed_dim: int = 16
    projection_seed: int = 0
    init_solvable_weight: float = 2.0
    init_win_weight: float = 2.0
    # synthetic corpus
    n_per_class: int = 500
    K: int = 8
    d: int = 16
    noise_scale: float = 0.05
    step_size: float = 1.0
    leap_factor: float = 10.0
    n_anchors: int = 2
    max_turn: float = math.pi / 2
    # calibration and study
    calib_window: int = 100
    tail_mass: float = DEFAULT_TAIL_MASS
    eps_pe: float = EPS_PE
    alpha: float = 0.05
    # run
    seed: int = 0
    out: str = "out"

    def __post_init__(self) -> None:
        try:
            self.surrogate()
            self.train_config()
            GeneratorParams(K=self.K, d=self.d, noise_scale=self.noise_scale, step_size=self.step_size,
                            leap_factor=self.leap_factor, n_anchors=self.n_anchors, max_turn=self.max_turn).validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.iterations < 0 or self.n_per_class < 1 or self.eval_episodes < 1:
            raise ConfigError("iterations must be >= 0, n_per_class and eval_episodes >= 1")
        if not 0 < self.tail_mass < 0.5:
            raise ConfigError("tail_mass must lie in (0, 0.5)")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    def surrogate(self) -> SurrogateConfig:
        return SurrogateConfig(
            mode=self.mode,
            lambda_acf=self.lambda_acf,
            lambda_pe=self.lambda_pe,
            eps_clip=self.eps_clip,
            beta_kl=self.beta_kl,
            reward_shaping=self.reward_shaping,
            penalty_magnitude=self.penalty_magnitude,
            eps_std=self.eps_std,
            group_size=self.group_size,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            surrogate=self.surrogate(),
            learning_rate=self.learning_rate,
            inner_steps=self.inner_steps,
            queries_per_iter=self.queries_per_iter,
            calib_window=self.calib_window,
            tail_mass=self.tail_mass,
            eps_pe=self.eps_pe,
        )

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _fmt(v: Any) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(key: str, raw: Any) -> Any:
    kind = _TYPES[key]
    if not isinstance(raw, str):
        return raw
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from exc
    return raw


def parse_config_text(text: str) -> dict[str, Any]:
    """Parse ``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out: dict[str, Any] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {n}: expected 'key = value'")
        if key not in _TYPES:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then non-None ``overrides``."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        values.update(parse_config_text(text))
    for k, v in (overrides or {}).items():
        if k not in _TYPES:
            raise ConfigError(f"unknown key {k!r}")
        if v is not None:
            values[k] = _coerce(k, v)
    return replace(RunConfig(), **values)
