"""Group-relative policy optimisation with stability-augmented rewards.

Rewards within a group of ``G`` rollouts for the same query are z-scored into
advantages shared by every action of a rollout. The policy is improved by
gradient ascent on the clipped importance-weighted surrogate, optionally minus
a KL penalty against a frozen reference policy. In the ``starpo_*`` modes the
reward of each rollout gains ``lambda_acf * r_acf + lambda_pe * r_pe`` (or a
penalty for abnormal metric values, in ``tail_penalty`` shaping).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import numpy as np

from .errors import DivergenceError, InvalidLogProb, ShapeMismatch
from .metrics import (
    EPS_PE,
    AbnormalityCalibration,
    AbnormalityFlags,
    StabilityScores,
    calibrate_abnormality,
    flag_abnormal,
    stability_scores,
)
from .toy.policy import ToyPolicy
from .trajectory import Trajectory

MODES = ("grpo", "starpo_full", "starpo_acf_only", "starpo_pe_only")
SHAPINGS = ("raw_additive", "tail_penalty")


@dataclass(frozen=True)
class SurrogateConfig:
    """Objective settings. Lambdas are zeroed to match ``mode`` on construction."""

    mode: str = "starpo_full"
    lambda_acf: float = 0.1
    lambda_pe: float = 0.1
    eps_clip: float = 0.2
    beta_kl: float = 0.04
    reward_shaping: str = "raw_additive"
    penalty_magnitude: float = 1.0
    eps_std: float = 1e-8
    group_size: int = 8

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.reward_shaping not in SHAPINGS:
            raise ValueError(f"reward_shaping must be one of {SHAPINGS}, got {self.reward_shaping!r}")
        if self.lambda_acf < 0 or self.lambda_pe < 0:
            raise ValueError("lambdas must be non-negative")
        if not self.eps_clip > 0:
            raise ValueError("eps_clip must be positive")
        if self.beta_kl < 0:
            raise ValueError("beta_kl must be non-negative")
        if self.penalty_magnitude < 0:
            raise ValueError("penalty_magnitude must be non-negative")
        if not self.eps_std > 0:
            raise ValueError("eps_std must be positive")
        if self.group_size < 2:
            raise ValueError("group_size must be at least 2")
        if self.mode in ("grpo", "starpo_pe_only"):
            object.__setattr__(self, "lambda_acf", 0.0)
        if self.mode in ("grpo", "starpo_acf_only"):
            object.__setattr__(self, "lambda_pe", 0.0)


@dataclass
class Rollout:
    """One sampled response: its trajectory, reward and per-action log-probs.

    ``features[t]`` is the legal-action feature matrix at decision ``t`` and
    ``actions[t]`` the chosen row, which lets any parameter vector re-score
    the recorded actions.
    """

    trajectory: Trajectory
    task_reward: float
    actions: list[int]
    logp_old: list[float]
    features: list[np.ndarray] = field(default_factory=list)
    logp_ref: list[float] | None = None
    info: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.actions)
        if n < 1:
            raise ShapeMismatch("rollout needs at least one action")
        if len(self.logp_old) != n:
            raise ShapeMismatch(f"{len(self.logp_old)} old log-probs for {n} actions")
        if self.logp_ref is not None and len(self.logp_ref) != n:
            raise ShapeMismatch(f"{len(self.logp_ref)} reference log-probs for {n} actions")
        if self.features and len(self.features) != n:
            raise ShapeMismatch(f"{len(self.features)} feature matrices for {n} actions")
        for lp in list(self.logp_old) + list(self.logp_ref or []):
            if not math.isfinite(lp) or lp > 0:
                raise InvalidLogProb(f"log-probability {lp} is not finite and <= 0")
        if not 0.0 <= self.task_reward <= 1.0:
            raise ValueError(f"task reward {self.task_reward} outside [0, 1]")


@dataclass
class RolloutGroup:
    query_id: str
    rollouts: list[Rollout]

    def __post_init__(self) -> None:
        if len(self.rollouts) < 2:
            raise ValueError("a group needs at least 2 rollouts")

    @property
    def G(self) -> int:
        return len(self.rollouts)


# --- rewards and advantages ------------------------------------------------

def compose_reward(
    task_reward: float,
    scores: StabilityScores | None,
    flags: AbnormalityFlags | None,
    cfg: SurrogateConfig,
) -> float:
    if cfg.mode == "grpo":
        return float(task_reward)
    if cfg.reward_shaping == "raw_additive":
        return float(task_reward + cfg.lambda_acf * scores.r_acf + cfg.lambda_pe * scores.r_pe)
    if flags is None:
        # no calibration yet: nothing counts as abnormal
        return float(task_reward)
    penalty = cfg.lambda_acf * float(flags.any_acf) + cfg.lambda_pe * float(flags.pe_abnormal_low)
    return float(task_reward - cfg.penalty_magnitude * penalty)


def group_advantages(rewards: Sequence[float], eps_std: float = 1e-8) -> np.ndarray:
    """Z-score rewards with the population std; all zeros when std < eps_std."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("need at least 2 rewards")
    centred = r - r.mean()
    std = math.sqrt(float(np.mean(centred * centred)))
    if std < eps_std:
        return np.zeros_like(r)
    return centred / std


def rollout_scores(group: RolloutGroup, eps_pe: float = EPS_PE) -> list[StabilityScores]:
    return [stability_scores(ro.trajectory, eps_pe) for ro in group.rollouts]


def composed_rewards(
    group: RolloutGroup,
    cfg: SurrogateConfig,
    scores: Sequence[StabilityScores] | None = None,
    calib: AbnormalityCalibration | None = None,
) -> np.ndarray:
    if scores is None:
        scores = rollout_scores(group)
    out = []
    for ro, sc in zip(group.rollouts, scores):
        flags = flag_abnormal(sc, calib) if calib is not None else None
        out.append(compose_reward(ro.task_reward, sc, flags, cfg))
    return np.array(out)


def importance_ratio(logp_new: float, logp_old: float) -> float:
    if not (math.isfinite(logp_new) and math.isfinite(logp_old)):
        raise InvalidLogProb(f"non-finite log-probability ({logp_new}, {logp_old})")
    if logp_new > 0 or logp_old > 0:
        raise InvalidLogProb(f"log-probabilities must be <= 0, got ({logp_new}, {logp_old})")
    return math.exp(logp_new - logp_old)


def kl_estimate(logp_new: Sequence[float], logp_ref: Sequence[float]) -> float:
    """Mean of ``exp(ref - new) - (ref - new) - 1`` over tokens (non-negative)."""
    new = np.asarray(logp_new, dtype=np.float64)
    ref = np.asarray(logp_ref, dtype=np.float64)
    if new.shape != ref.shape:
        raise ShapeMismatch(f"log-prob lists differ in length: {new.shape} vs {ref.shape}")
    if new.size == 0:
        return 0.0
    d = ref - new
    return float(np.mean(np.expm1(d) - d))


# --- surrogate -------------------------------------------------------------

def _check_alignment(group: RolloutGroup, logp_new: Sequence[Sequence[float]]) -> None:
    if len(logp_new) != group.G:
        raise ShapeMismatch(f"{len(logp_new)} log-prob lists for {group.G} rollouts")
    for k, (ro, lp) in enumerate(zip(group.rollouts, logp_new)):
        if len(lp) != len(ro.actions):
            raise ShapeMismatch(f"rollout {k}: {len(lp)} log-probs for {len(ro.actions)} actions")


def clipped_surrogate(
    group: RolloutGroup,
    logp_new: Sequence[Sequence[float]],
    cfg: SurrogateConfig,
    advantages: Sequence[float] | None = None,
) -> float:
    """Clipped importance-weighted objective for one group, minus the KL penalty."""
    _check_alignment(group, logp_new)
    if advantages is None:
        advantages = group_advantages(composed_rewards(group, cfg), cfg.eps_std)
    if len(advantages) != group.G:
        raise ShapeMismatch(f"{len(advantages)} advantages for {group.G} rollouts")
    lo, hi = 1.0 - cfg.eps_clip, 1.0 + cfg.eps_clip
    total = 0.0
    kl = 0.0
    use_kl = cfg.beta_kl > 0 and all(ro.logp_ref is not None for ro in group.rollouts)
    for ro, lp, A in zip(group.rollouts, logp_new, advantages):
        new = np.asarray(lp, dtype=np.float64)
        w = np.exp(new - np.asarray(ro.logp_old))
        per_token = np.minimum(w * A, np.clip(w, lo, hi) * A)
        total += float(per_token.mean())
        if use_kl:
            kl += kl_estimate(new, ro.logp_ref)
    value = total / group.G
    if use_kl:
        value -= cfg.beta_kl * kl / group.G
    return value


def group_kl(group: RolloutGroup, logp_new: Sequence[Sequence[float]]) -> float:
    if any(ro.logp_ref is None for ro in group.rollouts):
        return 0.0
    return sum(kl_estimate(lp, ro.logp_ref) for ro, lp in zip(group.rollouts, logp_new)) / group.G


def policy_logps(group: RolloutGroup, policy: ToyPolicy) -> list[list[float]]:
    """Log-probs of every recorded action under ``policy``."""
    return [
        [float(policy.log_probs(f)[a]) for f, a in zip(ro.features, ro.actions)]
        for ro in group.rollouts
    ]


def surrogate_gradient(
    group: RolloutGroup,
    policy: ToyPolicy,
    cfg: SurrogateConfig,
    advantages: Sequence[float] | None = None,
) -> np.ndarray:
    """Analytic gradient of :func:`clipped_surrogate` w.r.t. the policy weights.

    Advantages and old log-probs are constants. A token contributes
    ``A * w * dlogp`` when the unclipped branch is the minimum and nothing when
    the clipped branch is selected and active.
    """
    if advantages is None:
        advantages = group_advantages(composed_rewards(group, cfg), cfg.eps_std)
    lo, hi = 1.0 - cfg.eps_clip, 1.0 + cfg.eps_clip
    use_kl = cfg.beta_kl > 0 and all(ro.logp_ref is not None for ro in group.rollouts)
    grad = np.zeros_like(policy.weights)
    for ro, A in zip(group.rollouts, advantages):
        n = len(ro.actions)
        g_ro = np.zeros_like(grad)
        for t, (feats, a) in enumerate(zip(ro.features, ro.actions)):
            lp_all = policy.log_probs(feats)
            lp = lp_all[a]
            w = math.exp(lp - ro.logp_old[t])
            coef = 0.0
            if A > 0 and w <= hi:
                coef = A * w
            elif A < 0 and w >= lo:
                coef = A * w
            if use_kl:
                # d/dlogp of -beta * (exp(ref - new) - (ref - new) - 1)
                coef += cfg.beta_kl * (math.exp(ro.logp_ref[t] - lp) - 1.0)
            if coef != 0.0:
                p = np.exp(lp_all)
                g_ro += coef * (feats[a] - p @ feats) / policy.temperature
        grad += g_ro / n
    return grad / group.G


# --- training --------------------------------------------------------------

class Env(Protocol):
    @property
    def queries(self) -> list: ...

    @property
    def feature_dim(self) -> int: ...

    def rollout(self, policy: ToyPolicy, query, rng: np.random.Generator, ref_policy: ToyPolicy | None = None) -> Rollout: ...


@dataclass(frozen=True)
class TrainConfig:
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    learning_rate: float = 0.5
    inner_steps: int = 1
    queries_per_iter: int = 4
    calib_window: int = 100
    tail_mass: float = 0.1587
    eps_pe: float = EPS_PE

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")
        if self.queries_per_iter < 1:
            raise ValueError("queries_per_iter must be >= 1")
        if self.calib_window < 2:
            raise ValueError("calib_window must be >= 2")


LOG_COLUMNS = (
    "iteration",
    "mean_task_reward",
    "success_rate",
    "mean_r_acf",
    "mean_r_pe",
    "surrogate",
    "kl",
    "grad_norm",
)


@dataclass
class TrainingLog:
    rows: list[dict[str, float]] = field(default_factory=list)
    calibration: AbnormalityCalibration | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def to_csv(self) -> str:
        lines = [",".join(LOG_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(str(int(r[c])) if c == "iteration" else repr(float(r[c])) for c in LOG_COLUMNS))
        return "\n".join(lines) + "\n"


def _query_rng(seed: int, iteration: int, slot: int) -> np.random.Generator:
    return np.random.default_rng([seed, iteration, slot])


def train(
    env: Env,
    policy: ToyPolicy,
    cfg: TrainConfig,
    iterations: int,
    seed: int = 0,
    ref_policy: ToyPolicy | None = None,
) -> TrainingLog:
    """Run ``iterations`` rounds of sample / score / ascend, updating ``policy`` in place.

    Each round draws ``queries_per_iter`` queries, samples ``group_size``
    rollouts per query from the frozen old policy, composes rewards, and takes
    ``inner_steps`` ascent steps on the mean group surrogate. The reference
    policy for the KL term defaults to the initial policy.
    """
    sc = cfg.surrogate
    log = TrainingLog()
    if iterations <= 0:
        return log
    if ref_policy is None and sc.beta_kl > 0:
        ref_policy = policy.copy()
    queries = env.queries
    calib_pool: list[StabilityScores] = []
    calib: AbnormalityCalibration | None = None
    for it in range(iterations):
        old = policy.copy()
        pick = _query_rng(seed, it, 1_000_000).choice(len(queries), size=cfg.queries_per_iter, replace=len(queries) < cfg.queries_per_iter)
        groups: list[RolloutGroup] = []
        group_scores: list[list[StabilityScores]] = []
        for slot, qi in enumerate(pick):
            rng = _query_rng(seed, it, slot)
            ros = [env.rollout(old, queries[qi], rng, ref_policy) for _ in range(sc.group_size)]
            g = RolloutGroup(str(queries[qi]), ros)
            groups.append(g)
            group_scores.append(rollout_scores(g, cfg.eps_pe))
        if sc.reward_shaping == "tail_penalty" and calib is None:
            for ss in group_scores:
                calib_pool.extend(ss)
            if len(calib_pool) >= cfg.calib_window:
                calib = calibrate_abnormality(calib_pool[: cfg.calib_window], cfg.tail_mass)
        advs = [
            group_advantages(composed_rewards(g, sc, ss, calib), sc.eps_std)
            for g, ss in zip(groups, group_scores)
        ]
        first_grad_norm = 0.0
        for step in range(cfg.inner_steps):
            grad = sum(surrogate_gradient(g, policy, sc, a) for g, a in zip(groups, advs)) / len(groups)
            if step == 0:
                first_grad_norm = float(np.linalg.norm(grad))
            # overflow is reported as DivergenceError just below
            with np.errstate(over="ignore", invalid="ignore"):
                policy.weights = policy.weights + cfg.learning_rate * grad
            if not np.all(np.isfinite(policy.weights)):
                raise DivergenceError(it)
        lps = [policy_logps(g, policy) for g in groups]
        surrogate = float(np.mean([clipped_surrogate(g, lp, sc, a) for g, lp, a in zip(groups, lps, advs)]))
        kl = float(np.mean([group_kl(g, lp) for g, lp in zip(groups, lps)]))
        all_scores = [s for ss in group_scores for s in ss]
        rewards = [ro.task_reward for g in groups for ro in g.rollouts]
        log.rows.append(
            {
                "iteration": it,
                "mean_task_reward": float(np.mean(rewards)),
                "success_rate": float(np.mean([r == 1.0 for r in rewards])),
                "mean_r_acf": float(np.mean([s.r_acf for s in all_scores])),
                "mean_r_pe": float(np.mean([s.r_pe for s in all_scores])),
                "surrogate": surrogate,
                "kl": kl,
                "grad_norm": first_grad_norm,
            }
        )
    log.calibration = calib
    return log


@dataclass(frozen=True)
class Evaluation:
    success_rate: float
    mean_r_acf: float
    mean_r_pe: float
    episodes: int


def evaluate(env: Env, policy: ToyPolicy, episodes_per_query: int = 32, seed: int = 0, eps_pe: float = EPS_PE) -> Evaluation:
    """Sample episodes from ``policy`` on every query and average outcomes."""
    succ, acf, pe = [], [], []
    for qi, q in enumerate(env.queries):
        rng = np.random.default_rng([seed, 1_000_003, qi])
        for _ in range(episodes_per_query):
            ro = env.rollout(policy, q, rng)
            s = stability_scores(ro.trajectory, eps_pe)
            succ.append(ro.task_reward == 1.0)
            acf.append(s.r_acf)
            pe.append(s.r_pe)
    return Evaluation(float(np.mean(succ)), float(np.mean(acf)), float(np.mean(pe)), len(succ))

