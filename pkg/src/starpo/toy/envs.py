"""Episode generators that produce rollouts for the trainer.

Each env exposes ``queries`` (hashable query ids), ``feature_dim`` and
``rollout(policy, query, rng, ref_policy=None) -> Rollout``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..grpo import Rollout
from ..trajectory import Trajectory
from .game24 import (
    OPS,
    PROGRESS_WEIGHT,
    TARGET,
    Game24State,
    can_reach,
    game24_reset,
    game24_reward,
    game24_step,
    legal_actions,
    move_embedding,
    projection_matrix,
    state_embedding,
    state_features,
)
from .policy import ToyPolicy

# Fixed pool of solvable puzzles used when no puzzle file is given. Each has
# many distinct solving paths whose progress efficiency differs, so a policy
# can improve path quality without giving up success.
DEFAULT_PUZZLES: tuple[tuple[int, int, int, int], ...] = (
    (1, 1, 2, 12),
    (1, 4, 9, 12),
    (1, 7, 8, 10),
    (2, 4, 4, 12),
    (2, 4, 6, 8),
    (2, 5, 5, 12),
    (2, 6, 9, 11),
    (2, 8, 8, 12),
    (2, 10, 10, 12),
    (3, 3, 6, 9),
    (3, 4, 6, 12),
    (3, 4, 10, 13),
)

GAME24_FEATURES = (
    "op_add",
    "op_sub",
    "op_mul",
    "op_div",
    "wins",
    "solvable_after",
    "integer_result",
    "nonpositive_result",
    "log_magnitude",
    "near_target",
    "step_alignment",
    "goal_alignment",
    "step_length",
)


def _closeness(x: Fraction) -> float:
    return math.exp(-abs(float(x) - 24.0) / 24.0)


class Game24Env:
    """Three-move Game of 24 episodes scored by exact equality with 24.

    ``trajectory_mode`` is ``"states"`` (the four visited states) or
    ``"steps8"`` (query, then move statement and state for each move, then an
    answer statement: eight steps).
    """

    feature_names = GAME24_FEATURES

    def __init__(
        self,
        puzzles: Sequence[Sequence[int]] = DEFAULT_PUZZLES,
        *,
        embed_dim: int = 16,
        projection_seed: int = 0,
        trajectory_mode: str = "states",
    ):
        if trajectory_mode not in ("states", "steps8"):
            raise ValueError(f"unknown trajectory mode {trajectory_mode!r}")
        self.puzzles = [tuple(int(x) for x in p) for p in puzzles]
        for p in self.puzzles:
            game24_reset(p)
        if not self.puzzles:
            raise ValueError("empty puzzle pool")
        self.embed_dim = embed_dim
        self.projection_seed = projection_seed
        self.trajectory_mode = trajectory_mode
        projection_matrix(projection_seed, embed_dim)

    @property
    def queries(self) -> list[tuple[int, ...]]:
        return list(self.puzzles)

    @property
    def feature_dim(self) -> int:
        return len(GAME24_FEATURES)

    def embed(self, state: Game24State) -> np.ndarray:
        return state_embedding(state, self.projection_seed, self.embed_dim)

    def action_features(self, state: Game24State, path: Sequence[np.ndarray]) -> tuple[list, np.ndarray]:
        """Legal actions of ``state`` and their feature rows.

        ``path`` holds the embeddings of the states visited so far (last one is
        ``state``); the geometry features compare the move's embedding delta
        with the previous delta and with the start-to-here direction.
        """
        actions = legal_actions(state)
        feats = np.zeros((len(actions), len(GAME24_FEATURES)))
        here = path[-1]
        prev_delta = path[-1] - path[-2] if len(path) >= 2 else None
        so_far = path[-1] - path[0] if len(path) >= 2 else None
        n_left = len(state.numbers)
        for r, a in enumerate(actions):
            nxt = game24_step(state, a)
            res = nxt.history[-1].result
            row = feats[r]
            row[OPS.index(a.op)] = 1.0
            if n_left == 2:
                row[4] = float(res == TARGET)
            row[5] = float(can_reach(nxt.numbers, TARGET))
            row[6] = float(res.denominator == 1)
            row[7] = float(res <= 0)
            row[8] = math.log1p(abs(float(res))) / math.log(25.0)
            row[9] = _closeness(res)
            delta = self.embed(nxt) - here
            dn = np.linalg.norm(delta)
            row[12] = dn
            if dn > 0:
                if prev_delta is not None and np.linalg.norm(prev_delta) > 0:
                    row[10] = float(delta @ prev_delta / (dn * np.linalg.norm(prev_delta)))
                if so_far is not None and np.linalg.norm(so_far) > 0:
                    row[11] = float(delta @ so_far / (dn * np.linalg.norm(so_far)))
        return actions, feats

    def play(self, policy: ToyPolicy, puzzle: Sequence[int], rng: np.random.Generator | None = None):
        """Run one episode; greedy when ``rng`` is None.

        Returns (states, chosen indices, log-probs, feature matrices).
        """
        state = game24_reset(puzzle)
        states = [state]
        path = [self.embed(state)]
        actions, logps, feats_seq = [], [], []
        while not state.terminal:
            legal, feats = self.action_features(state, path)
            if rng is None:
                idx, lp = policy.greedy(feats)
            else:
                idx, lp = policy.sample(feats, rng)
            state = game24_step(state, legal[idx])
            states.append(state)
            path.append(self.embed(state))
            actions.append(idx)
            logps.append(lp)
            feats_seq.append(feats)
        return states, actions, logps, feats_seq

    def trajectory_steps(self, states: Sequence[Game24State]) -> np.ndarray:
        if self.trajectory_mode == "states":
            return np.stack([self.embed(s) for s in states])
        rows = [self.embed(states[0])]
        for prev, nxt in zip(states[:-1], states[1:]):
            rows.append(move_embedding(prev, nxt.history[-1], self.projection_seed, self.embed_dim))
            rows.append(self.embed(nxt))
        f = state_features(states[-1])
        f[5] = PROGRESS_WEIGHT * 4.0 / 3.0
        rows.append(projection_matrix(self.projection_seed, self.embed_dim) @ f)
        return np.stack(rows)

    def rollout(
        self,
        policy: ToyPolicy,
        query: Sequence[int],
        rng: np.random.Generator,
        ref_policy: ToyPolicy | None = None,
    ) -> Rollout:
        states, actions, logps, feats_seq = self.play(policy, query, rng)
        reward = game24_reward(states[-1])
        texts = [str(states[0])] + [str(s.history[-1]) for s in states[1:]]
        if self.trajectory_mode == "steps8":
            texts = None
        traj = Trajectory(
            id="-".join(str(x) for x in query),
            steps=self.trajectory_steps(states),
            step_texts=texts,
            task_reward=reward,
            meta={"puzzle": " ".join(str(x) for x in query)},
        )
        logp_ref = None
        if ref_policy is not None:
            logp_ref = [float(ref_policy.log_probs(f)[a]) for f, a in zip(feats_seq, actions)]
        return Rollout(
            trajectory=traj,
            task_reward=reward,
            actions=actions,
            logp_old=logps,
            features=feats_seq,
            logp_ref=logp_ref,
            info={"states": states, "puzzle": tuple(query)},
        )


class BanditEnv:
    """One-step bandit: one-hot arm features, reward 1 only for ``good_arm``."""

    def __init__(self, n_arms: int = 4, good_arm: int = 0, n_queries: int = 1, embed_dim: int = 4, seed: int = 0):
        if not 0 <= good_arm < n_arms:
            raise ValueError("good_arm out of range")
        self.n_arms = n_arms
        self.good_arm = good_arm
        self._queries = [f"q{k}" for k in range(n_queries)]
        rng = np.random.default_rng(seed)
        self.arm_embeddings = rng.standard_normal((n_arms, embed_dim))

    @property
    def queries(self) -> list[str]:
        return list(self._queries)

    @property
    def feature_dim(self) -> int:
        return self.n_arms

    def rollout(self, policy: ToyPolicy, query, rng: np.random.Generator, ref_policy: ToyPolicy | None = None) -> Rollout:
        feats = np.eye(self.n_arms)
        idx, lp = policy.sample(feats, rng)
        reward = 1.0 if idx == self.good_arm else 0.0
        steps = np.stack([np.zeros(self.arm_embeddings.shape[1]), self.arm_embeddings[idx]])
        traj = Trajectory(id=str(query), steps=steps, task_reward=reward)
        logp_ref = None if ref_policy is None else [float(ref_policy.log_probs(feats)[idx])]
        return Rollout(traj, reward, [idx], [lp], [feats], logp_ref)


def prior_policy(env: Game24Env, solvable_weight: float = 2.0, win_weight: float = 2.0) -> ToyPolicy:
    """Warm-start policy that already prefers moves keeping the puzzle solvable.

    Training then refines a competent policy instead of learning from scratch.
    Zero weights give the uniform policy.
    """
    w = np.zeros(env.feature_dim)
    w[GAME24_FEATURES.index("solvable_after")] = solvable_weight
    w[GAME24_FEATURES.index("wins")] = win_weight
    return ToyPolicy(w)
