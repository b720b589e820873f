"""Builders shared by several test modules."""

from __future__ import annotations

import numpy as np

from starpo.grpo import Rollout, RolloutGroup, SurrogateConfig, clipped_surrogate, policy_logps
from starpo.toy.policy import ToyPolicy
from starpo.trajectory import Trajectory


def random_group(rng: np.random.Generator, G: int = 2, n_actions: int = 3, d: int = 4, max_steps: int = 3,
                 with_ref: bool = True, spread: float = 0.3):
    """Random linear-softmax instance: (group, current policy).

    Old and reference log-probs come from perturbed copies of the current
    weights, so importance ratios differ from 1.
    """
    theta = rng.standard_normal(d)
    old = ToyPolicy(theta + spread * rng.standard_normal(d))
    ref = ToyPolicy(theta + spread * rng.standard_normal(d))
    rollouts = []
    for _ in range(G):
        n = int(rng.integers(1, max_steps + 1))
        feats = [rng.standard_normal((int(rng.integers(2, n_actions + 1)), d)) for _ in range(n)]
        acts = [int(rng.integers(0, f.shape[0])) for f in feats]
        lp_old = [float(old.log_probs(f)[a]) for f, a in zip(feats, acts)]
        lp_ref = [float(ref.log_probs(f)[a]) for f, a in zip(feats, acts)] if with_ref else None
        traj = Trajectory("r", rng.standard_normal((3, 2)))
        rollouts.append(Rollout(traj, float(rng.integers(0, 2)), acts, lp_old, feats, lp_ref))
    return RolloutGroup("q", rollouts), ToyPolicy(theta)


def ratios(group: RolloutGroup, policy: ToyPolicy) -> np.ndarray:
    lps = policy_logps(group, policy)
    return np.concatenate([np.exp(np.asarray(lp) - np.asarray(ro.logp_old)) for ro, lp in zip(group.rollouts, lps)])


def surrogate_at(group: RolloutGroup, theta: np.ndarray, cfg: SurrogateConfig, adv) -> float:
    pol = ToyPolicy(theta)
    return clipped_surrogate(group, policy_logps(group, pol), cfg, adv)


def finite_difference_gradient(group, theta, cfg, adv, h: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (surrogate_at(group, theta + e, cfg, adv) - surrogate_at(group, theta - e, cfg, adv)) / (2 * h)
    return g


def away_from_clip(w: np.ndarray, eps_clip: float, margin: float = 1e-3) -> bool:
    return bool(np.all(np.abs(w - (1 - eps_clip)) > margin) and np.all(np.abs(w - (1 + eps_clip)) > margin))
