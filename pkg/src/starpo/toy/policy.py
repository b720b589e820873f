"""Linear-softmax toy policy.

The policy scores each legal action by ``theta . phi(state, action) / T`` and
samples from the softmax. Environments supply the feature matrix ``phi`` (one
row per legal action), so the same policy and its gradient serve every env.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..errors import DeadEnd


@dataclass
class ToyPolicy:
    weights: np.ndarray
    temperature: float = 1.0

    def __post_init__(self) -> None:
        self.weights = np.array(self.weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise ValueError("weights must be a vector")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("policy weights must be finite")

    @classmethod
    def zeros(cls, dim: int, temperature: float = 1.0) -> "ToyPolicy":
        return cls(np.zeros(dim), temperature)

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.weights.copy(), self.temperature)

    def logits(self, features: np.ndarray) -> np.ndarray:
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise DeadEnd("no legal action")
        return feats @ self.weights / self.temperature

    def log_probs(self, features: np.ndarray) -> np.ndarray:
        z = self.logits(features)
        return z - logsumexp(z)

    def probs(self, features: np.ndarray) -> np.ndarray:
        return np.exp(self.log_probs(features))

    def grad_log_prob(self, features: np.ndarray, action: int) -> np.ndarray:
        """d log pi(action) / d theta = (phi_a - E_pi[phi]) / T."""
        feats = np.asarray(features, dtype=np.float64)
        p = self.probs(feats)
        return (feats[action] - p @ feats) / self.temperature

    def sample(self, features: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
        lp = self.log_probs(features)
        p = np.exp(lp)
        # inverse-CDF draw keeps the stream usage fixed at one uniform per step
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(p), u * p.sum(), side="right"))
        idx = min(idx, len(p) - 1)
        return idx, float(lp[idx])

    def greedy(self, features: np.ndarray) -> tuple[int, float]:
        lp = self.log_probs(features)
        idx = int(np.argmax(lp))
        return idx, float(lp[idx])
