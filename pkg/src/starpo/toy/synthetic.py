"""Parametric trajectory generators with ground-truth error labels.

Each generator walks ``K`` steps of base length ``step_size`` in ``d``
dimensions:

* stable: every step along one fixed unit direction ``u``, plus noise.
* drift: the heading turns by a random angle each step, so the walk bends
  away from ``u``.
* leap: a stable walk in which one interior step is replaced by a jump of
  ``leap_factor`` times the step length in a random direction.
* loop: the walk cycles through ``n_anchors`` nearby anchor points.

Noise is isotropic Gaussian with per-component scale ``noise_scale * step_size``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import InvalidParams
from ..trajectory import ErrorLabel, Trajectory

KINDS = ("stable", "drift", "leap", "loop")

_LABELS = {
    "stable": ErrorLabel.NONE,
    "drift": ErrorLabel.SEMANTIC_DRIFT,
    "leap": ErrorLabel.LOGICAL_LEAP,
    "loop": ErrorLabel.REPETITION_LOOP,
}


@dataclass(frozen=True)
class GeneratorParams:
    kind: str = "stable"
    K: int = 8
    d: int = 16
    noise_scale: float = 0.05
    seed: int = 0
    step_size: float = 1.0
    leap_factor: float = 10.0
    n_anchors: int = 2
    max_turn: float = np.pi / 2

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InvalidParams(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.K < 3:
            raise InvalidParams(f"K must be >= 3, got {self.K}")
        if self.d < 2:
            raise InvalidParams(f"d must be >= 2, got {self.d}")
        if self.noise_scale < 0 or not self.step_size > 0:
            raise InvalidParams("noise_scale must be >= 0 and step_size > 0")
        if self.kind == "leap" and (self.K < 4 or self.leap_factor <= 0):
            raise InvalidParams("leap needs K >= 4 and a positive leap_factor")
        if self.kind == "loop" and not 2 <= self.n_anchors < self.K:
            raise InvalidParams("loop needs 2 <= n_anchors < K")
        if not 0 <= self.max_turn <= np.pi:
            raise InvalidParams("max_turn must lie in [0, pi]")


def _unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _orthogonal_unit(rng: np.random.Generator, v: np.ndarray) -> np.ndarray:
    w = rng.standard_normal(v.shape[0])
    w -= (w @ v) * v
    return w / np.linalg.norm(w)


def _deltas(p: GeneratorParams, rng: np.random.Generator) -> np.ndarray:
    n = p.K - 1
    u = _unit(rng, p.d)
    if p.kind == "stable":
        return np.tile(u * p.step_size, (n, 1))
    if p.kind == "drift":
        out = np.empty((n, p.d))
        v = u
        for k in range(n):
            out[k] = v * p.step_size
            angle = rng.uniform(0.0, p.max_turn)
            v = np.cos(angle) * v + np.sin(angle) * _orthogonal_unit(rng, v)
        return out
    if p.kind == "leap":
        out = np.tile(u * p.step_size, (n, 1))
        # interior delta, so the jump sits between two ordinary steps
        k = int(rng.integers(1, n - 1))
        out[k] = _unit(rng, p.d) * p.step_size * p.leap_factor
        return out
    # loop: anchors a_0..a_{m-1} one step apart along fresh directions
    anchors = [np.zeros(p.d)]
    for _ in range(p.n_anchors - 1):
        anchors.append(anchors[-1] + _unit(rng, p.d) * p.step_size)
    pts = np.stack([anchors[k % p.n_anchors] for k in range(p.K)])
    return np.diff(pts, axis=0)


def gen_synthetic(params: GeneratorParams, id: str | None = None) -> tuple[Trajectory, ErrorLabel]:
    """Generate one labelled trajectory; deterministic in ``params.seed``."""
    params.validate()
    rng = np.random.default_rng([params.seed, KINDS.index(params.kind)])
    origin = rng.standard_normal(params.d)
    deltas = _deltas(params, rng)
    steps = np.vstack([origin, origin + np.cumsum(deltas, axis=0)])
    if params.noise_scale > 0:
        steps = steps + rng.standard_normal(steps.shape) * params.noise_scale * params.step_size
    label = _LABELS[params.kind]
    traj = Trajectory(
        id=id or f"{params.kind}-{params.seed}",
        steps=steps,
        label=label,
        meta={"generator": params.kind},
    )
    return traj, label


def gen_corpus(
    n_per_class: int,
    *,
    K: int = 8,
    d: int = 16,
    noise_scale: float = 0.05,
    seed: int = 0,
    kinds: tuple[str, ...] = KINDS,
    params: GeneratorParams | None = None,
) -> list[Trajectory]:
    """``n_per_class`` trajectories of each kind, interleaved by index.

    ``params`` supplies the remaining generator settings (step size, leap
    factor, anchors, turn angle); its kind, K, d, noise and seed are ignored.
    """
    base = params or GeneratorParams()
    out = []
    for i in range(n_per_class):
        for kind in kinds:
            p = replace(base, kind=kind, K=K, d=d, noise_scale=noise_scale, seed=seed * 1_000_003 + i)
            out.append(gen_synthetic(p, id=f"{kind}-{i}")[0])
    return out
