"""Stability metrics over embedding trajectories.

Two scores are computed per trajectory:

* ``r_acf``: mean cosine similarity between consecutive step deltas (lag-1
  directional consistency), in ``[-1, 1]``.
* ``r_pe``: net displacement over total path length, in ``[0, 1]``.

Abnormality calibration takes empirical tail quantiles of these scores over a
calibration sample and flags new trajectories that fall outside them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, InsufficientSample, TooFewDeltas, TooShort
from .trajectory import Trajectory

EPS_PE = 1e-8
EPS_NORM = 1e-12
DEFAULT_TAIL_MASS = 0.1587


@dataclass(frozen=True)
class StabilityScores:
    r_acf: float
    r_pe: float
    acf_pairs: tuple[float, ...]
    net_displacement: float
    path_length: float
    degenerate_acf: bool
    zero_delta_count: int

    @property
    def D(self) -> float:
        return self.net_displacement

    @property
    def L(self) -> float:
        return self.path_length


@dataclass(frozen=True)
class AbnormalityCalibration:
    acf_low: float
    acf_high: float
    pe_low: float
    tail_mass: float
    sample_size: int

    def to_text(self) -> str:
        return "".join(
            f"{k} = {v!r}\n"
            for k, v in (
                ("acf_low", self.acf_low),
                ("acf_high", self.acf_high),
                ("pe_low", self.pe_low),
                ("tail_mass", self.tail_mass),
                ("sample_size", self.sample_size),
            )
        )

    @classmethod
    def from_text(cls, text: str) -> "AbnormalityCalibration":
        vals: dict[str, str] = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"malformed calibration line {raw!r}")
            vals[key.strip()] = value.strip()
        expected = {"acf_low", "acf_high", "pe_low", "tail_mass", "sample_size"}
        if set(vals) != expected:
            raise ConfigError(f"calibration keys {sorted(vals)} != {sorted(expected)}")
        return cls(
            acf_low=float(vals["acf_low"]),
            acf_high=float(vals["acf_high"]),
            pe_low=float(vals["pe_low"]),
            tail_mass=float(vals["tail_mass"]),
            sample_size=int(vals["sample_size"]),
        )


@dataclass(frozen=True)
class AbnormalityFlags:
    acf_abnormal_low: bool
    acf_abnormal_high: bool
    pe_abnormal_low: bool

    @property
    def any_acf(self) -> bool:
        return self.acf_abnormal_low or self.acf_abnormal_high

    def as_list(self) -> list[str]:
        names = []
        if self.acf_abnormal_low:
            names.append("acf_low")
        if self.acf_abnormal_high:
            names.append("acf_high")
        if self.pe_abnormal_low:
            names.append("pe_low")
        return names


def _as_steps(traj: Trajectory | np.ndarray) -> np.ndarray:
    if isinstance(traj, Trajectory):
        return traj.steps
    return np.asarray(traj, dtype=np.float64)


def step_deltas(traj: Trajectory | np.ndarray) -> np.ndarray:
    """Consecutive differences ``h_k - h_{k-1}`` as a ``(K-1, d)`` array."""
    h = _as_steps(traj)
    if h.shape[0] < 2:
        raise TooShort(f"need at least 2 steps, got {h.shape[0]}")
    return np.diff(h, axis=0)


def acf_pairs(deltas: Sequence[Sequence[float]] | np.ndarray, eps_norm: float = EPS_NORM) -> tuple[np.ndarray, int]:
    """Cosine similarity of each adjacent pair of deltas.

    Returns the per-pair values and the number of pairs skipped because a delta
    had norm below ``eps_norm`` (those pairs contribute 0).
    """
    d = np.asarray(deltas, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] < 2:
        raise TooFewDeltas(f"need at least 2 deltas, got {0 if d.ndim != 2 else d.shape[0]}")
    norms = np.linalg.norm(d, axis=1)
    prev, cur = d[:-1], d[1:]
    np_, nc = norms[:-1], norms[1:]
    valid = (np_ >= eps_norm) & (nc >= eps_norm)
    out = np.zeros(d.shape[0] - 1)
    if np.any(valid):
        # normalise first so huge or tiny magnitudes cannot overflow the dot product
        u = prev[valid] / np_[valid, None]
        v = cur[valid] / nc[valid, None]
        # dividing by sqrt(|u|^2 |v|^2) rather than assuming unit norms makes
        # parallel and antiparallel deltas come out as exactly +1 and -1
        uu = np.einsum("ij,ij->i", u, u)
        vv = np.einsum("ij,ij->i", v, v)
        out[valid] = np.clip(np.einsum("ij,ij->i", u, v) / np.sqrt(uu * vv), -1.0, 1.0)
    return out, int(np.count_nonzero(~valid))


def acf_reward(traj: Trajectory | np.ndarray, eps_norm: float = EPS_NORM) -> tuple[float, dict]:
    """Mean lag-1 cosine over the ``K-2`` adjacent delta pairs.

    Trajectories with fewer than three steps have no pair; they score 0 with
    ``degenerate_acf`` set.
    """
    h = _as_steps(traj)
    if h.shape[0] < 3:
        return 0.0, {"acf_pairs": (), "degenerate_acf": True, "zero_delta_count": 0}
    pairs, zero = acf_pairs(step_deltas(h), eps_norm)
    return float(np.mean(pairs)), {
        "acf_pairs": tuple(float(p) for p in pairs),
        "degenerate_acf": False,
        "zero_delta_count": zero,
    }


def path_efficiency(traj: Trajectory | np.ndarray, eps_pe: float = EPS_PE) -> tuple[float, float, float]:
    """Return ``(r_pe, D, L)`` with ``r_pe = D / (L + eps_pe)``."""
    if not eps_pe > 0:
        raise ValueError("eps_pe must be positive")
    deltas = step_deltas(traj)
    h = _as_steps(traj)
    D = float(np.linalg.norm(h[-1] - h[0]))
    L = float(np.sum(np.linalg.norm(deltas, axis=1)))
    # D <= L up to rounding; keep the documented bound exact
    r_pe = min(D / (L + eps_pe), 1.0)
    return r_pe, D, L


def stability_scores(
    traj: Trajectory | np.ndarray, eps_pe: float = EPS_PE, eps_norm: float = EPS_NORM
) -> StabilityScores:
    r_acf, diag = acf_reward(traj, eps_norm)
    r_pe, D, L = path_efficiency(traj, eps_pe)
    return StabilityScores(
        r_acf=r_acf,
        r_pe=r_pe,
        acf_pairs=diag["acf_pairs"],
        net_displacement=D,
        path_length=L,
        degenerate_acf=diag["degenerate_acf"],
        zero_delta_count=diag["zero_delta_count"],
    )


def calibrate_abnormality(sample: Sequence[StabilityScores], tail_mass: float = DEFAULT_TAIL_MASS) -> AbnormalityCalibration:
    """Fit tail thresholds with linear-interpolation empirical quantiles."""
    if not 0.0 < tail_mass < 0.5:
        raise ValueError(f"tail_mass must lie in (0, 0.5), got {tail_mass}")
    if len(sample) < 2:
        raise InsufficientSample(f"calibration needs at least 2 trajectories, got {len(sample)}")
    acf = np.array([s.r_acf for s in sample])
    pe = np.array([s.r_pe for s in sample])
    lo, hi = np.quantile(acf, [tail_mass, 1.0 - tail_mass], method="linear")
    return AbnormalityCalibration(
        acf_low=float(lo),
        acf_high=float(max(hi, lo)),
        pe_low=float(np.quantile(pe, tail_mass, method="linear")),
        tail_mass=float(tail_mass),
        sample_size=len(sample),
    )


def flag_abnormal(scores: StabilityScores, calib: AbnormalityCalibration) -> AbnormalityFlags:
    # strict inequalities: a score sitting on a threshold is normal
    return AbnormalityFlags(
        acf_abnormal_low=scores.r_acf < calib.acf_low,
        acf_abnormal_high=scores.r_acf > calib.acf_high,
        pe_abnormal_low=scores.r_pe < calib.pe_low,
    )


def scores_meta(scores: StabilityScores, flags: AbnormalityFlags | None = None) -> dict[str, str]:
    """Encode scores under the reserved trajectory ``meta`` keys."""
    meta = {
        "r_acf": repr(scores.r_acf),
        "r_pe": repr(scores.r_pe),
        "D": repr(scores.net_displacement),
        "L": repr(scores.path_length),
    }
    if flags is not None:
        meta["flags"] = ",".join(flags.as_list())
    return meta
