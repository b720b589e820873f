"""Trajectory data model, step segmentation, step embeddings and JSONL storage.

A trajectory is the ordered list of per-step embedding vectors ``h_1..h_K`` that
the stability metrics consume. Files hold one JSON record per line::

    {"id": "t0", "steps": [[0.0, 1.0], [1.0, 1.0]], "texts": ["a", "b"],
     "task_reward": 1.0, "label": "leap", "meta": {"source": "toy"}}
"""

from __future__ import annotations

import enum
import json
import os
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimMismatch,
    EmptyInput,
    EmptyStep,
    InvalidTrajectory,
    IoError,
    ParseError,
)


class ErrorLabel(str, enum.Enum):
    NONE = "none"
    SEMANTIC_DRIFT = "drift"
    LOGICAL_LEAP = "leap"
    REPETITION_LOOP = "loop"

    @property
    def pretty(self) -> str:
        return _PRETTY[self]


_PRETTY = {
    ErrorLabel.NONE: "None",
    ErrorLabel.SEMANTIC_DRIFT: "Semantic Drift",
    ErrorLabel.LOGICAL_LEAP: "Logical Leap",
    ErrorLabel.REPETITION_LOOP: "Repetition Loop",
}

ERROR_TYPES = (ErrorLabel.SEMANTIC_DRIFT, ErrorLabel.LOGICAL_LEAP, ErrorLabel.REPETITION_LOOP)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Per-step embeddings of one reasoning chain.

    ``steps`` is stored as a read-only ``(K, d)`` float64 array.
    """

    id: str
    steps: np.ndarray
    step_texts: tuple[str, ...] | None = None
    task_reward: float | None = None
    label: ErrorLabel | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        try:
            arr = np.array(self.steps, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise InvalidTrajectory(f"steps are not a rectangular numeric array: {exc}") from None
        if arr.ndim != 2:
            raise InvalidTrajectory(f"steps must be a K x d array, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise InvalidTrajectory("trajectory needs at least one step")
        if arr.shape[1] < 1:
            raise InvalidTrajectory("embedding dimension must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise InvalidTrajectory("embedding contains NaN or Inf")
        arr.setflags(write=False)
        object.__setattr__(self, "steps", arr)
        if self.step_texts is not None:
            texts = tuple(self.step_texts)
            if len(texts) != arr.shape[0]:
                raise InvalidTrajectory(f"{len(texts)} step texts for {arr.shape[0]} steps")
            object.__setattr__(self, "step_texts", texts)
        if self.task_reward is not None:
            r = float(self.task_reward)
            if not (0.0 <= r <= 1.0):
                raise InvalidTrajectory(f"task_reward {r} outside [0, 1]")
            object.__setattr__(self, "task_reward", r)
        if self.label is not None and not isinstance(self.label, ErrorLabel):
            try:
                object.__setattr__(self, "label", ErrorLabel(self.label))
            except ValueError:
                raise InvalidTrajectory(f"unknown label {self.label!r}") from None
        meta = dict(self.meta)
        for k, v in meta.items():
            if not isinstance(k, str) or not isinstance(v, str):
                raise InvalidTrajectory("meta must map strings to strings")
        object.__setattr__(self, "meta", meta)

    @property
    def K(self) -> int:
        return self.steps.shape[0]

    @property
    def dim(self) -> int:
        return self.steps.shape[1]

    def with_meta(self, **extra: str) -> "Trajectory":
        meta = dict(self.meta)
        meta.update(extra)
        return Trajectory(self.id, self.steps, self.step_texts, self.task_reward, self.label, meta)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.id == other.id
            and self.steps.shape == other.steps.shape
            and np.array_equal(self.steps, other.steps)
            and self.step_texts == other.step_texts
            and self.task_reward == other.task_reward
            and self.label == other.label
            and self.meta == other.meta
        )

    __hash__ = None  # type: ignore[assignment]


# --- segmentation ----------------------------------------------------------

LINE = "line"
SENTENCE = "sentence"

_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")


def segment_steps(text: str, rule: str = LINE, marker: str | None = None) -> list[str]:
    """Split a reasoning generation into step spans.

    ``rule`` is ``"line"``, ``"sentence"`` or ``"marker"`` (which needs ``marker``).
    Spans are stripped of surrounding whitespace; empty spans are dropped.
    """
    if not text or not text.strip():
        raise EmptyInput("cannot segment empty text")
    if rule == LINE:
        parts = text.splitlines()
    elif rule == SENTENCE:
        parts = _SENTENCE_END.split(text.strip())
    elif rule == "marker":
        if not marker:
            raise ValueError("marker rule needs a non-empty marker string")
        parts = text.split(marker)
    else:
        raise ValueError(f"unknown segmentation rule {rule!r}")
    return [p.strip() for p in parts if p.strip()]


def embed_steps(
    token_vectors_per_step: Sequence[Sequence[Sequence[float]]],
    *,
    id: str = "traj",
    step_texts: Sequence[str] | None = None,
) -> Trajectory:
    """Average token vectors within each step into one embedding per step."""
    if len(token_vectors_per_step) == 0:
        raise EmptyInput("no steps given")
    means = []
    dim = None
    for k, tokens in enumerate(token_vectors_per_step):
        if len(tokens) == 0:
            raise EmptyStep(f"step {k} has no token vectors")
        try:
            arr = np.asarray(tokens, dtype=np.float64)
        except ValueError:
            raise DimMismatch(f"step {k} has token vectors of differing dimension") from None
        if arr.ndim != 2:
            raise DimMismatch(f"step {k} has token vectors of differing dimension")
        if dim is None:
            dim = arr.shape[1]
        elif arr.shape[1] != dim:
            raise DimMismatch(f"step {k} has dimension {arr.shape[1]}, expected {dim}")
        means.append(arr.mean(axis=0))
    return Trajectory(id=id, steps=np.stack(means), step_texts=step_texts)


# --- file IO ---------------------------------------------------------------

def trajectory_to_record(traj: Trajectory) -> dict:
    rec: dict = {"id": traj.id, "steps": traj.steps.tolist()}
    if traj.step_texts is not None:
        rec["texts"] = list(traj.step_texts)
    if traj.task_reward is not None:
        rec["task_reward"] = traj.task_reward
    if traj.label is not None:
        rec["label"] = traj.label.value
    if traj.meta:
        rec["meta"] = dict(traj.meta)
    return rec


_KNOWN_KEYS = {"id", "steps", "texts", "task_reward", "label", "meta"}


def trajectory_from_record(rec: dict, line: int | None = None) -> Trajectory:
    if not isinstance(rec, dict):
        raise InvalidTrajectory("record is not an object", line)
    unknown = set(rec) - _KNOWN_KEYS
    if unknown:
        raise InvalidTrajectory(f"unknown fields {sorted(unknown)}", line)
    if not isinstance(rec.get("id"), str):
        raise InvalidTrajectory("missing or non-string id", line)
    steps = rec.get("steps")
    if not isinstance(steps, list) or not steps or not all(isinstance(s, list) for s in steps):
        raise InvalidTrajectory("steps must be a non-empty array of arrays", line)
    dims = {len(s) for s in steps}
    if len(dims) != 1:
        raise InvalidTrajectory("steps have mismatched dimensions", line)
    for s in steps:
        for x in s:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise InvalidTrajectory("step components must be numbers", line)
    try:
        return Trajectory(
            id=rec["id"],
            steps=np.asarray(steps, dtype=np.float64),
            step_texts=rec.get("texts"),
            task_reward=rec.get("task_reward"),
            label=rec.get("label"),
            meta=rec.get("meta") or {},
        )
    except InvalidTrajectory as exc:
        raise InvalidTrajectory(exc.reason, line) from None


def load_trajectories(path: str | os.PathLike) -> list[Trajectory]:
    """Read a JSONL trajectory file, validating every record."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw, parse_constant=_reject_constant)
            except (json.JSONDecodeError, ValueError) as exc:
                raise ParseError(lineno, str(exc)) from None
            out.append(trajectory_from_record(rec, lineno))
    return out


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name}")


def save_trajectories(trajectories: Iterable[Trajectory], path: str | os.PathLike) -> None:
    """Write trajectories as JSONL. Floats use the shortest round-trip repr."""
    lines = []
    for t in trajectories:
        if not isinstance(t, Trajectory):
            raise InvalidTrajectory(f"not a Trajectory: {type(t).__name__}")
        if not np.all(np.isfinite(t.steps)):
            raise InvalidTrajectory(f"{t.id}: embedding contains NaN or Inf")
        lines.append(json.dumps(trajectory_to_record(t), allow_nan=False, ensure_ascii=False))
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def fmt_float(x: float) -> str:
    """Decimal text that parses back to the identical double."""
    return repr(float(x))
