"""Game of 24 over exact rationals, with a brute-force solver.

A state is the multiset of numbers still available plus the history of moves.
Each move combines two numbers with one of ``+ - * /`` and puts the result
back, so an episode from four numbers always has exactly three moves.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence, Union

import numpy as np

from ..errors import IllegalAction, InvalidPuzzle, NotTerminal

TARGET = Fraction(24)
OPS = ("+", "-", "*", "/")


def apply_op(a: Fraction, op: str, b: Fraction) -> Fraction:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise ZeroDivisionError("division by zero")
        return a / b
    raise ValueError(f"unknown operator {op!r}")


def fmt_num(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


@dataclass(frozen=True)
class Move:
    left: Fraction
    op: str
    right: Fraction
    result: Fraction
    i: int
    j: int

    def __str__(self) -> str:
        return f"{fmt_num(self.left)} {self.op} {fmt_num(self.right)} = {fmt_num(self.result)}"


@dataclass(frozen=True)
class Game24Action:
    i: int
    j: int
    op: str


@dataclass(frozen=True)
class Game24State:
    numbers: tuple[Fraction, ...]
    history: tuple[Move, ...] = ()

    def __post_init__(self) -> None:
        if not 1 <= len(self.numbers) <= 4:
            raise InvalidPuzzle(f"state must hold 1..4 numbers, got {len(self.numbers)}")
        object.__setattr__(self, "numbers", tuple(Fraction(x) for x in self.numbers))

    @property
    def terminal(self) -> bool:
        return len(self.numbers) == 1

    @property
    def depth(self) -> int:
        return len(self.history)

    def sorted_numbers(self) -> tuple[Fraction, ...]:
        return tuple(sorted(self.numbers, reverse=True))

    def __str__(self) -> str:
        return "{" + ", ".join(fmt_num(x) for x in self.numbers) + "}"


def game24_reset(puzzle: Sequence[int]) -> Game24State:
    if len(puzzle) != 4:
        raise InvalidPuzzle(f"puzzle needs four numbers, got {len(puzzle)}")
    for x in puzzle:
        if isinstance(x, bool) or int(x) != x or not 1 <= x <= 13:
            raise InvalidPuzzle(f"puzzle numbers must be integers in [1, 13], got {x!r}")
    return Game24State(tuple(Fraction(int(x)) for x in puzzle))


def legal_actions(state: Game24State) -> list[Game24Action]:
    """Ordered operand pairs; commutative ops only once per unordered pair."""
    n = len(state.numbers)
    out = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for op in OPS:
                if op in "+*" and i > j:
                    continue
                if op == "/" and state.numbers[j] == 0:
                    continue
                out.append(Game24Action(i, j, op))
    return out


def game24_step(state: Game24State, action: Game24Action) -> Game24State:
    nums = state.numbers
    n = len(nums)
    if n < 2:
        raise IllegalAction("terminal state has no moves")
    if action.i == action.j or not (0 <= action.i < n and 0 <= action.j < n):
        raise IllegalAction(f"bad operand indices ({action.i}, {action.j}) for {n} numbers")
    if action.op not in OPS:
        raise IllegalAction(f"unknown operator {action.op!r}")
    a, b = nums[action.i], nums[action.j]
    if action.op == "/" and b == 0:
        raise IllegalAction("division by zero")
    result = apply_op(a, action.op, b)
    rest = tuple(x for k, x in enumerate(nums) if k not in (action.i, action.j))
    move = Move(a, action.op, b, result, action.i, action.j)
    return Game24State(rest + (result,), state.history + (move,))


def game24_reward(state: Game24State) -> float:
    if not state.terminal:
        raise NotTerminal(f"state {state} still has {len(state.numbers)} numbers")
    return 1.0 if state.numbers[0] == TARGET else 0.0


# --- expressions -----------------------------------------------------------

@dataclass(frozen=True)
class Expr:
    op: str
    left: "Node"
    right: "Node"
    value: Fraction

    def __str__(self) -> str:
        return f"({node_str(self.left)} {self.op} {node_str(self.right)})"


Node = Union[Fraction, Expr]


def node_str(node: Node) -> str:
    return fmt_num(node) if isinstance(node, Fraction) else str(node)


def node_value(node: Node) -> Fraction:
    return node if isinstance(node, Fraction) else node.value


def history_expression(state: Game24State, puzzle: Sequence[int]) -> Node:
    """Rebuild the expression tree a move history denotes."""
    nodes: list[Node] = [Fraction(x) for x in puzzle]
    for mv in state.history:
        a, b = nodes[mv.i], nodes[mv.j]
        if node_value(a) != mv.left or node_value(b) != mv.right:
            raise ValueError("history does not match puzzle")
        nodes = [x for k, x in enumerate(nodes) if k not in (mv.i, mv.j)]
        nodes.append(Expr(mv.op, a, b, mv.result))
    if len(nodes) != 1:
        raise NotTerminal("history does not reach a single number")
    return nodes[0]


def _combine(a: Node, b: Node) -> Iterator[Expr]:
    va, vb = node_value(a), node_value(b)
    yield Expr("+", a, b, va + vb)
    yield Expr("-", a, b, va - vb)
    yield Expr("*", a, b, va * vb)
    if vb != 0:
        yield Expr("/", a, b, va / vb)


def _splits(values: tuple[Fraction, ...]) -> Iterator[tuple[tuple[Fraction, ...], tuple[Fraction, ...]]]:
    """Ordered (left, right) partitions of a multiset into non-empty parts."""
    n = len(values)
    seen = set()
    for r in range(1, n):
        for left_idx in itertools.combinations(range(n), r):
            left = tuple(sorted(values[k] for k in left_idx))
            right = tuple(sorted(values[k] for k in range(n) if k not in left_idx))
            if (left, right) not in seen:
                seen.add((left, right))
                yield left, right


@lru_cache(maxsize=None)
def _exprs_by_value(values: tuple[Fraction, ...]) -> dict[Fraction, tuple[Node, ...]]:
    """Every expression over the sorted multiset ``values``, grouped by value."""
    if len(values) == 1:
        return {values[0]: (values[0],)}
    found: dict[Fraction, dict[str, Node]] = {}
    for left, right in _splits(values):
        for la in _iter_nodes(_exprs_by_value(left)):
            for rb in _iter_nodes(_exprs_by_value(right)):
                for e in _combine(la, rb):
                    found.setdefault(e.value, {}).setdefault(str(e), e)
    return {v: tuple(d.values()) for v, d in found.items()}


def _iter_nodes(groups: dict[Fraction, tuple[Node, ...]]) -> Iterator[Node]:
    for nodes in groups.values():
        yield from nodes


def _partners(a: Fraction, target: Fraction) -> Iterator[tuple[str, Fraction]]:
    """(op, b) with ``a op b == target``; ``target`` must be non-zero."""
    yield "+", target - a
    yield "-", a - target
    if a != 0:
        yield "*", target / a
        yield "/", a / target


def _solutions(values: tuple[Fraction, ...], target: Fraction) -> list[Expr]:
    out: dict[str, Expr] = {}
    for left, right in _splits(values):
        rgroups = _exprs_by_value(right)
        for va, lnodes in _exprs_by_value(left).items():
            for op, vb in _partners(va, target):
                for rb in rgroups.get(vb, ()):
                    for la in lnodes:
                        e = Expr(op, la, rb, target)
                        out.setdefault(str(e), e)
    return sorted(out.values(), key=str)


@lru_cache(maxsize=None)
def _reachable(values: tuple[Fraction, ...]) -> frozenset[Fraction]:
    if len(values) == 1:
        return frozenset(values)
    out: set[Fraction] = set()
    for left, right in _splits(values):
        rset = _reachable(right)
        for a in _reachable(left):
            for b in rset:
                out.add(a + b)
                out.add(a - b)
                out.add(a * b)
                if b != 0:
                    out.add(a / b)
    return frozenset(out)


def reachable_values(numbers: Sequence[int | Fraction]) -> frozenset[Fraction]:
    return _reachable(tuple(sorted(Fraction(x) for x in numbers)))


def can_reach(numbers: Sequence[int | Fraction], target: Fraction = TARGET) -> bool:
    """Whether some expression over ``numbers`` equals the non-zero ``target``."""
    return _can_reach(tuple(sorted(Fraction(x) for x in numbers)), Fraction(target))


@lru_cache(maxsize=None)
def _can_reach(values: tuple[Fraction, ...], target: Fraction) -> bool:
    if len(values) == 1:
        return values[0] == target
    for left, right in _splits(values):
        rset = _reachable(right)
        for a in _reachable(left):
            if any(b in rset for _, b in _partners(a, target)):
                return True
    return False


def is_solvable(numbers: Sequence[int | Fraction]) -> bool:
    return can_reach(numbers, TARGET)


def game24_solve(puzzle: Sequence[int]) -> tuple[bool, list[Expr]]:
    """Enumerate every expression tree over the puzzle and keep those equal to 24."""
    game24_reset(puzzle)
    sols = _solutions(tuple(sorted(Fraction(x) for x in puzzle)), TARGET)
    return bool(sols), sols


# --- puzzles ---------------------------------------------------------------

def all_puzzles() -> list[tuple[int, int, int, int]]:
    """Every multiset of four values from 1..13 (1820 of them)."""
    return list(itertools.combinations_with_replacement(range(1, 14), 4))


def solvable_puzzles() -> list[tuple[int, int, int, int]]:
    return [p for p in all_puzzles() if is_solvable(p)]


def load_puzzles(path) -> list[tuple[int, int, int, int]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            try:
                nums = tuple(int(p) for p in parts)
            except ValueError:
                raise InvalidPuzzle(f"line {lineno}: not four integers: {raw.strip()!r}") from None
            try:
                game24_reset(nums)
            except InvalidPuzzle as exc:
                raise InvalidPuzzle(f"line {lineno}: {exc}") from None
            out.append(nums)  # type: ignore[arg-type]
    return out


# --- state embedding -------------------------------------------------------

STATE_FEATURES = 7
# count and depth advance identically on every path; down-weighting them keeps
# them from swamping the number coordinates in the geometry
PROGRESS_WEIGHT = 0.25


def squash(x: Fraction | float) -> float:
    """Signed log magnitude, scaled so that 24 maps to 1."""
    v = float(x)
    return math.copysign(math.log1p(abs(v)), v) / math.log(25.0)


def state_features(state: Game24State) -> np.ndarray:
    """Canonical features: sorted numbers (zero padded), count, depth, last result.

    Numbers pass through :func:`squash`; count and depth are scaled to [0, 1]
    and weighted by ``PROGRESS_WEIGHT``.
    """
    f = np.zeros(STATE_FEATURES)
    nums = state.sorted_numbers()
    for k, x in enumerate(nums):
        f[k] = squash(x)
    f[4] = PROGRESS_WEIGHT * len(nums) / 4.0
    f[5] = PROGRESS_WEIGHT * state.depth / 3.0
    f[6] = squash(state.history[-1].result) if state.history else 0.0
    return f


@lru_cache(maxsize=64)
def projection_matrix(seed: int, dim: int, n_features: int = STATE_FEATURES) -> np.ndarray:
    """Seeded random ``dim x n_features`` matrix with orthonormal columns.

    Orthonormal columns make the map an isometry, so distances and angles
    between embeddings do not depend on the seed.
    """
    if dim < n_features:
        raise ValueError(f"embedding dimension must be >= {n_features}")
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, n_features)))
    q = q * np.sign(np.diag(r))
    q.setflags(write=False)
    return q


def state_embedding(state: Game24State, projection_seed: int = 0, dim: int = 16) -> np.ndarray:
    """Fixed seeded random projection of the canonical state features."""
    return projection_matrix(projection_seed, dim) @ state_features(state)


def move_embedding(prev: Game24State, move: Move, projection_seed: int = 0, dim: int = 16) -> np.ndarray:
    """Embedding of the verbal statement of one move.

    Uses the state feature layout: operands in the first two number slots,
    the operator in the count slot and the result as last result.
    """
    f = np.zeros(STATE_FEATURES)
    f[0] = squash(move.left)
    f[1] = squash(move.right)
    f[4] = PROGRESS_WEIGHT * (OPS.index(move.op) + 1) / 4.0
    f[5] = PROGRESS_WEIGHT * (prev.depth + 0.5) / 3.0
    f[6] = squash(move.result)
    return projection_matrix(projection_seed, dim) @ f
