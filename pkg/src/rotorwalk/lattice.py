"""Core geometry for rotor walks on the integer lattice Z^d.

Everything here is exact integer (or rational) arithmetic: points are
tuples of Python ints, balls are decided by comparing squared norms, and
rotor bookkeeping is index arithmetic into a periodic exit sequence.

A site's rotor is represented by a *progress index* into the mechanism's
exit sequence.  The direction a site will send its next particle is
``exit_sequence[progress]``; exiting advances the index by one (mod the
period).  Fresh sites take their starting direction from a default rule
(all-aligned, i.i.d. hashed, half-space split, or an explicit table) and
are stored sparsely: a site absent from the state has never been exited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Mapping

Point = tuple[int, ...]
ColumnKey = tuple[int, ...]

MIN_DIMENSION = 2

_U64 = (1 << 64) - 1

# d=2 compass aliases: North is +e2, East is +e1.
_COMPASS = {"N": (1, +1), "E": (0, +1), "S": (1, -1), "W": (0, -1)}
_COMPASS_NAMES = {(1, +1): "N", (0, +1): "E", (1, -1): "S", (0, -1): "W"}


class LatticeError(ValueError):
    """Invalid lattice configuration (dimension, mechanism, rule, radius)."""


@dataclass(frozen=True, slots=True)
class Direction:
    """One of the 2d cardinal directions of Z^d.

    ``index`` enumerates E = {+e1, -e1, +e2, -e2, ...}; ``axis`` is the
    coordinate it moves and ``sign`` is +1 or -1.  Index parity encodes the
    sign, so negation is ``index ^ 1``.
    """

    index: int
    axis: int
    sign: int

    def negate(self) -> "Direction":
        return Direction(self.index ^ 1, self.axis, -self.sign)

    def vector(self, d: int) -> Point:
        v = [0] * d
        v[self.axis] = self.sign
        return tuple(v)

    def apply(self, p: Point) -> Point:
        q = list(p)
        q[self.axis] += self.sign
        return tuple(q)

    @property
    def name(self) -> str:
        return f"{'+' if self.sign > 0 else '-'}e{self.axis + 1}"

    def compass(self) -> str:
        """d=2 alias (N/E/S/W); falls back to the +e/-e form."""
        return _COMPASS_NAMES.get((self.axis, self.sign), self.name)

    def __repr__(self) -> str:  # keeps test output readable
        return f"Direction({self.name})"


@lru_cache(maxsize=None)
def direction_set(d: int) -> tuple[Direction, ...]:
    """The 2d directions of Z^d in the fixed order +e1, -e1, +e2, -e2, ...

    Dimensions below 2 are rejected: the analysis supported here assumes
    d >= 2 throughout.
    """
    if d < MIN_DIMENSION:
        raise LatticeError(f"dimension must be >= {MIN_DIMENSION}, got {d}")
    dirs = []
    for axis in range(d):
        dirs.append(Direction(2 * axis, axis, +1))
        dirs.append(Direction(2 * axis + 1, axis, -1))
    return tuple(dirs)


def up_direction(d: int) -> Direction:
    """+e_d, the distinguished 'north' direction of the aligned configuration."""
    return direction_set(d)[2 * (d - 1)]


def parse_direction(text: str, d: int) -> Direction:
    """Parse '+e1' / '-e3' (any d) or N/E/S/W compass names (d=2 only)."""
    t = text.strip()
    key = t.upper()
    if key in _COMPASS:
        if d != 2:
            raise LatticeError(f"compass name {t!r} only valid in d=2")
        axis, sign = _COMPASS[key]
        return direction_set(2)[2 * axis + (0 if sign > 0 else 1)]
    if len(t) >= 3 and t[0] in "+-" and t[1] == "e":
        try:
            axis = int(t[2:]) - 1
        except ValueError:
            raise LatticeError(f"cannot parse direction {text!r}") from None
        if not 0 <= axis < d:
            raise LatticeError(f"direction {text!r} out of range for d={d}")
        return direction_set(d)[2 * axis + (0 if t[0] == "+" else 1)]
    raise LatticeError(f"cannot parse direction {text!r}")


# ---------------------------------------------------------------------------
# Mechanism


@dataclass(frozen=True)
class Mechanism:
    """A site-uniform periodic exit sequence.

    The classical case is a cyclic permutation of all 2d directions (period
    exactly 2d, each direction once); general periodic sequences such as the
    period-5 drift N,N,E,S,W are allowed and flagged non-cyclic.
    """

    dimension: int
    exit_sequence: tuple[Direction, ...]

    def __post_init__(self):
        if self.dimension < MIN_DIMENSION:
            raise LatticeError(f"dimension must be >= {MIN_DIMENSION}")
        if not self.exit_sequence:
            raise LatticeError("exit sequence must be nonempty")
        dirs = direction_set(self.dimension)
        for dr in self.exit_sequence:
            if not 0 <= dr.index < 2 * self.dimension or dirs[dr.index] != dr:
                raise LatticeError(f"direction {dr} is not a d={self.dimension} direction")

    @property
    def period(self) -> int:
        return len(self.exit_sequence)

    @property
    def is_cyclic(self) -> bool:
        return (
            self.period == 2 * self.dimension
            and len(set(self.exit_sequence)) == 2 * self.dimension
        )

    def first_index(self, direction: Direction) -> int:
        """Index of the first occurrence of ``direction`` in the sequence.

        A fresh site whose default rotor is ``direction`` starts at this
        progress index.  Raises if the sequence never emits the direction.
        """
        for i, dr in enumerate(self.exit_sequence):
            if dr == direction:
                return i
        raise LatticeError(
            f"direction {direction} does not occur in mechanism {self.spec_string()!r}"
        )

    def direction_at(self, progress: int) -> Direction:
        return self.exit_sequence[progress % self.period]

    def spec_string(self) -> str:
        if self.dimension == 2:
            return ",".join(dr.compass() for dr in self.exit_sequence)
        return ",".join(dr.name for dr in self.exit_sequence)

    @classmethod
    def default(cls, d: int) -> "Mechanism":
        """The enumeration-order cycle +e1 -> -e1 -> +e2 -> ... -> -e_d.

        Escape-rate behavior is the same for every cyclic permutation; this
        one is the package default and every experiment records which
        mechanism it ran under.
        """
        return cls(d, direction_set(d))

    @classmethod
    def clockwise2d(cls) -> "Mechanism":
        """The classical N -> E -> S -> W quarter-turn mechanism in Z^2."""
        return cls.from_spec("N,E,S,W", 2)

    @classmethod
    def from_spec(cls, text: str, d: int) -> "Mechanism":
        parts = [p for p in text.split(",") if p.strip()]
        if not parts:
            raise LatticeError("empty mechanism spec")
        return cls(d, tuple(parse_direction(p, d) for p in parts))


# ---------------------------------------------------------------------------
# Default rules (the initial rotor configuration)


def splitmix64(z: int) -> int:
    """SplitMix64 finalizer; mirrored bit-for-bit by the jitted kernels."""
    z = (z + 0x9E3779B97F4A7C15) & _U64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    return z ^ (z >> 31)


def point_hash(seed: int, p: Point) -> int:
    """Counter-based hash of (seed, coordinates), stable under visit order."""
    h = splitmix64(seed & _U64)
    for c in p:
        h = splitmix64(h ^ (c & _U64))
    return h


class DefaultRule:
    """Deterministic assignment of an initial rotor direction to every site."""

    kind = "abstract"

    def direction_at(self, p: Point) -> Direction:
        raise NotImplementedError

    def spec_string(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class AlignedRule(DefaultRule):
    """Every rotor starts pointing the same way (the aligned configuration)."""

    dimension: int
    direction: Direction
    kind = "aligned"

    def direction_at(self, p: Point) -> Direction:
        return self.direction

    @property
    def is_up(self) -> bool:
        return self.direction == up_direction(self.dimension)

    def spec_string(self) -> str:
        if self.is_up:
            return "up"
        return f"aligned:{self.direction.name}"


@dataclass(frozen=True)
class IidRandomRule(DefaultRule):
    """I.i.d.-style rotors derived from a counter-based hash of (seed, x).

    No precomputation, no stored table: revisiting a site always reproduces
    the same direction.  The hash residue mod 2d carries negligible bias and
    is part of the published determinism contract.
    """

    dimension: int
    seed: int
    kind = "random"

    def direction_at(self, p: Point) -> Direction:
        dirs = direction_set(self.dimension)
        return dirs[point_hash(self.seed, p) % len(dirs)]

    def spec_string(self) -> str:
        return f"random:{self.seed}"


@dataclass(frozen=True)
class SplitRule(DefaultRule):
    """alpha on the upper half-space x_d >= 0, beta on x_d < 0."""

    dimension: int
    alpha: Direction
    beta: Direction
    kind = "split"

    def direction_at(self, p: Point) -> Direction:
        return self.alpha if p[-1] >= 0 else self.beta

    def spec_string(self) -> str:
        return f"split:{self.alpha.name},{self.beta.name}"


@dataclass(frozen=True)
class ExplicitRule(DefaultRule):
    """Explicit table of rotors with a fallback for sites off the table."""

    dimension: int
    table: Mapping[Point, Direction]
    fallback: Direction
    kind = "explicit"

    def direction_at(self, p: Point) -> Direction:
        return self.table.get(p, self.fallback)

    def spec_string(self) -> str:
        return f"explicit:{len(self.table)}sites"


def up_rule(d: int) -> AlignedRule:
    return AlignedRule(d, up_direction(d))


def rule_from_spec(text: str, d: int, seed: int | None = None) -> DefaultRule:
    """Parse rule specs: 'up', 'random:SEED' (or 'random' with a seed arg),
    'split:+e1,-e1', 'aligned:-e2'."""
    t = text.strip()
    if t == "up":
        return up_rule(d)
    if t.startswith("aligned:"):
        return AlignedRule(d, parse_direction(t.split(":", 1)[1], d))
    if t == "random" or t.startswith("random:"):
        if ":" in t:
            try:
                s = int(t.split(":", 1)[1])
            except ValueError:
                raise LatticeError(f"bad seed in rule spec {text!r}") from None
        elif seed is not None:
            s = seed
        else:
            raise LatticeError("rule 'random' needs a seed (random:SEED)")
        return IidRandomRule(d, s)
    if t.startswith("split:"):
        parts = t.split(":", 1)[1].split(",")
        if len(parts) != 2:
            raise LatticeError(f"split rule needs two directions, got {text!r}")
        return SplitRule(d, parse_direction(parts[0], d), parse_direction(parts[1], d))
    raise LatticeError(f"cannot parse rule spec {text!r}")


# ---------------------------------------------------------------------------
# Balls and boundaries


def norm_sq(p: Point) -> int:
    return sum(c * c for c in p)


def _radius_sq(r) -> Fraction:
    if isinstance(r, int):
        return Fraction(r * r)
    if isinstance(r, Fraction):
        return r * r
    raise LatticeError(f"radius must be int or Fraction, got {type(r).__name__}")


def in_ball(p: Point, r) -> bool:
    """|p| < r decided exactly: integer |p|^2 against rational r^2."""
    if r <= 0:
        raise LatticeError(f"radius must be positive, got {r}")
    return norm_sq(p) < _radius_sq(r)


def is_boundary(p: Point, r) -> bool:
    """p outside the ball but adjacent to a point inside it."""
    if in_ball(p, r):
        return False
    return any(in_ball(dr.apply(p), r) for dr in direction_set(len(p)))


def ball_points(d: int, r) -> Iterator[Point]:
    """All points of B_r = {|x| < r}, lexicographic order."""
    if r <= 0:
        raise LatticeError(f"radius must be positive, got {r}")
    rsq = _radius_sq(r)
    # largest integer norm allowed: norm_sq(p) <= budget < r^2
    if isinstance(rsq, Fraction):
        budget = rsq.numerator // rsq.denominator
        if Fraction(budget) == rsq:
            budget -= 1
    else:
        budget = rsq - 1

    def rec(prefix: tuple[int, ...], remaining: int, budget: int) -> Iterator[Point]:
        if remaining == 0:
            yield prefix
            return
        m = math.isqrt(budget)
        for c in range(-m, m + 1):
            yield from rec(prefix + (c,), remaining - 1, budget - c * c)

    yield from rec((), d, budget)


def boundary_points(d: int, r) -> list[Point]:
    """The boundary sphere: outside points adjacent to the ball."""
    rsq = _radius_sq(r)
    seen = set()
    for p in ball_points(d, r):
        for dr in direction_set(d):
            q = dr.apply(p)
            if norm_sq(q) >= rsq:
                seen.add(q)
    return sorted(seen)


def ceil_root(n: int, k: int) -> int:
    """ceil(n^(1/k)) in exact integer arithmetic."""
    if n <= 0 or k <= 0:
        raise LatticeError("ceil_root needs positive arguments")
    if k == 1:
        return n
    r = round(n ** (1.0 / k))
    while r**k >= n:
        r -= 1
    while (r + 1) ** k < n:
        r += 1
    return r + 1


def default_odometer_radius(d: int, n: int) -> int:
    """The canonical radius r = ceil(n^(1/(d-1))) for odometer experiments."""
    return ceil_root(n, d - 1)


# ---------------------------------------------------------------------------
# Rotor state


NEG_INF = float("-inf")
POS_INF = float("inf")


def column_of(p: Point) -> ColumnKey:
    return p[:-1]


@dataclass
class RotorState:
    """Sparse rotor configuration: a default rule plus modifications.

    ``progress`` maps exited sites to their index into the mechanism's exit
    sequence.  ``column_frontier`` tracks, per column (first d-1 coordinates),
    the max x_d among modified sites; untouched columns are at -inf.  A column
    through which a particle has escaped straight north carries an *escape
    ray*: every site of the column at height >= ray start was exited exactly
    once, which we record lazily instead of materializing the infinite trail.
    Columns with a ray report a +inf frontier.

    Single-writer: one experiment mutates one state.
    """

    dimension: int
    default_rule: DefaultRule
    progress: dict[Point, int] = field(default_factory=dict)
    column_frontier: dict[ColumnKey, int] = field(default_factory=dict)
    escape_rays: dict[ColumnKey, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < MIN_DIMENSION:
            raise LatticeError(f"dimension must be >= {MIN_DIMENSION}")

    @classmethod
    def fresh(cls, rule: DefaultRule) -> "RotorState":
        return cls(rule.dimension, rule)

    def copy(self) -> "RotorState":
        return RotorState(
            self.dimension,
            self.default_rule,
            dict(self.progress),
            dict(self.column_frontier),
            dict(self.escape_rays),
        )

    def frontier(self, col: ColumnKey):
        """Max modified height in the column; -inf untouched, +inf after escape."""
        if col in self.escape_rays:
            return POS_INF
        return self.column_frontier.get(col, NEG_INF)

    def _on_ray(self, p: Point) -> bool:
        start = self.escape_rays.get(column_of(p))
        return start is not None and p[-1] >= start

    def current_progress(self, mech: Mechanism, p: Point) -> int:
        got = self.progress.get(p)
        if got is not None:
            return got
        base = mech.first_index(self.default_rule.direction_at(p))
        if self._on_ray(p):
            return (base + 1) % mech.period
        return base

    def rotor(self, mech: Mechanism, p: Point) -> Direction:
        """The direction the next particle leaving p will take."""
        return mech.direction_at(self.current_progress(mech, p))

    def is_modified(self, p: Point) -> bool:
        """True if p has ever been exited (explicitly or on an escape ray)."""
        return p in self.progress or self._on_ray(p)

    def lay_escape_ray(self, p: Point) -> None:
        """Record that a particle escaped straight north from p.

        Every site of p's column at height >= p_d is thereby exited once.
        Only legal when those sites were pristine, i.e. p is strictly above
        the column frontier.
        """
        col = column_of(p)
        if not p[-1] > self.frontier(col):
            raise LatticeError(f"escape ray from {p} does not clear the column frontier")
        self.escape_rays[col] = p[-1]

    def record_exit(self, mech: Mechanism, p: Point) -> Direction:
        """Advance p's rotor by one exit; returns the direction taken."""
        cur = self.current_progress(mech, p)
        self.progress[p] = (cur + 1) % mech.period
        col = column_of(p)
        if col not in self.escape_rays:
            h = self.column_frontier.get(col)
            if h is None or p[-1] > h:
                self.column_frontier[col] = p[-1]
        return mech.direction_at(cur)

    def modified_points(self) -> Iterator[Point]:
        """Explicitly materialized modified sites (escape rays not expanded)."""
        return iter(self.progress)

    def modified_rotor_map(self, mech: Mechanism) -> dict[Point, int]:
        """Direction index of every explicitly modified site, keyed for
        comparison across engine implementations."""
        return {p: mech.direction_at(pr).index for p, pr in self.progress.items()}

    def ray_map(self) -> dict[ColumnKey, int]:
        return dict(self.escape_rays)

    def canonical(self, mech: Mechanism) -> dict:
        """Hashable summary used to compare states across implementations."""
        return {
            "progress": dict(self.progress),
            "rays": dict(self.escape_rays),
            "frontier": dict(self.column_frontier),
            "rule": self.default_rule.spec_string(),
            "mech": mech.spec_string(),
        }


def next_exit(state: RotorState, mech: Mechanism, x: Point) -> Direction:
    """Where the next particle leaving x steps; advances x's rotor.

    Prospective convention: the returned direction is the rotor's value
    *before* the update, i.e. the particle moves first, then the rotor turns.
    """
    return state.record_exit(mech, x)
