"""Odometer computation and the exact combinatorial checks built on it.

The odometer experiment sends n particles from the origin and absorbs
them on the boundary of B_r only; particles pass straight through the
origin.  Per-site exit totals (the odometer u), net directed edge
crossings (the flux kappa), and boundary arrival counts are all exact
integers, so every identity checked here is an equality of integers or
rationals, never a float comparison:

  - the gradient/flux remainder R = grad u + 2d kappa is bounded by 4d-2
    on interior edges;
  - 2d div kappa is n at the origin and 0 at other exercised interior
    sites;
  - replaying the odometer's origin count through walks stopped on the
    boundary or origin recovers exactly n boundary exits;
  - any fair particle schedule yields the same odometer, the same
    boundary multiset, and the same final rotors.

Comparison against n times the ball Green function is the one place
floats enter, through a fitted residual profile over exact integer-norm
shells.
"""

from __future__ import annotations

import io
import math
import random
import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .engine import EngineError
from .lattice import (
    DefaultRule,
    Mechanism,
    Point,
    RotorState,
    direction_set,
    norm_sq,
)

SNAPSHOT_MAGIC = b"ODM1"


class AnalysisError(RuntimeError):
    """An exact lemma identity failed; indicates an engine bug."""


def _index(p: Point, off: int) -> tuple[int, ...]:
    return tuple(c + off for c in p)


def _in_array(idx, shape) -> bool:
    return all(0 <= i < s for i, s in zip(idx, shape))


class Odometer:
    """Per-site exit totals of n boundary-stopped walks, on a dense grid.

    Counts vanish on and outside the boundary sphere by construction
    (nothing exits after absorption).  `arrivals` counts where particles
    were absorbed.
    """

    def __init__(self, counts: np.ndarray, off: int, n: int, r: int, arrivals: np.ndarray):
        self.counts = counts
        self.off = off
        self.n = n
        self.r = r
        self.arrivals = arrivals

    @property
    def dimension(self) -> int:
        return self.counts.ndim

    def __getitem__(self, p: Point) -> int:
        idx = _index(p, self.off)
        if not _in_array(idx, self.counts.shape):
            return 0
        return int(self.counts[idx])

    def origin_count(self) -> int:
        return int(self.counts[(self.off,) * self.dimension])

    def total_mass(self) -> int:
        return int(self.counts.sum())

    def items(self):
        for idx in np.argwhere(self.counts > 0):
            p = tuple(int(c) - self.off for c in idx)
            yield p, int(self.counts[tuple(idx)])

    def arrival_items(self):
        for idx in np.argwhere(self.arrivals > 0):
            p = tuple(int(c) - self.off for c in idx)
            yield p, int(self.arrivals[tuple(idx)])

    def arrival_total(self) -> int:
        return int(self.arrivals.sum())

    def as_scalar_field(self) -> "ScalarField":
        return ScalarField(self.dimension, {p: Fraction(c) for p, c in self.items()})

    def norms_sq_grid(self) -> np.ndarray:
        """|x|^2 at every grid cell, exact integers."""
        axes = np.ogrid[tuple(slice(0, s) for s in self.counts.shape)]
        out = np.zeros(self.counts.shape, dtype=np.int64)
        for ax in axes:
            out = out + (ax - self.off) ** 2
        return out


class EdgeFlux:
    """Net crossings per lattice edge, one signed integer per undirected edge.

    Storage: kappas[a][x] is the net flow across the edge from x to x + e_a,
    i.e. each edge lives at its lexicographically smaller endpoint, which
    makes antisymmetry structural rather than checked.
    """

    def __init__(self, kappas: list[np.ndarray], off: int):
        self.kappas = kappas
        self.off = off

    @property
    def dimension(self) -> int:
        return len(self.kappas)

    def edge_value(self, x: Point, y: Point) -> int:
        """kappa(x, y) for adjacent x, y; antisymmetric by construction."""
        diff = [b - a for a, b in zip(x, y)]
        if sum(abs(c) for c in diff) != 1:
            raise AnalysisError(f"{x} and {y} are not adjacent")
        axis = next(i for i, c in enumerate(diff) if c != 0)
        if diff[axis] == 1:
            base, sign = x, 1
        else:
            base, sign = y, -1
        idx = _index(base, self.off)
        if not _in_array(idx, self.kappas[axis].shape):
            return 0
        return sign * int(self.kappas[axis][idx])

    def divergence_times_2d(self, x: Point) -> int:
        """2d * div kappa(x) = sum of kappa(x, y) over neighbors, exact."""
        total = 0
        for dr in direction_set(self.dimension):
            total += self.edge_value(x, dr.apply(x))
        return total

    def divergence(self, x: Point) -> Fraction:
        return Fraction(self.divergence_times_2d(x), 2 * self.dimension)

    def support_edges(self):
        """(smaller endpoint, axis, net) for every touched edge."""
        for axis, arr in enumerate(self.kappas):
            for idx in np.argwhere(arr != 0):
                p = tuple(int(c) - self.off for c in idx)
                yield p, axis, int(arr[tuple(idx)])


# ---------------------------------------------------------------------------
# Exact sparse fields and discrete calculus


class ScalarField:
    """Sparse point -> rational field; reads are zero off support."""

    def __init__(self, dimension: int, values: dict[Point, Fraction] | None = None):
        self.dimension = dimension
        self.values = dict(values or {})

    def get(self, p: Point) -> Fraction:
        return self.values.get(p, Fraction(0))

    def set(self, p: Point, v) -> None:
        self.values[p] = Fraction(v)


class EdgeField:
    """Sparse directed-edge -> rational field, stored antisymmetrically.

    Keys are (smaller endpoint, axis): the value on the edge toward +e_a.
    """

    def __init__(self, dimension: int, values: dict[tuple[Point, int], Fraction] | None = None):
        self.dimension = dimension
        self.values = dict(values or {})

    def get(self, x: Point, y: Point) -> Fraction:
        diff = [b - a for a, b in zip(x, y)]
        if sum(abs(c) for c in diff) != 1:
            raise AnalysisError(f"{x} and {y} are not adjacent")
        axis = next(i for i, c in enumerate(diff) if c != 0)
        if diff[axis] == 1:
            return self.values.get((x, axis), Fraction(0))
        return -self.values.get((y, axis), Fraction(0))

    def set(self, x: Point, y: Point, v) -> None:
        diff = [b - a for a, b in zip(x, y)]
        axis = next(i for i, c in enumerate(diff) if c != 0)
        if diff[axis] == 1:
            self.values[(x, axis)] = Fraction(v)
        else:
            self.values[(y, axis)] = -Fraction(v)


def gradient(field: ScalarField, edge: tuple[Point, Point]) -> Fraction:
    """grad f(x, y) = f(y) - f(x) on a directed edge."""
    x, y = edge
    return field.get(y) - field.get(x)


def divergence(flux, x: Point) -> Fraction:
    """div kappa(x) = (1/2d) * sum over neighbors y of kappa(x, y)."""
    if isinstance(flux, EdgeFlux):
        return flux.divergence(x)
    d = flux.dimension
    total = Fraction(0)
    for dr in direction_set(d):
        total += flux.get(x, dr.apply(x))
    return total / (2 * d)


def laplacian(field: ScalarField, x: Point) -> Fraction:
    """Delta f(x) = (1/2d) * sum over neighbors of (f(y) - f(x))."""
    d = field.dimension
    total = Fraction(0)
    fx = field.get(x)
    for dr in direction_set(d):
        total += field.get(dr.apply(x)) - fx
    return total / (2 * d)


# ---------------------------------------------------------------------------
# The odometer experiment


def compute_odometer(
    default: DefaultRule,
    n: int,
    r: int,
    mech: Mechanism | None = None,
    impl: str = "auto",
    step_limit: int = 10**10,
) -> tuple[Odometer, EdgeFlux, object]:
    """n walks from the origin absorbed on the boundary sphere only.

    Returns exact exit counts, net edge crossings, and the final rotor
    state.  Particles are not stopped at the origin.
    """
    if r < 1:
        raise EngineError(f"radius must be >= 1, got {r}")
    if n < 0:
        raise EngineError(f"particle count must be nonnegative, got {n}")
    d = default.dimension
    mech = mech if mech is not None else Mechanism.default(d)
    if mech.dimension != d:
        raise EngineError(f"mechanism dimension {mech.dimension} != rule dimension {d}")

    if impl != "reference":
        from . import _fastpath

        fast = _fastpath.odometer_arrays(default, mech, n, r, step_limit)
        if fast is not None:
            counts, kappas, arrivals, state = fast
            off = r + 1
            return Odometer(counts, off, n, r, arrivals), EdgeFlux(kappas, off), state
        if impl == "fast":
            raise EngineError(
                f"no fast odometer kernel for d={d}, rule {default.spec_string()!r}"
            )

    off = r + 1
    side = 2 * r + 3
    shape = (side,) * d
    counts = np.zeros(shape, dtype=np.int64)
    arrivals = np.zeros(shape, dtype=np.int64)
    kappas = [np.zeros(shape, dtype=np.int64) for _ in range(d)]
    state = RotorState.fresh(default)
    rsq = r * r
    origin = (0,) * d

    from .lattice import next_exit

    for _ in range(n):
        x = origin
        steps = 0
        while norm_sq(x) < rsq:
            if steps >= step_limit:
                raise EngineError(
                    f"odometer walk exceeded {step_limit} steps (r={r}); "
                    "this experiment terminates, so the limit indicates a bug"
                )
            dr = next_exit(state, mech, x)
            idx = _index(x, off)
            counts[idx] += 1
            if dr.sign > 0:
                kappas[dr.axis][idx] += 1
            else:
                y = dr.apply(x)
                kappas[dr.axis][_index(y, off)] -= 1
            x = dr.apply(x)
            steps += 1
        arrivals[_index(x, off)] += 1
    return Odometer(counts, off, n, r, arrivals), EdgeFlux(kappas, off), state


def check_flux_identity(odometer: Odometer, flux: EdgeFlux) -> int:
    """Max |grad u + 2d kappa| over edges with both endpoints inside the ball.

    The bound 4d-2 is a theorem for odometer runs; exceeding it is a hard
    failure because only an engine bug can produce it.
    """
    d = odometer.dimension
    u = odometer.counts
    ball = odometer.norms_sq_grid() < odometer.r * odometer.r
    worst = 0
    for axis in range(d):
        u_hi = np.roll(u, -1, axis=axis)
        ball_hi = np.roll(ball, -1, axis=axis)
        edge_mask = ball & ball_hi
        # np.roll wraps; the wrapped slice is outside the ball, so masked out
        sl = [slice(None)] * d
        sl[axis] = -1
        edge_mask[tuple(sl)] = False
        remainder = (u_hi.astype(np.int64) - u) + 2 * d * flux.kappas[axis]
        if edge_mask.any():
            worst = max(worst, int(np.abs(remainder[edge_mask]).max()))
    bound = 4 * d - 2
    if worst > bound:
        raise AnalysisError(
            f"flux identity violated: max |grad u + {2*d} kappa| = {worst} > {bound}"
        )
    return worst


def check_inn(
    default: DefaultRule,
    n: int,
    r: int,
    mech: Mechanism | None = None,
    impl: str = "auto",
) -> bool:
    """Replay the odometer's origin count as boundary-or-origin walks.

    With N = u(o) from the n-particle odometer run, N walks from the same
    initial configuration stopped on the boundary or the origin must send
    exactly n of them to the boundary.  Exact integer equality; mismatch
    is a hard failure.
    """
    from .engine import run_finite_ball

    od, _, _ = compute_odometer(default, n, r, mech=mech, impl=impl)
    big_n = od.origin_count()
    exits, _ = run_finite_ball(default, big_n, r, mech=mech, impl=impl)
    if exits != n:
        raise AnalysisError(
            f"odometer replay mismatch: expected {n} boundary exits from "
            f"{big_n} walks at r={r}, got {exits}"
        )
    return True


def count_columns(odometer: Odometer) -> int:
    """Distinct columns (lines along the last axis) with a positive count."""
    return int(odometer.counts.any(axis=-1).sum())


# ---------------------------------------------------------------------------
# Odometer vs. scaled Green function


@dataclass
class ShellRow:
    norm_sq: int
    radius: float
    rho: float
    points: int
    max_abs_residual: float
    bound: float = 0.0


@dataclass
class ShellProfile:
    """|u - n G| aggregated over exact |x|^2 shells, with a fitted envelope.

    The envelope shape is c * rho * log(2r / rho) + 4d with rho the grid
    distance to the boundary sphere, rho = r + 1 - |x|; c is fitted as the
    smallest constant that dominates every shell, so `fitted_c` doubles as
    a regression number for the residual's size.
    """

    n: int
    r: int
    dimension: int
    u_origin: int
    origin_residual: float
    fitted_c: float
    shells: list[ShellRow]

    def max_residual_within(self, radius: float) -> float:
        vals = [s.max_abs_residual for s in self.shells if s.radius <= radius]
        return max(vals, default=0.0)

    def dominated(self, c: float | None = None) -> bool:
        c = self.fitted_c if c is None else c
        add = 4 * self.dimension
        return all(
            s.max_abs_residual <= c * s.rho * math.log(2 * self.r / s.rho) + add + 1e-9
            for s in self.shells
        )


def odometer_green_residual(odometer: Odometer, green) -> ShellProfile:
    """Shell-by-shell gap between the odometer and n times the Green table.

    `green` is a ball Green-function table with matching radius exposing
    `values`, `off`, and `r` over the same grid geometry.
    """
    if green.r != odometer.r:
        raise AnalysisError(f"radius mismatch: odometer r={odometer.r}, green r={green.r}")
    d = odometer.dimension
    r = odometer.r
    off_o = odometer.off
    off_g = green.off
    side_g = green.values.shape[0]
    lo = off_o - off_g
    hi = lo + side_g
    u = odometer.counts[(slice(lo, hi),) * d].astype(np.float64)
    resid = np.abs(u - odometer.n * green.values)
    nsq = np.zeros(green.values.shape, dtype=np.int64)
    axes = np.ogrid[tuple(slice(0, s) for s in green.values.shape)]
    for ax in axes:
        nsq = nsq + (ax - off_g) ** 2
    # through the absorbing shell (where u and G both vanish), keeping rho > 0
    inside = nsq < (r + 1) ** 2

    shells: list[ShellRow] = []
    fitted = 0.0
    for q in np.unique(nsq[inside]):
        mask = inside & (nsq == q)
        m = float(resid[mask].max())
        radius = math.sqrt(float(q))
        rho = r + 1 - radius
        row = ShellRow(int(q), radius, rho, int(mask.sum()), m)
        shells.append(row)
        need = (m - 4 * d) / (rho * math.log(2 * r / rho))
        fitted = max(fitted, need)
    fitted = max(fitted, 0.0)
    for row in shells:
        row.bound = fitted * row.rho * math.log(2 * r / row.rho) + 4 * d
    origin_res = float(resid[(off_g,) * d])
    return ShellProfile(
        n=odometer.n,
        r=r,
        dimension=d,
        u_origin=odometer.origin_count(),
        origin_residual=origin_res,
        fitted_c=fitted,
        shells=shells,
    )


# ---------------------------------------------------------------------------
# Scheduling independence


@dataclass
class ScheduledRun:
    """Everything a schedule could possibly influence, for exact comparison."""

    exit_counts: dict[Point, int]
    stopped: dict[Point, int]
    rotors: dict[Point, int]

    def __eq__(self, other):
        return (
            self.exit_counts == other.exit_counts
            and self.stopped == other.stopped
            and self.rotors == other.rotors
        )


SCHEDULERS = ("sequential", "round-robin", "random")


def run_scheduled(
    default: DefaultRule,
    n: int,
    r: int,
    scheduler: str,
    mech: Mechanism | None = None,
    seed: int = 0,
) -> ScheduledRun:
    """Drive n simultaneous particles to the boundary under a schedule policy.

    sequential: finish the lowest-numbered live particle first;
    round-robin: one step each, cycling over live particles;
    random: seeded uniform choice among live particles.
    """
    if scheduler not in SCHEDULERS:
        raise AnalysisError(f"unknown scheduler {scheduler!r}; pick from {SCHEDULERS}")
    d = default.dimension
    mech = mech if mech is not None else Mechanism.default(d)
    state = RotorState.fresh(default)
    rsq = r * r
    origin = (0,) * d

    from .lattice import next_exit

    positions = [origin] * n
    live = list(range(n))
    exit_counts: dict[Point, int] = {}
    stopped: dict[Point, int] = {}
    rng = random.Random(seed)
    cursor = 0
    while live:
        if scheduler == "sequential":
            pick = 0
        elif scheduler == "round-robin":
            pick = cursor % len(live)
        else:
            pick = rng.randrange(len(live))
        pid = live[pick]
        x = positions[pid]
        dr = next_exit(state, mech, x)
        exit_counts[x] = exit_counts.get(x, 0) + 1
        y = dr.apply(x)
        positions[pid] = y
        if norm_sq(y) >= rsq:
            stopped[y] = stopped.get(y, 0) + 1
            live.pop(pick)
            # round-robin continues from the same slot, now the next particle
            if scheduler == "round-robin":
                cursor = pick
        elif scheduler == "round-robin":
            cursor = pick + 1
    return ScheduledRun(exit_counts, stopped, state.modified_rotor_map(mech))


def abelian_schedule_check(
    default: DefaultRule,
    n: int,
    r: int,
    scheduler_a: str = "sequential",
    scheduler_b: str = "round-robin",
    mech: Mechanism | None = None,
    seed_a: int = 0,
    seed_b: int = 1,
) -> bool:
    """Exit counts, stop multiset, and final rotors under two schedules.

    Any disagreement is a hard failure: scheduling independence is a
    theorem for this absorbing experiment.
    """
    a = run_scheduled(default, n, r, scheduler_a, mech=mech, seed=seed_a)
    b = run_scheduled(default, n, r, scheduler_b, mech=mech, seed=seed_b)
    if a.exit_counts != b.exit_counts:
        raise AnalysisError(
            f"schedules {scheduler_a}/{scheduler_b} disagree on exit counts"
        )
    if a.stopped != b.stopped:
        raise AnalysisError(
            f"schedules {scheduler_a}/{scheduler_b} disagree on the stop multiset"
        )
    if a.rotors != b.rotors:
        raise AnalysisError(
            f"schedules {scheduler_a}/{scheduler_b} disagree on final rotors"
        )
    return True


# ---------------------------------------------------------------------------
# Dumps


def odometer_to_csv(odometer: Odometer) -> str:
    """Rows (coordinates, count) over the positive support, sorted."""
    d = odometer.dimension
    out = io.StringIO()
    out.write(",".join(f"x{i+1}" for i in range(d)) + ",count\n")
    for p, c in sorted(odometer.items()):
        out.write(",".join(str(c_) for c_ in p) + f",{c}\n")
    return out.getvalue()


def dump_odometer_snapshot(odometer: Odometer, flux: EdgeFlux | None = None) -> bytes:
    """Compact binary dump: magic, version, dim, n, r, then little-endian
    (point, count) records; optionally followed by (point, axis, net) edge
    records."""
    d = odometer.dimension
    buf = io.BytesIO()
    buf.write(SNAPSHOT_MAGIC)
    buf.write(struct.pack("<BB", 1, d))
    buf.write(struct.pack("<QQ", odometer.n, odometer.r))
    records = sorted(odometer.items())
    buf.write(struct.pack("<Q", len(records)))
    for p, c in records:
        buf.write(struct.pack(f"<{d}qQ", *p, c))
    edges = sorted(flux.support_edges()) if flux is not None else []
    buf.write(struct.pack("<Q", len(edges)))
    for p, axis, net in edges:
        buf.write(struct.pack(f"<{d}qBq", *p, axis, net))
    return buf.getvalue()


def load_odometer_snapshot(data: bytes) -> tuple[Odometer, EdgeFlux]:
    buf = io.BytesIO(data)
    if buf.read(4) != SNAPSHOT_MAGIC:
        raise AnalysisError("bad snapshot magic")
    version, d = struct.unpack("<BB", buf.read(2))
    if version != 1:
        raise AnalysisError(f"unsupported snapshot version {version}")
    n, r = struct.unpack("<QQ", buf.read(16))
    off = r + 1
    side = 2 * r + 3
    counts = np.zeros((side,) * d, dtype=np.int64)
    (n_records,) = struct.unpack("<Q", buf.read(8))
    rec = struct.Struct(f"<{d}qQ")
    for _ in range(n_records):
        *p, c = rec.unpack(buf.read(rec.size))
        counts[_index(tuple(p), off)] = c
    kappas = [np.zeros((side,) * d, dtype=np.int64) for _ in range(d)]
    (n_edges,) = struct.unpack("<Q", buf.read(8))
    erec = struct.Struct(f"<{d}qBq")
    for _ in range(n_edges):
        *p, axis, net = erec.unpack(buf.read(erec.size))
        kappas[axis][_index(tuple(p), off)] = net
    arrivals = np.zeros((side,) * d, dtype=np.int64)
    return Odometer(counts, off, n, r, arrivals), EdgeFlux(kappas, off)
