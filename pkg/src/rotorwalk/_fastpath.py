"""Bridge between the public experiment API and the jitted kernels.

Each entry point returns None when the configuration is outside kernel
coverage (dimension not 2 or 3, rule not aligned/hashed, mechanism missing
a needed direction); callers then fall back to the pure-Python reference.
Kernel results are wrapped in dense read-only state objects that mirror
the sparse RotorState query surface, so downstream consumers (rendering,
lemma checks, cross-validation) treat both uniformly.
"""

from __future__ import annotations

import json
import os
import time

import numpy as np

from . import _kernels as K
from .engine import EngineError, EscapeStats, OutcomeKind, WalkOutcome
from .lattice import (
    AlignedRule,
    DefaultRule,
    IidRandomRule,
    Mechanism,
    Point,
    column_of,
)

_U64 = (1 << 64) - 1

_STATUS_KIND = {
    K.STATUS_RETURNED: OutcomeKind.RETURNED_TO_ORIGIN,
    K.STATUS_ESCAPED: OutcomeKind.ESCAPED,
    K.STATUS_BOUNDARY: OutcomeKind.STOPPED_AT_BOUNDARY,
    K.STATUS_LIMIT: OutcomeKind.STEP_LIMIT_EXCEEDED,
}

MAX_HALF_2D = 8192
MAX_HALF_3D = 384


def encode_mechanism(mech: Mechanism):
    """Mechanism as (code sequence, first-occurrence table, period)."""
    seq = np.array([dr.index for dr in mech.exit_sequence], dtype=np.int8)
    nd = 2 * mech.dimension
    base = np.full(nd, -1, dtype=np.int8)
    for i in range(len(seq) - 1, -1, -1):
        base[seq[i]] = i
    return seq, base, len(seq)


def encode_rule(rule: DefaultRule, base: np.ndarray):
    """Rule as (kind, aligned_base, seed); None if the kernels can't run it."""
    if isinstance(rule, AlignedRule):
        a_base = int(base[rule.direction.index])
        if a_base < 0:
            return None
        return 0, a_base, np.uint64(0)
    if isinstance(rule, IidRandomRule):
        if (base < 0).any():
            return None
        return 1, 0, np.uint64(rule.seed & _U64)
    return None


class DenseEscapeState:
    """Read-only view of an escape run's final rotors held in dense arrays."""

    def __init__(self, rule, prog, ray, frontier, half):
        self.dimension = rule.dimension
        self.default_rule = rule
        self._prog = prog
        self._ray = ray
        self._frontier = frontier
        self._half = half

    def _ray_start(self, col):
        idx = tuple(c + self._half for c in col)
        if any(i < 0 or i >= self._prog.shape[0] for i in idx):
            return None
        v = self._ray[idx] if self.dimension == 3 else self._ray[idx[0]]
        return None if v == K.NO_RAY else int(v)

    def _on_ray(self, p: Point) -> bool:
        start = self._ray_start(column_of(p))
        return start is not None and p[-1] >= start

    def _prog_at(self, p: Point):
        idx = tuple(c + self._half for c in p)
        if any(i < 0 or i >= self._prog.shape[0] for i in idx):
            return -1
        return int(self._prog[idx])

    def current_progress(self, mech: Mechanism, p: Point) -> int:
        got = self._prog_at(p)
        if got >= 0:
            return got
        b = mech.first_index(self.default_rule.direction_at(p))
        if self._on_ray(p):
            return (b + 1) % mech.period
        return b

    def rotor(self, mech: Mechanism, p: Point):
        return mech.direction_at(self.current_progress(mech, p))

    def is_modified(self, p: Point) -> bool:
        return self._prog_at(p) >= 0 or self._on_ray(p)

    def frontier(self, col):
        if self._ray_start(col) is not None:
            return float("inf")
        idx = tuple(c + self._half for c in col)
        if any(i < 0 or i >= self._prog.shape[0] for i in idx):
            return float("-inf")
        v = self._frontier[idx] if self.dimension == 3 else self._frontier[idx[0]]
        return float("-inf") if v == K.NEG_INF_I else int(v)

    def modified_points(self):
        for idx in np.argwhere(self._prog >= 0):
            yield tuple(int(c) - self._half for c in idx)

    def modified_rotor_map(self, mech: Mechanism) -> dict[Point, int]:
        return {
            p: mech.direction_at(self._prog_at(p)).index for p in self.modified_points()
        }

    def ray_map(self) -> dict[tuple, int]:
        out = {}
        if self.dimension == 2:
            for i in np.flatnonzero(self._ray != K.NO_RAY):
                out[(int(i) - self._half,)] = int(self._ray[i])
        else:
            for i, j in np.argwhere(self._ray != K.NO_RAY):
                out[(int(i) - self._half, int(j) - self._half)] = int(self._ray[i, j])
        return out


class DenseBallState:
    """Read-only view of a finite-ball run's final rotors (no escape rays)."""

    def __init__(self, rule, prog, off):
        self.dimension = rule.dimension
        self.default_rule = rule
        self._prog = prog
        self._off = off

    def _prog_at(self, p: Point):
        idx = tuple(c + self._off for c in p)
        if any(i < 0 or i >= self._prog.shape[0] for i in idx):
            return -1
        return int(self._prog[idx])

    def current_progress(self, mech: Mechanism, p: Point) -> int:
        got = self._prog_at(p)
        if got >= 0:
            return got
        return mech.first_index(self.default_rule.direction_at(p))

    def rotor(self, mech: Mechanism, p: Point):
        return mech.direction_at(self.current_progress(mech, p))

    def is_modified(self, p: Point) -> bool:
        return self._prog_at(p) >= 0

    def modified_points(self):
        for idx in np.argwhere(self._prog >= 0):
            yield tuple(int(c) - self._off for c in idx)

    def modified_rotor_map(self, mech: Mechanism) -> dict[Point, int]:
        return {
            p: mech.direction_at(self._prog_at(p)).index for p in self.modified_points()
        }

    def ray_map(self) -> dict[tuple, int]:
        return {}


# ---------------------------------------------------------------------------
# Escape experiment driver (growable box, per-particle kernel resumption)


def _fresh_escape_arrays(d: int, half: int):
    side = 2 * half + 1
    if d == 2:
        prog = np.full((side, side), -1, dtype=np.int8)
        ray = np.full(side, K.NO_RAY, dtype=np.int64)
        frontier = np.full(side, K.NEG_INF_I, dtype=np.int64)
    else:
        prog = np.full((side, side, side), -1, dtype=np.int8)
        ray = np.full((side, side), K.NO_RAY, dtype=np.int64)
        frontier = np.full((side, side), K.NEG_INF_I, dtype=np.int64)
    return prog, ray, frontier


def _grow_escape_arrays(d, prog, ray, frontier, half, new_half):
    new_prog, new_ray, new_frontier = _fresh_escape_arrays(d, new_half)
    s = new_half - half
    w = 2 * half + 1
    if d == 2:
        new_prog[s : s + w, s : s + w] = prog
        new_ray[s : s + w] = ray
        new_frontier[s : s + w] = frontier
    else:
        new_prog[s : s + w, s : s + w, s : s + w] = prog
        new_ray[s : s + w, s : s + w] = ray
        new_frontier[s : s + w, s : s + w] = frontier
    return new_prog, new_ray, new_frontier


def escape_experiment(rule, mech, n, step_limit):
    d = rule.dimension
    if not K.HAVE_NUMBA or d not in (2, 3):
        return None
    seq, base, L = encode_mechanism(mech)
    up_base = int(base[2 * (d - 1)])
    if up_base < 0:
        return None
    max_half = MAX_HALF_2D if d == 2 else MAX_HALF_3D

    half = 64
    prog, ray, frontier = _fresh_escape_arrays(d, half)
    outcomes: list[WalkOutcome] = []
    escaped = returned = steps_total = 0

    for _ in range(n):
        pos = (0,) * d
        steps = 0
        while True:
            if d == 2:
                status, x, y, steps = K.escape_walk_d2(
                    prog, ray, frontier, half, seq, L, up_base, pos[0], pos[1], steps, step_limit
                )
                pos = (x, y)
            else:
                status, x, y, z, steps = K.escape_walk_d3(
                    prog,
                    ray,
                    frontier,
                    half,
                    seq,
                    L,
                    up_base,
                    pos[0],
                    pos[1],
                    pos[2],
                    steps,
                    step_limit,
                )
                pos = (x, y, z)
            if status != K.STATUS_GROW:
                break
            new_half = half * 2
            if new_half > max_half:
                raise EngineError(
                    f"escape run outgrew the maximum box (half-width {max_half}, d={d}); "
                    "for drifting or exotic mechanisms use estimate_I_stabilized"
                )
            prog, ray, frontier = _grow_escape_arrays(d, prog, ray, frontier, half, new_half)
            half = new_half

        kind = _STATUS_KIND[status]
        esc_site = None
        if kind is OutcomeKind.ESCAPED:
            esc_site = pos
            if d == 2:
                ray[pos[0] + half] = pos[1]
            else:
                ray[pos[0] + half, pos[1] + half] = pos[2]
            escaped += 1
        elif kind is OutcomeKind.RETURNED_TO_ORIGIN:
            returned += 1
        steps_total += steps
        outcomes.append(WalkOutcome(kind, steps, pos, esc_site, None))

    return EscapeStats(
        n=n,
        escaped=escaped,
        returned=returned,
        per_particle=outcomes,
        dimension=d,
        rule_spec=rule.spec_string(),
        mech_spec=mech.spec_string(),
        steps_total=steps_total,
        final_state=DenseEscapeState(rule, prog, ray, frontier, half),
    )


# ---------------------------------------------------------------------------
# Finite-ball and odometer drivers (fixed box of radius r)


def finite_ball(rule, mech, n, r, step_limit):
    d = rule.dimension
    if not K.HAVE_NUMBA or d not in (2, 3):
        return None
    seq, base, L = encode_mechanism(mech)
    enc = encode_rule(rule, base)
    if enc is None:
        return None
    rule_kind, a_base, seed = enc

    off = r + 1
    side = 2 * r + 3
    prog = np.full((side,) * d, -1, dtype=np.int8)
    statuses = np.empty(n, dtype=np.int8)
    steps_out = np.empty(n, dtype=np.int64)
    fn = K.finite_ball_d2 if d == 2 else K.finite_ball_d3
    fn(prog, off, r * r, seq, base, L, rule_kind, a_base, seed, n, step_limit, statuses, steps_out)
    if (statuses == K.STATUS_LIMIT).any():
        raise EngineError(
            f"finite-ball walk exceeded {step_limit} steps (r={r}); "
            "this experiment terminates, so the limit indicates a bug"
        )
    exits = int((statuses == K.STATUS_BOUNDARY).sum())
    return exits, DenseBallState(rule, prog, off), int(steps_out.sum())


def odometer_arrays(rule, mech, n, r, step_limit):
    """Dense odometer run: (counts, kappa_per_axis, arrivals, state) or None."""
    d = rule.dimension
    if not K.HAVE_NUMBA or d not in (2, 3):
        return None
    seq, base, L = encode_mechanism(mech)
    enc = encode_rule(rule, base)
    if enc is None:
        return None
    rule_kind, a_base, seed = enc

    off = r + 1
    side = 2 * r + 3
    prog = np.full((side,) * d, -1, dtype=np.int8)
    counts = np.zeros((side,) * d, dtype=np.int64)
    arrivals = np.zeros((side,) * d, dtype=np.int64)
    kappas = [np.zeros((side,) * d, dtype=np.int64) for _ in range(d)]
    if d == 2:
        bad = K.odometer_d2(
            prog,
            counts,
            kappas[0],
            kappas[1],
            arrivals,
            off,
            r * r,
            seq,
            base,
            L,
            rule_kind,
            a_base,
            seed,
            n,
            step_limit,
        )
    else:
        bad = K.odometer_d3(
            prog,
            counts,
            kappas[0],
            kappas[1],
            kappas[2],
            arrivals,
            off,
            r * r,
            seq,
            base,
            L,
            rule_kind,
            a_base,
            seed,
            n,
            step_limit,
        )
    if bad:
        raise EngineError(
            f"odometer walk exceeded {step_limit} steps (r={r}); "
            "this experiment terminates, so the limit indicates a bug"
        )
    return counts, kappas, arrivals, DenseBallState(rule, prog, off)


# ---------------------------------------------------------------------------
# No-return sampling driver with resumable checkpoints


def alpha_counts(
    d: int,
    samples: int,
    horizon: int,
    seed: int,
    shard_size: int = 5000,
    checkpoint_path: str | None = None,
    progress: bool = False,
):
    """Count SRW samples with no return to the origin within the horizon.

    Sharded over the sample index (streams are counter-based, so shard
    boundaries do not affect results).  With a checkpoint path, partial
    counts survive interruption and are resumed exactly.
    """
    if d not in (2, 3):
        raise EngineError(f"no-return sampling kernels cover d in (2, 3), got {d}")
    if not K.HAVE_NUMBA:
        raise EngineError("no-return sampling at scale requires the jitted kernels")
    fn = K.alpha_shard_d3 if d == 3 else K.alpha_shard_d2
    seed_u = np.uint64(seed & _U64)

    done = 0
    no_return = 0
    if checkpoint_path and os.path.exists(checkpoint_path):
        with open(checkpoint_path) as fh:
            ck = json.load(fh)
        if (
            ck.get("d") == d
            and ck.get("seed") == seed
            and ck.get("horizon") == horizon
            and ck.get("samples_target") == samples
        ):
            done = ck["samples_done"]
            no_return = ck["no_return"]

    t0 = time.time()
    while done < samples:
        batch = min(shard_size, samples - done)
        no_return += int(fn(seed_u, done, batch, horizon))
        done += batch
        if checkpoint_path:
            tmp = checkpoint_path + ".tmp"
            with open(tmp, "w") as fh:
                json.dump(
                    {
                        "d": d,
                        "seed": seed,
                        "horizon": horizon,
                        "samples_target": samples,
                        "samples_done": done,
                        "no_return": no_return,
                    },
                    fh,
                )
            os.replace(tmp, checkpoint_path)
        if progress:
            dt = time.time() - t0
            print(f"[alpha d={d}] {done}/{samples} samples, no_return={no_return}, {dt:.0f}s", flush=True)
    return no_return
