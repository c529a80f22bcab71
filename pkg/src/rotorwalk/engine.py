"""Rotor-walk execution: single walks, stopping sets, escape certification.

A walk moves a particle by repeatedly consuming rotor exits.  It halts when
it hits a stopping set (the origin, a ball boundary, or both), when an
escape oracle certifies that the forward trajectory can never return, or
when a step budget runs out.

The escape oracle implemented here is the straight-north certificate for
the all-up initial configuration: if every site weakly above x in its
column still has its pristine up rotor, the particle at x walks north
forever.  Certified escapes leave behind an infinite modified trail, which
the state records as an escape ray rather than materializing.

Escape counts for arbitrary initial configurations have no exact finite
certificate; for those, ``estimate_I_stabilized`` runs the finite-ball
experiment on a growing radius schedule and reports the value once it
stops changing, which by monotonicity is an upper bound at every radius.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .lattice import (
    AlignedRule,
    DefaultRule,
    LatticeError,
    Mechanism,
    Point,
    RotorState,
    column_of,
    next_exit,
    norm_sq,
)

DEFAULT_STEP_LIMIT = 10**10


class EngineError(RuntimeError):
    """Walk or experiment misconfiguration, or an internal invariant breach."""


class OutcomeKind(enum.Enum):
    RETURNED_TO_ORIGIN = "returned"
    ESCAPED = "escaped"
    STOPPED_AT_BOUNDARY = "boundary"
    STEP_LIMIT_EXCEEDED = "limit"


@dataclass(slots=True)
class WalkOutcome:
    """Terminal record of one walk: what stopped it, where, after how many steps."""

    kind: OutcomeKind
    steps: int
    end: Point
    escape_site: Point | None = None
    path: list[Point] | None = None


@dataclass(frozen=True)
class StopSet:
    """Arrival-triggered stopping set: the origin, a ball boundary, or both.

    ``rsq`` is the squared radius (exact); a particle stops on reaching any
    site with |x|^2 >= rsq.  Stops fire on arrival only, never on the start
    site, matching walks that begin at the origin they may later return to.
    """

    rsq: int | None
    at_origin: bool

    @classmethod
    def origin_only(cls) -> "StopSet":
        return cls(None, True)

    @classmethod
    def boundary_only(cls, r: int) -> "StopSet":
        if r < 1:
            raise EngineError(f"radius must be >= 1, got {r}")
        return cls(r * r, False)

    @classmethod
    def boundary_and_origin(cls, r: int) -> "StopSet":
        if r < 1:
            raise EngineError(f"radius must be >= 1, got {r}")
        return cls(r * r, True)


def step(state: RotorState, mech: Mechanism, x: Point) -> Point:
    """One walk step from x: returns x + rotor(x), advancing x's rotor."""
    return next_exit(state, mech, x).apply(x)


def escape_check_up(state: RotorState, x: Point) -> bool:
    """Certify escape straight north from x under the all-up configuration.

    True iff every site weakly above x in its column is pristine, i.e.
    x_d exceeds the column frontier.  Pristine up rotors above x send the
    particle north through fresh sites forever, so this is exact.
    """
    rule = state.default_rule
    if not (isinstance(rule, AlignedRule) and rule.is_up):
        raise EngineError("escape_check_up requires the all-up default rule")
    return x[-1] > state.frontier(column_of(x))


def walk(
    state: RotorState,
    mech: Mechanism,
    start: Point,
    stop: StopSet,
    oracle=None,
    step_limit: int = DEFAULT_STEP_LIMIT,
    record_path: bool = False,
) -> WalkOutcome:
    """Run one particle until a stop, an escape certificate, or the limit.

    Checks in order at each position: stopping set (arrivals only), then
    the oracle (including at the start site), then the step budget.
    """
    d = state.dimension
    if len(start) != d:
        raise EngineError(f"start point has dimension {len(start)}, state has {d}")
    origin = (0,) * d
    if stop.rsq is not None and norm_sq(start) >= stop.rsq:
        raise EngineError(f"start {start} already outside the stopping ball")
    x = start
    steps = 0
    path = [start] if record_path else None
    while True:
        if steps > 0:
            if stop.at_origin and x == origin:
                return WalkOutcome(OutcomeKind.RETURNED_TO_ORIGIN, steps, x, None, path)
            if stop.rsq is not None and norm_sq(x) >= stop.rsq:
                return WalkOutcome(OutcomeKind.STOPPED_AT_BOUNDARY, steps, x, None, path)
        if oracle is not None and oracle(state, x):
            return WalkOutcome(OutcomeKind.ESCAPED, steps, x, x, path)
        if steps >= step_limit:
            return WalkOutcome(OutcomeKind.STEP_LIMIT_EXCEEDED, steps, x, None, path)
        x = step(state, mech, x)
        steps += 1
        if record_path:
            path.append(x)


@dataclass
class EscapeStats:
    """Aggregate of n sequential walks from the origin, rotors never reset."""

    n: int
    escaped: int
    returned: int
    per_particle: list[WalkOutcome]
    dimension: int
    rule_spec: str
    mech_spec: str
    steps_total: int
    final_state: object = field(repr=False, default=None)

    @property
    def limit_hits(self) -> int:
        return self.n - self.escaped - self.returned

    @property
    def escape_rate(self) -> float:
        return self.escaped / self.n if self.n else 0.0


def _resolve_mech(rule: DefaultRule, mech: Mechanism | None) -> Mechanism:
    if mech is None:
        return Mechanism.default(rule.dimension)
    if mech.dimension != rule.dimension:
        raise EngineError(
            f"mechanism dimension {mech.dimension} != rule dimension {rule.dimension}"
        )
    return mech


def run_escape_experiment(
    default: DefaultRule,
    n: int,
    mech: Mechanism | None = None,
    step_limit: int = DEFAULT_STEP_LIMIT,
    record_paths: bool = False,
    impl: str = "auto",
) -> EscapeStats:
    """Exact escape count I(n) for the all-up configuration.

    n particles walk in turn from the origin until returning or being
    certified escaped by the straight-north oracle; rotors are not reset
    between particles.  Each certified escape lays its infinite trail as
    an escape ray before the next particle starts.
    """
    if not (isinstance(default, AlignedRule) and default.is_up):
        raise EngineError("run_escape_experiment requires the all-up default rule")
    if n < 0:
        raise EngineError(f"particle count must be nonnegative, got {n}")
    mech = _resolve_mech(default, mech)
    up = default.direction
    if mech.direction_at(mech.first_index(up) + 1) == up:
        # A once-exited trail site would still point up, so a particle
        # entering an old escape trail marches north forever with no
        # certificate ever firing.  Cyclic mechanisms always deflect.
        raise EngineError(
            f"mechanism {mech.spec_string()!r} keeps pointing up after the first exit; "
            "exact escape detection is undecidable here, use estimate_I_stabilized"
        )

    if impl != "reference" and not record_paths:
        from . import _fastpath

        fast = _fastpath.escape_experiment(default, mech, n, step_limit)
        if fast is not None:
            return fast
        if impl == "fast":
            raise EngineError(
                f"no fast escape kernel for d={default.dimension}, mech {mech.spec_string()!r}"
            )

    state = RotorState.fresh(default)
    origin = (0,) * default.dimension
    stop = StopSet.origin_only()
    outcomes: list[WalkOutcome] = []
    escaped = returned = steps_total = 0
    for _ in range(n):
        out = walk(
            state,
            mech,
            origin,
            stop,
            oracle=escape_check_up,
            step_limit=step_limit,
            record_path=record_paths,
        )
        if out.kind is OutcomeKind.ESCAPED:
            state.lay_escape_ray(out.escape_site)
            escaped += 1
        elif out.kind is OutcomeKind.RETURNED_TO_ORIGIN:
            returned += 1
        steps_total += out.steps
        outcomes.append(out)
    return EscapeStats(
        n=n,
        escaped=escaped,
        returned=returned,
        per_particle=outcomes,
        dimension=default.dimension,
        rule_spec=default.spec_string(),
        mech_spec=mech.spec_string(),
        steps_total=steps_total,
        final_state=state,
    )


def run_finite_ball(
    default: DefaultRule | RotorState,
    n: int,
    r: int,
    mech: Mechanism | None = None,
    step_limit: int = DEFAULT_STEP_LIMIT,
    impl: str = "auto",
) -> tuple[int, RotorState]:
    """Finite-ball escape count: n walks stopped on the boundary or the origin.

    Returns the number of walks that exit the ball of radius r before
    returning to the origin, together with the mutated state.  Accepts
    either a default rule (fresh state) or an existing state to continue
    mutating.  Every such walk provably halts; the step limit only guards
    against misconfiguration and raises if ever hit.
    """
    exits, state, _ = run_finite_ball_detailed(
        default, n, r, mech=mech, step_limit=step_limit, impl=impl
    )
    return exits, state


def run_finite_ball_detailed(
    default: DefaultRule | RotorState,
    n: int,
    r: int,
    mech: Mechanism | None = None,
    step_limit: int = DEFAULT_STEP_LIMIT,
    impl: str = "auto",
) -> tuple[int, RotorState, int]:
    """run_finite_ball plus the total number of steps taken, for reporting."""
    if r < 1:
        raise EngineError(f"radius must be >= 1, got {r}")
    if n < 0:
        raise EngineError(f"particle count must be nonnegative, got {n}")

    if isinstance(default, RotorState):
        state = default
        rule = state.default_rule
    else:
        rule = default
        state = None
    mech = _resolve_mech(rule, mech)

    if state is None and impl != "reference":
        from . import _fastpath

        fast = _fastpath.finite_ball(rule, mech, n, r, step_limit)
        if fast is not None:
            return fast
        if impl == "fast":
            raise EngineError(
                f"no fast finite-ball kernel for d={rule.dimension}, "
                f"rule {rule.spec_string()!r}, mech {mech.spec_string()!r}"
            )
    if state is None:
        state = RotorState.fresh(rule)

    origin = (0,) * rule.dimension
    stop = StopSet.boundary_and_origin(r)
    exits = 0
    steps_total = 0
    for _ in range(n):
        out = walk(state, mech, origin, stop, step_limit=step_limit)
        steps_total += out.steps
        if out.kind is OutcomeKind.STOPPED_AT_BOUNDARY:
            exits += 1
        elif out.kind is OutcomeKind.STEP_LIMIT_EXCEEDED:
            raise EngineError(
                f"finite-ball walk exceeded {step_limit} steps (r={r}); "
                "this experiment terminates, so the limit indicates a bug"
            )
    return exits, state, steps_total


@dataclass
class StabilizationResult:
    """Finite-ball estimates on a radius schedule, with the settled value."""

    estimate: int
    radii: list[int]
    values: list[int]
    stabilized: bool
    steps_total: int = 0

    def __iter__(self):
        yield self.estimate
        yield list(zip(self.radii, self.values))


def estimate_I_stabilized(
    default: DefaultRule,
    n: int,
    r0: int = 4,
    growth: float = 2.0,
    cap: int = 1024,
    patience: int = 2,
    mech: Mechanism | None = None,
    impl: str = "auto",
) -> StabilizationResult:
    """Escape-count estimate for an arbitrary initial configuration.

    Runs the finite-ball experiment from a fresh state at radii r0,
    r0*growth, ... and stops once the last `patience` values agree (the
    default 2 means one repeat).  The trace is nonincreasing and every
    value is an upper bound for the true escape count, so agreement is
    strong (though heuristic) evidence of convergence.  If the radius cap
    is reached without agreement the result is flagged unstabilized and
    carries the last value, still an upper bound.
    """
    if r0 < 1:
        raise EngineError(f"initial radius must be >= 1, got {r0}")
    if growth <= 1.0:
        raise EngineError(f"growth factor must exceed 1, got {growth}")
    if patience < 1:
        raise EngineError(f"patience must be >= 1, got {patience}")
    mech = _resolve_mech(default, mech)

    radii: list[int] = []
    values: list[int] = []
    steps_total = 0
    r = r0
    while r <= cap:
        value, _, steps = run_finite_ball_detailed(default, n, r, mech=mech, impl=impl)
        steps_total += steps
        radii.append(r)
        values.append(value)
        if len(values) >= patience and len(set(values[-patience:])) == 1:
            return StabilizationResult(value, radii, values, True, steps_total)
        r_next = int(r * growth)
        r = r_next if r_next > r else r + 1
    return StabilizationResult(values[-1], radii, values, False, steps_total)


def forward_path(
    state: RotorState, mech: Mechanism, x: Point, limit: int
) -> tuple[list[Point], bool]:
    """The trajectory the next particle would take, without mutating rotors.

    Follows the frozen rotor field for up to `limit` steps.  Since nothing
    updates, revisiting any point closes a cycle that repeats forever, so
    the path is cut at the first repeat and flagged non-simple.
    """
    if limit < 0:
        raise EngineError(f"limit must be nonnegative, got {limit}")
    path = [x]
    seen = {x}
    for _ in range(limit):
        x = state.rotor(mech, x).apply(x)
        path.append(x)
        if x in seen:
            return path, False
        seen.add(x)
    return path, True
