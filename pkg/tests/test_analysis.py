"""Odometer, flux, discrete calculus, and schedule-independence tests.

Exact identities are asserted as integer or rational equalities.  The
regression golden for the n=100 column count was frozen from the first
deterministic run and cross-checked against the pure-python engine.
"""

from fractions import Fraction

import numpy as np
import pytest

from rotorwalk.analysis import (
    AnalysisError,
    EdgeField,
    ScalarField,
    ShellProfile,
    abelian_schedule_check,
    check_flux_identity,
    check_inn,
    compute_odometer,
    count_columns,
    divergence,
    dump_odometer_snapshot,
    gradient,
    laplacian,
    load_odometer_snapshot,
    odometer_green_residual,
    odometer_to_csv,
    run_scheduled,
)
from rotorwalk.lattice import (
    Mechanism,
    boundary_points,
    ceil_root,
    rule_from_spec,
    up_rule,
)

ORIGIN2 = (0, 0)


# ---------------------------------------------------------------------------
# Discrete calculus


def test_laplacian_constant_field_is_zero():
    """Constant on a point's whole neighborhood means zero laplacian there."""
    from rotorwalk.lattice import direction_set

    for d in (2, 3):
        g = ScalarField(d)
        center = (0,) * d
        g.set(center, 3)
        for dr in direction_set(d):
            g.set(dr.apply(center), 3)
        assert laplacian(g, center) == 0


def test_laplacian_indicator_at_origin_d2():
    f = ScalarField(2, {ORIGIN2: Fraction(1)})
    assert laplacian(f, ORIGIN2) == -1
    assert laplacian(f, (1, 0)) == Fraction(1, 4)
    assert laplacian(f, (1, 1)) == 0


def test_gradient_is_signed_difference():
    f = ScalarField(2, {ORIGIN2: Fraction(3), (1, 0): Fraction(5)})
    assert gradient(f, (ORIGIN2, (1, 0))) == 2
    assert gradient(f, ((1, 0), ORIGIN2)) == -2
    assert gradient(f, ((4, 4), (5, 4))) == 0


def test_edge_field_antisymmetric_storage():
    ef = EdgeField(2)
    ef.set(ORIGIN2, (1, 0), Fraction(5, 2))
    assert ef.get(ORIGIN2, (1, 0)) == Fraction(5, 2)
    assert ef.get((1, 0), ORIGIN2) == Fraction(-5, 2)
    ef.set((0, 1), ORIGIN2, 3)
    assert ef.get(ORIGIN2, (0, 1)) == -3
    with pytest.raises(AnalysisError):
        ef.get(ORIGIN2, (1, 1))


def test_divergence_of_edge_field():
    ef = EdgeField(2)
    ef.set(ORIGIN2, (1, 0), 1)
    ef.set(ORIGIN2, (0, 1), 1)
    ef.set((-1, 0), ORIGIN2, 1)
    assert divergence(ef, ORIGIN2) == Fraction(1, 4)


# ---------------------------------------------------------------------------
# Odometer hand trace: one particle, d=2, rotors N,E,S,W, aligned default, r=2.
# The particle exits the origin north, exits (0,1) north, and is absorbed
# at (0,2).


@pytest.mark.parametrize("impl", ["reference", "fast"])
def test_single_particle_hand_trace(impl):
    od, fx, state = compute_odometer(
        up_rule(2), 1, 2, mech=Mechanism.clockwise2d(), impl=impl
    )
    assert dict(od.items()) == {ORIGIN2: 1, (0, 1): 1}
    assert dict(od.arrival_items()) == {(0, 2): 1}
    assert fx.edge_value(ORIGIN2, (0, 1)) == 1
    assert fx.edge_value((0, 1), (0, 2)) == 1
    assert fx.edge_value((0, 1), ORIGIN2) == -1
    assert fx.edge_value(ORIGIN2, (1, 0)) == 0
    # worst interior remainder is on the (o, north) edge: 0 - 1 + 4*1 = 4
    assert check_flux_identity(od, fx) == 4
    # both exited sites rotated north -> east
    east = 0
    assert state.modified_rotor_map(Mechanism.clockwise2d()) == {
        ORIGIN2: east,
        (0, 1): east,
    }


def test_r1_counts_flux_and_absorption():
    od, fx, _ = compute_odometer(up_rule(2), 7, 1)
    assert dict(od.items()) == {ORIGIN2: 7}
    assert fx.divergence_times_2d(ORIGIN2) == 7
    assert fx.divergence(ORIGIN2) == Fraction(7, 4)
    assert od.arrival_total() == 7
    assert od.origin_count() == 7
    assert count_columns(od) == 1


@pytest.mark.parametrize(
    "d,rule_spec,n,r",
    [
        (2, "up", 60, 24),
        (2, "random:7", 50, 12),
        (3, "up", 40, 8),
        (3, "random:2", 30, 6),
    ],
)
def test_fast_matches_reference(d, rule_spec, n, r):
    rule = rule_from_spec(rule_spec, d, seed=None)
    od_a, fx_a, st_a = compute_odometer(rule, n, r, impl="reference")
    od_b, fx_b, st_b = compute_odometer(rule, n, r, impl="fast")
    assert np.array_equal(od_a.counts, od_b.counts)
    assert np.array_equal(od_a.arrivals, od_b.arrivals)
    for ka, kb in zip(fx_a.kappas, fx_b.kappas):
        assert np.array_equal(ka, kb)
    mech = Mechanism.default(d)
    assert st_a.modified_rotor_map(mech) == st_b.modified_rotor_map(mech)


@pytest.mark.parametrize(
    "d,rule_spec,n,r",
    [
        (2, "up", 120, 15),
        (2, "random:4", 40, 9),
        (3, "up", 90, 7),
        (3, "random:11", 60, 6),
    ],
)
def test_exact_invariants_every_run(d, rule_spec, n, r):
    """Conservation, absorption, remainder bound, and boundary vanishing."""
    rule = rule_from_spec(rule_spec, d, seed=None)
    od, fx, _ = compute_odometer(rule, n, r)
    nsq = od.norms_sq_grid()
    assert not od.counts[nsq >= r * r].any()
    assert od.origin_count() >= n
    assert od.arrival_total() == n
    for p, _c in od.arrival_items():
        assert sum(c * c for c in p) >= r * r

    div2d = np.zeros_like(od.counts)
    for a, k in enumerate(fx.kappas):
        div2d += k - np.roll(k, 1, axis=a)
    off = od.off
    o_idx = (off,) * d
    assert div2d[o_idx] == n
    interior = (nsq < r * r) & (od.counts > 0)
    interior[o_idx] = False
    assert not div2d[interior].any()
    assert fx.divergence(tuple([0] * d)) == Fraction(n, 2 * d)

    assert check_flux_identity(od, fx) <= 4 * d - 2


def test_odometer_monotone_in_n():
    lo, _, _ = compute_odometer(up_rule(2), 30, 20)
    hi, _, _ = compute_odometer(up_rule(2), 50, 20)
    assert (hi.counts >= lo.counts).all()
    assert hi.origin_count() > lo.origin_count()


def test_odometer_rejects_bad_arguments():
    from rotorwalk.engine import EngineError

    with pytest.raises(EngineError):
        compute_odometer(up_rule(2), 5, 0)
    with pytest.raises(EngineError):
        compute_odometer(up_rule(2), -1, 3)
    with pytest.raises(EngineError):
        compute_odometer(up_rule(2), 5, 3, mech=Mechanism.default(3))


# ---------------------------------------------------------------------------
# Replay identity: N = u(o) walks stopped on boundary-or-origin give back n


@pytest.mark.parametrize(
    "d,rule_spec,n,r",
    [
        (2, "up", 20, 20),
        (2, "up", 50, 8),
        (2, "random:9", 35, 10),
        (3, "random:1", 50, 8),
    ],
)
def test_origin_count_replay(d, rule_spec, n, r):
    rule = rule_from_spec(rule_spec, d, seed=None)
    assert check_inn(rule, n, r) is True


def test_origin_count_replay_r1_trivial():
    assert check_inn(up_rule(2), 17, 1) is True


# ---------------------------------------------------------------------------
# Column counting


def test_column_count_golden_d2_up_n100():
    """Frozen regression values for the deterministic n=100 aligned run."""
    od, _, _ = compute_odometer(up_rule(2), 100, 100)
    assert count_columns(od) == 100
    assert od.origin_count() == 317


def test_column_count_matches_reference_small():
    od_a, _, _ = compute_odometer(up_rule(2), 25, 25, impl="reference")
    od_b, _, _ = compute_odometer(up_rule(2), 25, 25, impl="fast")
    assert count_columns(od_a) == count_columns(od_b)


def test_support_reaches_inner_shell():
    """Counts are positive on the whole boundary of B_{0.1 r}."""
    od, _, _ = compute_odometer(up_rule(2), 100, 100)
    assert all(od[p] > 0 for p in boundary_points(2, 10))
    r3 = ceil_root(200, 2)
    od3, _, _ = compute_odometer(up_rule(3), 200, r3)
    assert all(od3[p] > 0 for p in boundary_points(3, Fraction(3, 2)))
    assert count_columns(od3) >= 0.05 * 200


# ---------------------------------------------------------------------------
# Scheduling independence


def test_round_robin_reproduces_odometer():
    """An interleaved schedule must rebuild the sequential field exactly."""
    od, _, state = compute_odometer(up_rule(2), 4, 3)
    run = run_scheduled(up_rule(2), 4, 3, "round-robin")
    assert run.exit_counts == dict(od.items())
    mech = Mechanism.default(2)
    assert run.rotors == state.modified_rotor_map(mech)
    assert run.stopped == dict(od.arrival_items())


def test_sequential_reproduces_odometer_random_rule():
    rule = rule_from_spec("random:3", 2)
    od, _, state = compute_odometer(rule, 12, 5)
    run = run_scheduled(rule, 12, 5, "sequential")
    assert run.exit_counts == dict(od.items())
    assert run.stopped == dict(od.arrival_items())


@pytest.mark.parametrize("pair", [("sequential", "round-robin"), ("sequential", "random")])
def test_schedules_agree_d2(pair):
    assert abelian_schedule_check(up_rule(2), 10, 6, *pair) is True


def test_random_schedules_agree_across_seeds_d3():
    assert (
        abelian_schedule_check(
            up_rule(3), 8, 4, "random", "random", seed_a=3, seed_b=11
        )
        is True
    )


def test_single_particle_schedules_trivially_agree():
    assert abelian_schedule_check(up_rule(2), 1, 5, "round-robin", "random") is True


def test_unknown_scheduler_rejected():
    with pytest.raises(AnalysisError):
        run_scheduled(up_rule(2), 3, 4, "lifo")


# ---------------------------------------------------------------------------
# Residual profile mechanics (against a table that matches u exactly)


class _FlatTable:
    """Green-table stand-in with values u/n, so every residual is zero."""

    def __init__(self, od):
        self.r = od.r
        self.off = od.r
        side = 2 * od.r + 1
        lo = od.off - self.off
        sl = (slice(lo, lo + side),) * od.dimension
        self.values = od.counts[sl].astype(np.float64) / od.n


def test_residual_profile_zero_against_matching_table():
    od, _, _ = compute_odometer(up_rule(2), 40, 12)
    prof = odometer_green_residual(od, _FlatTable(od))
    assert isinstance(prof, ShellProfile)
    assert prof.fitted_c == 0.0
    assert prof.origin_residual == 0.0
    assert prof.dominated()
    assert prof.max_residual_within(od.r) == 0.0
    # shells cover the absorbing sphere, where both fields vanish
    assert max(s.norm_sq for s in prof.shells) >= od.r * od.r
    boundary_rows = [s for s in prof.shells if s.norm_sq >= od.r * od.r]
    assert boundary_rows and all(s.max_abs_residual == 0.0 for s in boundary_rows)
    for s in prof.shells:
        assert s.rho == od.r + 1 - s.radius


def test_residual_profile_requires_matching_radius():
    od, _, _ = compute_odometer(up_rule(2), 10, 6)
    table = _FlatTable(od)
    table.r = 7
    with pytest.raises(AnalysisError):
        odometer_green_residual(od, table)


# ---------------------------------------------------------------------------
# Dumps


def test_csv_dump_golden():
    od, _, _ = compute_odometer(up_rule(2), 1, 2, mech=Mechanism.clockwise2d())
    assert odometer_to_csv(od) == "x1,x2,count\n0,0,1\n0,1,1\n"


def test_snapshot_roundtrip():
    rule = rule_from_spec("random:6", 2)
    od, fx, _ = compute_odometer(rule, 30, 7)
    blob = dump_odometer_snapshot(od, fx)
    assert blob[:4] == b"ODM1"
    back_od, back_fx = load_odometer_snapshot(blob)
    assert back_od.n == od.n and back_od.r == od.r
    assert dict(back_od.items()) == dict(od.items())
    assert sorted(back_fx.support_edges()) == sorted(fx.support_edges())


def test_snapshot_roundtrip_d3():
    od, fx, _ = compute_odometer(up_rule(3), 9, 3)
    back_od, back_fx = load_odometer_snapshot(dump_odometer_snapshot(od, fx))
    assert dict(back_od.items()) == dict(od.items())
    assert sorted(back_fx.support_edges()) == sorted(fx.support_edges())


def test_snapshot_bad_magic_rejected():
    od, fx, _ = compute_odometer(up_rule(2), 2, 2)
    blob = dump_odometer_snapshot(od, fx)
    with pytest.raises(AnalysisError):
        load_odometer_snapshot(b"XXXX" + blob[4:])
