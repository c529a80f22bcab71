"""Walk execution: stopping sets, escape certification, experiment drivers.

Hand-traced expectations below were worked out on paper from the rotor
rules and are frozen; the fast-kernel path must reproduce the reference
implementation exactly, particle by particle.
"""

import pytest

from rotorwalk.engine import (
    EngineError,
    OutcomeKind,
    StopSet,
    escape_check_up,
    estimate_I_stabilized,
    forward_path,
    run_escape_experiment,
    run_finite_ball,
    step,
    walk,
)
from rotorwalk.lattice import (
    ExplicitRule,
    Mechanism,
    RotorState,
    direction_set,
    next_exit,
    parse_direction,
    rule_from_spec,
    up_rule,
)

NESW = Mechanism.clockwise2d()


def fresh(d=2):
    return RotorState.fresh(up_rule(d))


def origin(d=2):
    return (0,) * d


# ---------------------------------------------------------------------------
# Single walks


def test_step_moves_and_advances_rotor():
    st = fresh()
    assert step(st, NESW, (0, 0)) == (0, 1)
    assert st.rotor(NESW, (0, 0)).compass() == "E"


def test_walk_straight_north_to_boundary():
    st = fresh()
    out = walk(st, NESW, (0, 0), StopSet.boundary_and_origin(5), record_path=True)
    assert out.kind is OutcomeKind.STOPPED_AT_BOUNDARY
    assert out.steps == 5
    assert out.end == (0, 5)
    assert out.path == [(0, 0), (0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]


def test_walk_radius_one_stops_in_one_step():
    for rule_spec in ("up", "random:9", "split:+e1,-e1"):
        st = RotorState.fresh(rule_from_spec(rule_spec, 2))
        out = walk(st, NESW, (0, 0), StopSet.boundary_and_origin(1))
        assert out.kind is OutcomeKind.STOPPED_AT_BOUNDARY
        assert out.steps == 1


def test_walk_escape_oracle_fires_at_start():
    st = fresh()
    out = walk(st, NESW, (0, 0), StopSet.origin_only(), oracle=escape_check_up)
    assert out.kind is OutcomeKind.ESCAPED
    assert out.steps == 0
    assert out.escape_site == (0, 0)


def test_walk_step_limit_is_an_outcome():
    st = fresh()
    out = walk(st, NESW, (0, 0), StopSet.origin_only(), step_limit=3)
    assert out.kind is OutcomeKind.STEP_LIMIT_EXCEEDED
    assert out.steps == 3
    assert out.end == (0, 3)


def test_walk_rejects_start_outside_ball():
    st = fresh()
    with pytest.raises(EngineError):
        walk(st, NESW, (9, 0), StopSet.boundary_and_origin(3))


def test_stopset_validation():
    with pytest.raises(EngineError):
        StopSet.boundary_only(0)
    with pytest.raises(EngineError):
        StopSet.boundary_and_origin(-1)


# ---------------------------------------------------------------------------
# Escape certification


def test_escape_check_up_frontier_semantics():
    st = fresh()
    assert escape_check_up(st, (0, 0)) is True  # untouched column
    next_exit(st, NESW, (0, 3))
    assert escape_check_up(st, (0, 2)) is False  # below a modified site
    assert escape_check_up(st, (0, 3)) is False  # frontier itself
    assert escape_check_up(st, (0, 4)) is True
    assert escape_check_up(st, (5, -7)) is True


def test_escape_check_up_rejects_other_rules():
    st = RotorState.fresh(rule_from_spec("random:1", 2))
    with pytest.raises(EngineError):
        escape_check_up(st, (0, 0))
    st2 = RotorState.fresh(rule_from_spec("aligned:-e2", 2))
    with pytest.raises(EngineError):
        escape_check_up(st2, (0, 0))


# ---------------------------------------------------------------------------
# Escape experiment: frozen hand traces


def test_hand_trace_clockwise_mech():
    stats = run_escape_experiment(up_rule(2), 3, mech=NESW, impl="reference")
    kinds = [(o.kind, o.steps) for o in stats.per_particle]
    assert kinds == [
        (OutcomeKind.ESCAPED, 0),
        (OutcomeKind.ESCAPED, 1),
        (OutcomeKind.RETURNED_TO_ORIGIN, 2),
    ]
    assert stats.per_particle[0].escape_site == (0, 0)
    assert stats.per_particle[1].escape_site == (1, 0)
    assert stats.escaped == 2 and stats.returned == 1
    assert stats.final_state.ray_map() == {(0,): 0, (1,): 0}
    # origin exited E then S (progress now W); (0,-1) exited N (progress E)
    w = parse_direction("W", 2).index
    e = parse_direction("E", 2).index
    assert stats.final_state.modified_rotor_map(NESW) == {(0, 0): w, (0, -1): e}


def test_hand_trace_default_mech():
    # default d=2 cycle is +e1, -e1, +e2, -e2
    mech = Mechanism.default(2)
    stats = run_escape_experiment(up_rule(2), 3, mech=mech, impl="reference")
    kinds = [(o.kind, o.steps) for o in stats.per_particle]
    assert kinds == [
        (OutcomeKind.ESCAPED, 0),
        (OutcomeKind.RETURNED_TO_ORIGIN, 2),
        (OutcomeKind.ESCAPED, 1),
    ]
    assert stats.final_state.ray_map() == {(0,): 0, (1,): 0}
    w = parse_direction("-e1", 2).index
    s = parse_direction("-e2", 2).index
    assert stats.final_state.modified_rotor_map(mech) == {(0, 0): w, (0, -1): s}


def test_hand_trace_d3():
    mech = Mechanism.default(3)
    stats = run_escape_experiment(up_rule(3), 2, mech=mech, impl="reference")
    kinds = [(o.kind, o.steps) for o in stats.per_particle]
    assert kinds == [
        (OutcomeKind.ESCAPED, 0),
        (OutcomeKind.RETURNED_TO_ORIGIN, 2),
    ]
    assert stats.final_state.ray_map() == {(0, 0): 0}


def test_escape_stats_bookkeeping():
    stats = run_escape_experiment(up_rule(2), 20, impl="reference")
    assert stats.n == 20
    assert stats.escaped + stats.returned == 20
    assert stats.limit_hits == 0
    assert stats.escape_rate == stats.escaped / 20
    assert stats.steps_total == sum(o.steps for o in stats.per_particle)


def test_escape_requires_up_rule():
    with pytest.raises(EngineError):
        run_escape_experiment(rule_from_spec("random:1", 2), 5)
    with pytest.raises(EngineError):
        run_escape_experiment(rule_from_spec("aligned:-e2", 2), 5)


def test_escape_mechanism_dimension_mismatch():
    with pytest.raises(EngineError):
        run_escape_experiment(up_rule(3), 5, mech=NESW)


def test_escape_d4_reference_runs():
    stats = run_escape_experiment(up_rule(4), 5, impl="reference")
    assert stats.escaped + stats.returned == 5
    assert stats.per_particle[0].kind is OutcomeKind.ESCAPED
    with pytest.raises(EngineError):
        run_escape_experiment(up_rule(4), 5, impl="fast")


def test_escape_rejects_sticky_north_mechanism():
    # a period-5 drift sequence whose trail sites still point north after
    # one exit: a particle entering an old trail would walk forever, so
    # the exact path refuses and the stabilized estimator covers it
    drift = Mechanism.from_spec("N,N,E,S,W", 2)
    with pytest.raises(EngineError):
        run_escape_experiment(up_rule(2), 5, mech=drift)
    res = estimate_I_stabilized(up_rule(2), 12, mech=drift, cap=512)
    assert res.stabilized
    assert 0 <= res.estimate <= 12


@pytest.mark.parametrize(
    "d,mech_spec",
    [(2, None), (2, "N,E,S,W"), (2, "N,E,N,S,W"), (3, None)],
)
def test_escape_fast_matches_reference(d, mech_spec):
    mech = Mechanism.from_spec(mech_spec, d) if mech_spec else Mechanism.default(d)
    ref = run_escape_experiment(up_rule(d), 80, mech=mech, impl="reference")
    fast = run_escape_experiment(up_rule(d), 80, mech=mech, impl="fast")
    assert (ref.escaped, ref.returned) == (fast.escaped, fast.returned)
    for a, b in zip(ref.per_particle, fast.per_particle):
        assert (a.kind, a.steps, a.end, a.escape_site) == (b.kind, b.steps, b.end, b.escape_site)
    assert ref.final_state.modified_rotor_map(mech) == fast.final_state.modified_rotor_map(mech)
    assert ref.final_state.ray_map() == fast.final_state.ray_map()


def test_escape_determinism_and_prefix_consistency():
    runs = [run_escape_experiment(up_rule(2), n, impl="reference") for n in (10, 25, 40)]
    full = runs[-1]
    for stats in runs:
        for a, b in zip(stats.per_particle, full.per_particle):
            assert (a.kind, a.steps) == (b.kind, b.steps)
    # cumulative escape count is nondecreasing in n by prefix consistency
    cum = 0
    rates = []
    for o in full.per_particle:
        cum += o.kind is OutcomeKind.ESCAPED
        rates.append(cum)
    assert rates == sorted(rates)
    assert runs[0].escaped == rates[9] and runs[1].escaped == rates[24]


def test_oracle_soundness_by_replay():
    # every certified site, replayed without the oracle on a copied state,
    # marches strictly north through fresh sites
    state = RotorState.fresh(up_rule(2))
    o = origin(2)
    for _ in range(40):
        out = walk(state, NESW, o, StopSet.origin_only(), oracle=escape_check_up)
        if out.kind is OutcomeKind.ESCAPED:
            ghost = state.copy()
            replay = walk(
                ghost, NESW, out.escape_site, StopSet.origin_only(), step_limit=50, record_path=True
            )
            assert replay.kind is OutcomeKind.STEP_LIMIT_EXCEEDED
            heights = [p[-1] for p in replay.path]
            assert heights == list(range(heights[0], heights[0] + 51))
            assert all(p[0] == out.escape_site[0] for p in replay.path)
            state.lay_escape_ray(out.escape_site)
        else:
            assert out.kind is OutcomeKind.RETURNED_TO_ORIGIN


def test_locality_unvisited_sites_pristine():
    stats = run_escape_experiment(up_rule(2), 25, impl="reference", record_paths=True)
    state = stats.final_state
    visited = set()
    for o in stats.per_particle:
        visited.update(o.path)
    rays = state.ray_map()

    def on_ray(p):
        start = rays.get(p[:-1])
        return start is not None and p[-1] >= start

    xs = [p[0] for p in visited]
    ys = [p[1] for p in visited]
    for x in range(min(xs) - 1, max(xs) + 2):
        for y in range(min(ys) - 1, max(ys) + 2):
            p = (x, y)
            if p not in visited and not on_ray(p):
                assert not state.is_modified(p)
                assert state.rotor(NESW, p).compass() == "N"


# ---------------------------------------------------------------------------
# Finite-ball runs


def test_finite_ball_radius_one_all_exit():
    for d in (2, 3):
        for rule_spec in ("up", "random:7"):
            rule = rule_from_spec(rule_spec, d)
            exits, _ = run_finite_ball(rule, 23, 1, impl="reference")
            assert exits == 23


def test_finite_ball_outcomes_partition():
    st = fresh()
    stop = StopSet.boundary_and_origin(6)
    kinds = [walk(st, NESW, origin(2), stop).kind for _ in range(30)]
    assert all(
        k in (OutcomeKind.RETURNED_TO_ORIGIN, OutcomeKind.STOPPED_AT_BOUNDARY) for k in kinds
    )


def test_finite_ball_monotone_in_radius():
    values = []
    for r in (8, 16, 32, 64):
        exits, _ = run_finite_ball(up_rule(2), 50, r)
        values.append(exits)
    assert values == sorted(values, reverse=True)
    # frozen from the reference run: already settled at r=8
    assert values == [22, 22, 22, 22]


def test_finite_ball_limit_converges_to_oracle_count():
    exact = run_escape_experiment(up_rule(2), 50).escaped
    exits, _ = run_finite_ball(up_rule(2), 50, 64)
    assert exact == 22
    assert exits == exact


def test_finite_ball_fast_matches_reference():
    for d in (2, 3):
        for rule_spec in ("up", "random:1"):
            rule = rule_from_spec(rule_spec, d)
            for r in (3, 7):
                i_ref, st_ref = run_finite_ball(rule, 60, r, impl="reference")
                i_fast, st_fast = run_finite_ball(rule, 60, r, impl="fast")
                mech = Mechanism.default(d)
                assert i_ref == i_fast
                assert st_ref.modified_rotor_map(mech) == st_fast.modified_rotor_map(mech)


def test_finite_ball_continues_existing_state():
    exits1, state = run_finite_ball(up_rule(2), 10, 8, impl="reference")
    exits2, state2 = run_finite_ball(state, 10, 8)
    assert state2 is state
    combined, _ = run_finite_ball(up_rule(2), 20, 8, impl="reference")
    assert exits1 + exits2 == combined


def test_finite_ball_split_rule_reference_fallback():
    rule = rule_from_spec("split:+e1,-e1", 2)
    exits, _ = run_finite_ball(rule, 12, 6)  # impl=auto silently uses reference
    exits_ref, _ = run_finite_ball(rule, 12, 6, impl="reference")
    assert exits == exits_ref
    with pytest.raises(EngineError):
        run_finite_ball(rule, 12, 6, impl="fast")


def test_finite_ball_validation():
    with pytest.raises(EngineError):
        run_finite_ball(up_rule(2), 5, 0)
    with pytest.raises(EngineError):
        run_finite_ball(up_rule(2), -1, 3)


# ---------------------------------------------------------------------------
# Radius stabilization


def test_stabilized_matches_exact_for_up():
    res = estimate_I_stabilized(up_rule(2), 30)
    exact = run_escape_experiment(up_rule(2), 30).escaped
    assert res.stabilized
    assert res.estimate == exact == 14
    assert res.values == [15, 14, 14]
    assert res.radii == [4, 8, 16]


def test_stabilized_trace_nonincreasing():
    for rule_spec in ("up", "random:5", "split:-e2,+e2"):
        res = estimate_I_stabilized(rule_from_spec(rule_spec, 2), 20, cap=256)
        assert res.values == sorted(res.values, reverse=True)


def test_recurrent_style_config_drives_estimate_down():
    # rotors pointing into the x_d = 0 hyperplane from both sides
    res = estimate_I_stabilized(rule_from_spec("split:-e2,+e2", 2), 10, r0=2, cap=256)
    assert res.stabilized
    assert res.values[0] > res.values[-1]
    assert res.estimate == 3


def test_unstabilized_reports_last_upper_bound():
    res = estimate_I_stabilized(rule_from_spec("random:5", 2), 20, cap=128)
    assert not res.stabilized
    assert res.estimate == res.values[-1] == 1
    res2 = estimate_I_stabilized(rule_from_spec("random:5", 2), 20, cap=512)
    assert res2.stabilized
    assert res2.estimate == 0


def test_stabilized_validation():
    with pytest.raises(EngineError):
        estimate_I_stabilized(up_rule(2), 5, r0=0)
    with pytest.raises(EngineError):
        estimate_I_stabilized(up_rule(2), 5, growth=1.0)
    with pytest.raises(EngineError):
        estimate_I_stabilized(up_rule(2), 5, patience=0)


# ---------------------------------------------------------------------------
# Forward paths


def test_forward_path_straight_ray():
    st = fresh()
    path, simple = forward_path(st, NESW, (0, 0), 6)
    assert path == [(0, y) for y in range(7)]
    assert simple
    assert st.progress == {}  # no mutation


def test_forward_path_detects_cycle():
    dirs = {(0, 0): "E", (1, 0): "N", (1, 1): "W", (0, 1): "S"}
    table = {p: parse_direction(c, 2) for p, c in dirs.items()}
    rule = ExplicitRule(2, table, parse_direction("N", 2))
    st = RotorState.fresh(rule)
    path, simple = forward_path(st, NESW, (0, 0), 10)
    assert not simple
    assert len(path) == 5
    assert path[0] == path[-1] == (0, 0)


def test_forward_path_split_half_space():
    st = RotorState.fresh(rule_from_spec("split:+e1,-e1", 2))
    path, simple = forward_path(st, Mechanism.default(2), (0, 3), 5)
    assert path == [(x, 3) for x in range(6)]
    assert simple


def test_forward_path_validation():
    with pytest.raises(EngineError):
        forward_path(fresh(), NESW, (0, 0), -1)
