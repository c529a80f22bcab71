"""Green-table solver, Monte Carlo estimator, and no-return sampling tests.

The iterative solver is checked against an independent dense linear
solve, Monte Carlo sampling, the discrete-calculus operators, and its
own residual guarantee.  Empirical windows (asymptotic constants,
origin offsets) were derived from pilot runs and are deliberately wide.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from rotorwalk.analysis import ScalarField, laplacian
from rotorwalk.green import (
    AlphaEstimate,
    FitResult,
    GreenError,
    alpha_mc,
    fit_a_d,
    green_asymptotic,
    green_dense_reference,
    green_exact,
    green_mc,
    green_to_csv,
    load_cached_alpha,
)

ORIGIN2 = (0, 0)


def test_single_point_ball_is_one_visit():
    table = green_exact(2, 1, use_cache=False)
    assert table.origin_value() == pytest.approx(1.0, abs=1e-12)
    assert table.value((1, 0)) == 0.0
    assert table.value((5, 5)) == 0.0


def test_iterative_matches_dense_oracle_r2():
    table = green_exact(2, 2, tol=1e-14, use_cache=False)
    dense = green_dense_reference(2, 2)
    assert np.abs(table.values - dense.values).max() <= 1e-12


@pytest.mark.parametrize("d,r", [(2, 6), (3, 4)])
def test_iterative_matches_dense_oracle_more(d, r):
    table = green_exact(d, r, tol=1e-13, use_cache=False)
    dense = green_dense_reference(d, r)
    assert np.abs(table.values - dense.values).max() <= 1e-11


def test_origin_log_offset_d2():
    """G(o,o) minus the logarithmic growth stays in a unit-width band."""
    for r in (32, 64):
        table = green_exact(2, r, use_cache=False)
        gap = table.origin_value() - (2 / math.pi) * math.log(r)
        assert 0.5 <= gap <= 1.5


def test_values_vanish_on_and_outside_boundary():
    table = green_exact(2, 5, use_cache=False)
    for p in [(5, 0), (0, -5), (4, 3), (6, 0)]:
        assert table.value(p) == 0.0


def test_octahedral_symmetry():
    table = green_exact(3, 6, use_cache=False)
    v = table.values
    assert np.abs(v - v[::-1, :, :]).max() <= 1e-11
    assert np.abs(v - np.transpose(v, (1, 0, 2))).max() <= 1e-11
    assert np.abs(v - np.transpose(v, (2, 1, 0))[:, :, ::-1]).max() <= 1e-11


def test_harmonicity_via_calculus_operators():
    """The solved table satisfies the defining equation of the calculus
    module within its achieved residual."""
    table = green_exact(2, 8, use_cache=False)
    field = ScalarField(2)
    for x1 in range(-8, 9):
        for x2 in range(-8, 9):
            val = table.value((x1, x2))
            if val:
                field.set((x1, x2), Fraction(val))
    slack = Fraction(11, 10) * Fraction(table.residual)
    assert abs(laplacian(field, ORIGIN2) + 1) <= slack
    for x in [(1, 0), (3, 2), (-4, 1), (0, 6)]:
        assert abs(laplacian(field, x)) <= slack


def test_monotone_in_radius():
    g16 = green_exact(2, 16, use_cache=False)
    g24 = green_exact(2, 24, use_cache=False)
    lo = g16.values
    hi = g24.values[8:-8, 8:-8]
    assert (hi - lo).min() >= -1e-9
    assert g24.origin_value() > g16.origin_value()


def test_solver_rejects_bad_arguments():
    with pytest.raises(GreenError):
        green_exact(1, 4)
    with pytest.raises(GreenError):
        green_exact(2, 0)
    with pytest.raises(GreenError):
        green_exact(2, 16, tol=1e-30, max_sweeps=5)


# ---------------------------------------------------------------------------
# Monte Carlo estimator


def test_mc_single_point_ball_exact():
    est, stderr = green_mc(2, 1, ORIGIN2, 50, seed=1)
    assert est == 1.0
    assert stderr == 0.0


def test_mc_agrees_with_exact_d2():
    table = green_exact(2, 16, use_cache=False)
    est, stderr = green_mc(2, 16, ORIGIN2, 4000, seed=2)
    assert abs(est - table.origin_value()) <= 3 * stderr


def test_mc_agrees_with_exact_d3_off_origin():
    table = green_exact(3, 8, use_cache=False)
    est, stderr = green_mc(3, 8, (2, 0, 0), 20000, seed=3)
    assert abs(est - table.value((2, 0, 0))) <= 3 * stderr


def test_mc_reproducible_and_validated():
    a = green_mc(2, 6, (1, 1), 500, seed=7)
    b = green_mc(2, 6, (1, 1), 500, seed=7)
    assert a == b
    with pytest.raises(GreenError):
        green_mc(2, 4, (4, 0), 10, seed=0)
    with pytest.raises(GreenError):
        green_mc(2, 4, (0, 0, 0), 10, seed=0)
    with pytest.raises(GreenError):
        green_mc(2, 4, (0, 0), 0, seed=0)


# ---------------------------------------------------------------------------
# Asymptotics and the d >= 3 constant


def test_asymptotic_zero_at_boundary_distance_d2():
    assert green_asymptotic(2, 16, (16, 0)) == pytest.approx(0.0, abs=1e-14)


def test_asymptotic_rejects_origin_and_missing_constant():
    with pytest.raises(GreenError):
        green_asymptotic(2, 16, (0, 0))
    with pytest.raises(GreenError):
        green_asymptotic(3, 16, (2, 0, 0))


def test_asymptotic_limit_value_d3():
    assert green_asymptotic(3, 10**9, (1, 0, 0), a_d=0.5) == pytest.approx(0.5)


def test_fitted_constant_stable_across_radii():
    f16 = fit_a_d(3, 16)
    f32 = fit_a_d(3, 32)
    assert isinstance(f16, FitResult)
    assert f16.points > 100
    assert abs(f16.a_d - f32.a_d) / f32.a_d < 0.02


def test_fitted_constant_consistent_with_mc_on_big_ball():
    """Leading-order prediction at |x|=4 against direct sampling."""
    fit = fit_a_d(3, 16)
    r = 48
    est, stderr = green_mc(3, r, (4, 0, 0), 30000, seed=11)
    pred = green_asymptotic(3, r, (4, 0, 0), fit.a_d)
    # the neglected correction is of order |x|^{-2}
    assert abs(est - pred) <= 3 * stderr + 0.1 * pred


def test_asymptotic_error_decays_like_inverse_square_d3():
    """Fit the error constant on axis points, then bound the whole band.

    If the neglected term decayed slower than |x|^{-2}, distant off-axis
    points would overshoot the axis-fitted constant.
    """
    table = green_exact(3, 32, use_cache=False)
    fit = fit_a_d(3, 32)
    k_axis = max(
        abs(table.value((dist, 0, 0)) - green_asymptotic(3, 32, (dist, 0, 0), fit.a_d))
        * dist
        * dist
        for dist in (2, 3, 4, 6, 8, 12, 16)
    )
    side = 65
    nsq = np.zeros((side,) * 3, dtype=np.int64)
    for ax in np.ogrid[0:side, 0:side, 0:side]:
        nsq = nsq + (ax - 32) ** 2
    band = (nsq >= 4) & (nsq <= 256)
    dist = np.sqrt(nsq[band].astype(np.float64))
    asym = fit.a_d * (1.0 / dist - 1.0 / 32.0)
    gaps = np.abs(table.values[band] - asym) * nsq[band]
    assert float(gaps.max()) <= 1.25 * k_axis


def test_fit_rejects_low_dimension_and_tiny_radius():
    with pytest.raises(GreenError):
        fit_a_d(2, 32)
    with pytest.raises(GreenError):
        fit_a_d(3, 4)


# ---------------------------------------------------------------------------
# No-return probability sampling


def test_one_step_cannot_return():
    est = alpha_mc(3, 500, 1, seed=4)
    assert est.estimate == 1.0
    assert est.no_return == 500


def test_nonincreasing_in_horizon():
    h3 = alpha_mc(3, 2000, 10**3, seed=7)
    h5 = alpha_mc(3, 2000, 10**5, seed=7)
    assert h3.estimate >= h5.estimate


def test_truncated_tail_shrinks_d2():
    short = alpha_mc(2, 800, 10**2, seed=5)
    long = alpha_mc(2, 800, 10**4, seed=5)
    assert short.estimate > long.estimate
    assert long.estimate < 0.5


def test_python_twin_matches_kernel_stream():
    a = alpha_mc(3, 200, 50, seed=9, impl="python")
    b = alpha_mc(3, 200, 50, seed=9, impl="fast")
    assert a.no_return == b.no_return
    c = alpha_mc(2, 150, 40, seed=3, impl="python")
    d = alpha_mc(2, 150, 40, seed=3, impl="fast")
    assert c.no_return == d.no_return


def test_alpha_validation():
    with pytest.raises(GreenError):
        alpha_mc(1, 10, 10)
    with pytest.raises(GreenError):
        alpha_mc(3, 0, 10)
    with pytest.raises(GreenError):
        alpha_mc(3, 10, 0)


def test_packaged_estimate_has_canonical_parameters():
    est = load_cached_alpha(3)
    assert est is not None, "packaged d=3 no-return estimate is missing"
    assert isinstance(est, AlphaEstimate)
    assert est.samples == 10**6
    assert est.horizon == 10**6
    assert est.seed == 0
    assert est.no_return == round(est.estimate * est.samples)
    assert 0.6 <= est.estimate <= 0.7
    assert est.stderr < 0.002


def test_no_packaged_estimate_for_other_dimensions():
    assert load_cached_alpha(7) is None


# ---------------------------------------------------------------------------
# Export and cache


def test_csv_export_small():
    table = green_exact(2, 1, use_cache=False)
    text = green_to_csv(table)
    assert text.startswith("x1,x2,value\n")
    assert "0,0,1.0" in text


def test_disk_cache_roundtrip(tmp_path, monkeypatch):
    monkeypatch.setenv("ROTORWALK_CACHE", str(tmp_path))
    first = green_exact(2, 6, tol=1e-11)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    second = green_exact(2, 6, tol=1e-11)
    assert np.array_equal(first.values, second.values)
    assert second.sweeps == first.sweeps
    # different tolerance is a different key
    green_exact(2, 6, tol=1e-9)
    assert len(list(tmp_path.iterdir())) == 2


def test_corrupt_cache_entry_is_recomputed(tmp_path, monkeypatch):
    monkeypatch.setenv("ROTORWALK_CACHE", str(tmp_path))
    table = green_exact(2, 4, tol=1e-11)
    (path,) = tmp_path.iterdir()
    path.write_bytes(b"not an archive")
    again = green_exact(2, 4, tol=1e-11)
    assert np.array_equal(table.values, again.values)
