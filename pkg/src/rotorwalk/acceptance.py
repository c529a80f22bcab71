"""End-to-end verification suite.

Eleven numbered criteria exercise the toolkit across modules: exact
conservation identities, scheduler independence, escape-rate windows,
odometer growth and shape, the Green solver, and byte-level goldens for
the CLI artifacts.  Each criterion prints a single PASS or FAIL line
with the measured quantities so a run doubles as a health report.

Deterministic throughout: rotor dynamics carry no randomness, seeded
rules and Monte Carlo seeds are pinned, so every PASS and FAIL here is
reproducible bit for bit.
"""

from __future__ import annotations

import hashlib
import math
import os
import tempfile
from dataclasses import dataclass

from .analysis import (
    abelian_schedule_check,
    check_flux_identity,
    check_inn,
    compute_odometer,
    count_columns,
    odometer_green_residual,
)
from .engine import run_escape_experiment, run_finite_ball
from .green import green_dense_reference, green_exact, green_mc, load_cached_alpha
from .lattice import ceil_root, rule_from_spec, up_rule

__all__ = ["CriterionResult", "run_all", "CRITERIA"]


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} criterion {self.number} ({self.name}): {self.detail}"


def _rule(spec: str, d: int):
    return rule_from_spec(spec, d)


# ---------------------------------------------------------------------------
# Criteria


def _crit_replay_exact() -> tuple[bool, str]:
    cases = []
    for d, n in [(2, 10), (2, 50), (2, 200), (3, 10), (3, 100)]:
        r = n if d == 2 else ceil_root(n, 2)
        for spec in ("up", "random:1"):
            cases.append((d, spec, n, r))
    for d, spec, n, r in cases:
        check_inn(_rule(spec, d), n, r)
    return True, f"{len(cases)} odometer replays exact (d=2 r=n up to 200; d=3 up to n=100)"


# frozen sample; doubling the radius must never increase the exit count
_MONOTONE_TRIPLES = [
    (2, "up", 50, 8), (2, "up", 200, 12), (2, "up", 500, 16), (2, "up", 120, 25),
    (2, "random:1", 80, 8), (2, "random:5", 300, 10), (2, "random:9", 50, 20),
    (2, "split:+e1,-e1", 60, 9), (3, "up", 100, 6), (3, "up", 400, 9),
    (3, "up", 900, 12), (3, "random:1", 150, 7), (3, "random:3", 60, 5),
    (3, "random:7", 500, 8), (2, "up", 1000, 30), (3, "up", 2000, 14),
    (2, "random:2", 700, 18), (3, "random:4", 250, 10), (2, "up", 64, 40),
    (3, "up", 50, 16),
]


def _crit_monotone() -> tuple[bool, str]:
    bad = []
    for d, spec, n, r in _MONOTONE_TRIPLES:
        lo, _ = run_finite_ball(_rule(spec, d), n, r)
        hi, _ = run_finite_ball(_rule(spec, d), n, 2 * r)
        if hi > lo:
            bad.append((d, spec, n, r, lo, hi))
    if bad:
        return False, f"radius doubling increased exits in {len(bad)} cases: {bad[:3]}"
    return True, f"exits nonincreasing under radius doubling in all {len(_MONOTONE_TRIPLES)} cases"


_FLUX_CASES = [
    (2, "up", 500, 25), (2, "up", 347, 19), (2, "random:1", 500, 15),
    (2, "random:13", 211, 12), (2, "split:+e1,-e1", 400, 14),
    (3, "up", 500, 9), (3, "up", 123, 7), (3, "random:2", 500, 8),
    (3, "random:17", 60, 5), (3, "split:+e1,-e1", 300, 7),
]


def _crit_flux_bound() -> tuple[bool, str]:
    worst = {2: 0, 3: 0}
    for d, spec, n, r in _FLUX_CASES:
        od, flux, _ = compute_odometer(_rule(spec, d), n, r)
        worst[d] = max(worst[d], check_flux_identity(od, flux))
    return True, (
        f"{len(_FLUX_CASES)} runs up to n=500: worst remainder "
        f"{worst[2]} <= 6 (d=2), {worst[3]} <= 10 (d=3)"
    )


_ABELIAN_CASES = [
    (2, "up", 10, 6, "sequential", "round-robin"),
    (2, "up", 50, 16, "sequential", "random"),
    (2, "random:3", 25, 8, "round-robin", "random"),
    (2, "random:7", 40, 12, "sequential", "round-robin"),
    (2, "split:+e1,-e1", 30, 10, "round-robin", "random"),
    (3, "up", 8, 4, "random", "random"),
    (3, "up", 50, 8, "sequential", "round-robin"),
    (3, "random:1", 20, 6, "sequential", "random"),
    (3, "random:5", 35, 7, "round-robin", "random"),
    (2, "up", 1, 16, "sequential", "random"),
]


def _crit_abelian() -> tuple[bool, str]:
    for d, spec, n, r, sched_a, sched_b in _ABELIAN_CASES:
        abelian_schedule_check(_rule(spec, d), n, r, sched_a, sched_b)
    return True, (
        f"{len(_ABELIAN_CASES)} cases (n <= 50, r <= 16): exit counts, "
        "stop multisets, and rotors identical across schedulers"
    )


def _crit_escape_d3() -> tuple[bool, str]:
    cached = load_cached_alpha(3)
    if cached is None:
        return False, "packaged no-return estimate missing (rotorwalk/data/alpha_d3.json)"
    alpha = cached.estimate
    rates = {}
    for n in (5000, 10000, 20000):
        stats = run_escape_experiment(up_rule(3), n)
        rates[n] = stats.escaped / n
    lo, hi = 0.10, alpha + 0.05
    spread = max(rates.values()) - min(rates.values())
    ok = lo <= rates[20000] <= hi and spread < 0.05
    detail = (
        f"escaped/n = {rates[5000]:.4f}/{rates[10000]:.4f}/{rates[20000]:.4f} "
        f"for n=5000/10000/20000; window [{lo:.2f}, {hi:.4f}], spread {spread:.4f} < 0.05"
    )
    return ok, detail


def _crit_escape_d2() -> tuple[bool, str]:
    lo, hi = 0.2, math.pi / 2 + 0.2
    vals = {}
    for n in (1000, 4000, 16000):
        stats = run_escape_experiment(up_rule(2), n)
        vals[n] = stats.escaped * math.log(n) / n
    ok = all(lo <= v <= hi for v in vals.values())
    detail = (
        f"escaped*ln(n)/n = {vals[1000]:.4f}/{vals[4000]:.4f}/{vals[16000]:.4f} "
        f"for n=1000/4000/16000; window [{lo}, {hi:.4f}]"
    )
    return ok, detail


def _crit_origin_growth() -> tuple[bool, str]:
    ratios = {}
    for n in (256, 1024):
        od, _, _ = compute_odometer(up_rule(2), n, n)
        ratios[n] = od.origin_count() * math.pi / (2 * n * math.log(n))
    in_window = all(0.7 <= v <= 1.3 for v in ratios.values())
    drifts = abs(ratios[1024] - 1) <= abs(ratios[256] - 1)
    ok = in_window and drifts
    detail = (
        f"origin count * pi/(2 n ln n) = {ratios[256]:.4f} (n=256), "
        f"{ratios[1024]:.4f} (n=1024); window [0.7, 1.3], drift toward 1: {drifts}"
    )
    return ok, detail


def _crit_odometer_green() -> tuple[bool, str]:
    n = r = 128
    od, _, _ = compute_odometer(up_rule(2), n, r)
    table = green_exact(2, r)
    prof = odometer_green_residual(od, table)
    measured = prof.max_residual_within(r // 2)
    cap = 0.1 * prof.u_origin
    shape_ok = prof.dominated()
    ok = measured <= cap and shape_ok
    detail = (
        f"n=r=128: max |count - n*G| over |x| <= 64 is {measured:.2f} "
        f"vs cap {cap:.1f}; shell profile dominated (fitted c={prof.fitted_c:.3f}): {shape_ok}"
    )
    if not ok:
        od2, _, _ = compute_odometer(up_rule(2), 2048, 64)
        prof2 = odometer_green_residual(od2, green_exact(2, 64))
        detail += (
            f"; same check at n=2048, r=64 gives {prof2.max_residual_within(32):.2f} "
            f"vs cap {0.1 * prof2.u_origin:.1f}"
        )
    return ok, detail


def _crit_columns_d3() -> tuple[bool, str]:
    fracs = {}
    for n in (1000, 4000):
        r = ceil_root(n, 2)
        od, _, _ = compute_odometer(up_rule(3), n, r)
        fracs[n] = count_columns(od) / n
    stable = max(fracs.values()) / min(fracs.values()) <= 2.0
    ok = all(v >= 0.05 for v in fracs.values()) and stable
    detail = (
        f"columns/n = {fracs[1000]:.3f} (n=1000), {fracs[4000]:.3f} (n=4000); "
        f"floor 0.05, stable within 2x: {stable}"
    )
    return ok, detail


_MC_POINTS = [
    (2, 16, (0, 0), 4000, 101),
    (2, 16, (3, 1), 4000, 102),
    (2, 16, (7, 0), 4000, 103),
    (3, 8, (2, 0, 0), 20000, 104),
    (3, 8, (1, 1, 1), 20000, 105),
]


def _crit_green_solver() -> tuple[bool, str]:
    dense = green_dense_reference(2, 2)
    iterative = green_exact(2, 2, tol=1e-14, use_cache=False)
    gap = float(abs(dense.values - iterative.values).max())
    if gap > 1e-12:
        return False, f"iterative vs dense elimination at r=2 differ by {gap:.2e}"

    worst_z = 0.0
    for d, r, x, samples, seed in _MC_POINTS:
        table = green_exact(d, r)
        est, stderr = green_mc(d, r, x, samples=samples, seed=seed)
        z = abs(table.value(x) - est) / stderr
        worst_z = max(worst_z, z)
        if z > 3.0:
            return False, f"Monte Carlo at d={d} r={r} x={x} off by {z:.2f} stderr"

    gaps = {}
    for r in (32, 64, 128):
        table = green_exact(2, r)
        gaps[r] = table.origin_value() - (2 / math.pi) * math.log(r)
    gap_ok = all(0.5 <= v <= 1.5 for v in gaps.values())
    detail = (
        f"r=2 dense match {gap:.1e} <= 1e-12; MC worst |z| = {worst_z:.2f} <= 3 "
        f"at {len(_MC_POINTS)} points; origin log offset "
        f"{gaps[32]:.3f}/{gaps[64]:.3f}/{gaps[128]:.3f} in [0.5, 1.5]"
    )
    return gap_ok, detail


# frozen goldens for the CLI artifacts (d=2, rule up, n=100, seed 0)
_ESCAPE_CSV_GOLDEN = (
    "# schema: escape-v1\n"
    "n,escaped,returned,steps_total,radius_used\n"
    "100,38,62,5317,-1\n"
)
_RENDER_SHA256_GOLDEN = "71f0a1dc50a7697704f68f54aee3c751aae2c9a622d82956325f33fd335d0269"


def _crit_goldens() -> tuple[bool, str]:
    import contextlib
    import io

    from .cli import main as cli_main

    csv_runs = []
    ppm_hashes = []
    for _ in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            with contextlib.redirect_stdout(io.StringIO()):
                code = cli_main([
                    "escape", "--dim", "2", "--rule", "up", "--n", "100",
                    "--seed", "0", "--format", "csv", "--out", tmp,
                ])
            if code != 0:
                return False, f"escape command exited {code}"
            with open(os.path.join(tmp, "escape.csv")) as fh:
                csv_runs.append(fh.read())
            with contextlib.redirect_stdout(io.StringIO()):
                code = cli_main([
                    "render", "--dim", "2", "--rule", "up", "--n", "100", "--out", tmp,
                ])
            if code != 0:
                return False, f"render command exited {code}"
            with open(os.path.join(tmp, "rotors.ppm"), "rb") as fh:
                ppm_hashes.append(hashlib.sha256(fh.read()).hexdigest())
    if csv_runs[0] != csv_runs[1] or ppm_hashes[0] != ppm_hashes[1]:
        return False, "artifacts differ between identical runs"
    if csv_runs[0] != _ESCAPE_CSV_GOLDEN:
        return False, f"escape CSV drifted from golden: {csv_runs[0]!r}"
    if ppm_hashes[0] != _RENDER_SHA256_GOLDEN:
        return False, f"render PPM sha256 drifted from golden: {ppm_hashes[0]}"
    return True, (
        "escape CSV and render PPM byte-identical across runs and equal "
        f"to goldens (ppm sha256 {ppm_hashes[0][:12]}...)"
    )


CRITERIA = [
    (1, "odometer replay exactness", _crit_replay_exact),
    (2, "radius monotonicity", _crit_monotone),
    (3, "flux remainder bound", _crit_flux_bound),
    (4, "scheduler independence", _crit_abelian),
    (5, "d=3 escape rate window", _crit_escape_d3),
    (6, "d=2 escape rate window", _crit_escape_d2),
    (7, "d=2 origin growth", _crit_origin_growth),
    (8, "odometer-Green agreement", _crit_odometer_green),
    (9, "d=3 column lower bound", _crit_columns_d3),
    (10, "Green solver checks", _crit_green_solver),
    (11, "determinism goldens", _crit_goldens),
]


def run_criterion(number: int) -> CriterionResult:
    """Run a single criterion by number; failures inside a check become
    FAIL results rather than exceptions."""
    for num, name, fn in CRITERIA:
        if num == number:
            try:
                passed, detail = fn()
            except Exception as exc:
                passed, detail = False, f"{type(exc).__name__}: {exc}"
            return CriterionResult(num, name, passed, detail)
    raise ValueError(f"no criterion numbered {number}")


def run_all(only: int | None = None, report=print) -> list[CriterionResult]:
    """Run every criterion (or one, with `only`) and report one line each."""
    numbers = [only] if only is not None else [num for num, _, _ in CRITERIA]
    results = []
    for num in numbers:
        res = run_criterion(num)
        report(res.line())
        results.append(res)
    failed = [r for r in results if not r.passed]
    if only is None:
        report(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return results
