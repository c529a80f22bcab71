"""Discrete Green's function of the lattice ball, and the escape probability.

G_r(x, o) is the expected number of visits to the origin by a simple
random walk started at x and killed on leaving B_r.  Three independent
routes to it live here and are cross-checked in tests rather than
merged: an iterative relaxation solver for production tables, a dense
linear solve as a small-radius oracle, and a Monte Carlo estimator.

The no-return probability alpha_d is measured, never hard-coded: walks
are truncated at a finite horizon, so estimates are upper-biased with a
bias that shrinks as the horizon grows.  A precomputed d=3 estimate
ships with the package with its generator parameters recorded.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .engine import EngineError
from .lattice import splitmix64

_GAMMA = 0x9E3779B97F4A7C15
_U64 = (1 << 64) - 1


class GreenError(RuntimeError):
    """Invalid Green-function request or solver non-convergence."""


@dataclass
class GreenTable:
    """Dense G_r(., o) over the grid [-r, r]^d; zero on and outside the ball.

    `residual` is the achieved max |mean-of-neighbors + delta_o - value|,
    the quantity the solver drives below its tolerance.
    """

    d: int
    r: int
    values: np.ndarray
    tol: float
    residual: float
    sweeps: int

    @property
    def off(self) -> int:
        return self.r

    def value(self, p) -> float:
        idx = tuple(c + self.off for c in p)
        if any(i < 0 or i >= s for i, s in zip(idx, self.values.shape)):
            return 0.0
        return float(self.values[idx])

    def origin_value(self) -> float:
        return float(self.values[(self.off,) * self.d])


def _ball_mask(d: int, r: int) -> np.ndarray:
    side = 2 * r + 1
    nsq = np.zeros((side,) * d, dtype=np.int64)
    for ax in np.ogrid[tuple(slice(0, side) for _ in range(d))]:
        nsq = nsq + (ax - r) ** 2
    return nsq < r * r


def _neighbor_mean(g: np.ndarray, d: int) -> np.ndarray:
    """Mean over the 2d neighbors, zero padding outside the grid."""
    acc = np.zeros_like(g)
    for axis in range(d):
        hi = np.roll(g, -1, axis=axis)
        lo = np.roll(g, 1, axis=axis)
        sl_hi = [slice(None)] * d
        sl_hi[axis] = -1
        hi[tuple(sl_hi)] = 0.0
        sl_lo = [slice(None)] * d
        sl_lo[axis] = 0
        lo[tuple(sl_lo)] = 0.0
        acc += hi + lo
    return acc / (2 * d)


def green_exact(
    d: int,
    r: int,
    tol: float | None = None,
    max_sweeps: int = 2_000_000,
    use_cache: bool = True,
) -> GreenTable:
    """Relaxation solve of Delta G = -delta_o on B_r with G = 0 outside.

    Memory is one float array over [-r, r]^d, so the budget grows like
    r^d; intended for r up to a few hundred in d=2 and a few dozen in
    d=3.  Checkerboard-ordered successive over-relaxation; deterministic
    for fixed (d, r, tol).  The default tolerance is 1e-10 on the scale
    of G(o, o).  Tables are cached on disk keyed by (d, r, tol) when a
    cache directory is configured.
    """
    if d < 2:
        raise GreenError(f"dimension must be >= 2, got {d}")
    if r < 1:
        raise GreenError(f"radius must be >= 1, got {r}")
    cached = _cache_load(d, r, tol) if use_cache else None
    if cached is not None:
        return cached

    mask = _ball_mask(d, r)
    side = 2 * r + 1
    delta = np.zeros((side,) * d)
    o_idx = (r,) * d
    delta[o_idx] = 1.0

    parity = np.zeros((side,) * d, dtype=np.int64)
    for ax in np.ogrid[tuple(slice(0, side) for _ in range(d))]:
        parity = parity + (ax - r)
    red = mask & (parity % 2 == 0)
    black = mask & (parity % 2 == 1)

    # over-relaxation factor tuned to the ball diameter; capped away from 2
    omega = min(2.0 / (1.0 + math.sin(math.pi / (2 * r + 1))), 1.97)
    g = np.zeros((side,) * d)
    sweeps = 0
    residual = math.inf
    while sweeps < max_sweeps:
        for color in (red, black):
            target = _neighbor_mean(g, d) + delta
            g[color] += omega * (target[color] - g[color])
        sweeps += 1
        if sweeps % 8 == 0 or sweeps < 8:
            res = _neighbor_mean(g, d) + delta - g
            residual = float(np.abs(res[mask]).max())
            scale = max(float(g[o_idx]), 1.0)
            goal = tol if tol is not None else 1e-10 * scale
            if residual <= goal:
                break
    else:
        raise GreenError(
            f"relaxation did not reach residual {tol} within {max_sweeps} sweeps "
            f"(d={d}, r={r}, residual={residual:.3e})"
        )
    goal = tol if tol is not None else 1e-10 * max(float(g[o_idx]), 1.0)
    table = GreenTable(d=d, r=r, values=g, tol=goal, residual=residual, sweeps=sweeps)
    if use_cache:
        _cache_store(table, tol)
    return table


def green_dense_reference(d: int, r: int) -> GreenTable:
    """Direct linear solve over the ball, as an independent small-r oracle.

    Builds the full |B_r| x |B_r| system, so only sensible for small
    radii; kept free of any code shared with the relaxation solver.
    """
    from .lattice import ball_points, direction_set

    pts = list(ball_points(d, r))
    index = {p: i for i, p in enumerate(pts)}
    m = len(pts)
    a = np.zeros((m, m))
    b = np.zeros(m)
    for p, i in index.items():
        a[i, i] = 1.0
        for dr in direction_set(d):
            q = dr.apply(p)
            j = index.get(q)
            if j is not None:
                a[i, j] -= 1.0 / (2 * d)
    b[index[(0,) * d]] = 1.0
    sol = np.linalg.solve(a, b)
    side = 2 * r + 1
    g = np.zeros((side,) * d)
    for p, i in index.items():
        g[tuple(c + r for c in p)] = sol[i]
    res = _neighbor_mean(g, d)
    res[(r,) * d] += 1.0
    residual = float(np.abs((res - g)[_ball_mask(d, r)]).max())
    return GreenTable(d=d, r=r, values=g, tol=0.0, residual=residual, sweeps=0)


def green_mc(
    d: int, r: int, x, samples: int, seed: int
) -> tuple[float, float]:
    """Monte Carlo estimate of G_r(x, o): mean visits to o before exit.

    Returns (estimate, standard error).  Vectorized over samples with a
    seeded generator, so results are reproducible.
    """
    if samples < 1:
        raise GreenError(f"need at least one sample, got {samples}")
    x = tuple(x)
    if len(x) != d:
        raise GreenError(f"point {x} is not {d}-dimensional")
    if sum(c * c for c in x) >= r * r:
        raise GreenError(f"start {x} is outside the ball of radius {r}")
    rng = np.random.default_rng(seed)
    pos = np.tile(np.array(x, dtype=np.int64), (samples, 1))
    visits = np.zeros(samples, dtype=np.int64)
    alive = np.ones(samples, dtype=bool)
    rsq = r * r
    while alive.any():
        idx = np.flatnonzero(alive)
        at_o = ~pos[idx].any(axis=1)
        visits[idx[at_o]] += 1
        k = rng.integers(0, 2 * d, size=idx.size)
        axis = k >> 1
        step = 1 - 2 * (k & 1)
        pos[idx, axis] += step
        out = (pos[idx] ** 2).sum(axis=1) >= rsq
        alive[idx[out]] = False
    est = float(visits.mean())
    stderr = float(visits.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return est, stderr


def green_asymptotic(d: int, r: int, x, a_d: float | None = None) -> float:
    """Leading-order interior approximation of G_r(x, o), no error term.

    d=2 uses (2/pi)(log r - log |x|); d>=3 uses a_d(|x|^{2-d} - r^{2-d})
    with a measured constant a_d.  The origin is rejected: its d=2 value
    follows (2/pi) log r + O(1), a different formula.
    """
    x = tuple(x)
    nsq = sum(c * c for c in x)
    if nsq == 0:
        raise GreenError("asymptotic form is for x != o; at the origin use the log r form")
    dist = math.sqrt(nsq)
    if d == 2:
        return (2.0 / math.pi) * (math.log(r) - math.log(dist))
    if a_d is None:
        raise GreenError(f"d={d} needs the measured constant a_d")
    return a_d * (dist ** (2 - d) - r ** (2 - d))


@dataclass
class FitResult:
    a_d: float
    rms_residual: float
    points: int


def fit_a_d(d: int, r: int, tol: float | None = None) -> FitResult:
    """Least-squares fit of a_d from relaxation-solver values.

    Fits G(x) ~ a_d (|x|^{2-d} - r^{2-d}) over the mid-range band
    r/4 <= |x| <= r/2, away from both the origin singularity and the
    boundary layer.  Only meaningful above the logarithmic dimension.
    """
    if d < 3:
        raise GreenError("a_d exists for d >= 3; d=2 is the logarithmic regime")
    if r < 8:
        raise GreenError(f"radius {r} leaves no mid-range band to fit")
    table = green_exact(d, r, tol)
    side = 2 * r + 1
    nsq = np.zeros((side,) * d, dtype=np.int64)
    for ax in np.ogrid[tuple(slice(0, side) for _ in range(d))]:
        nsq = nsq + (ax - r) ** 2
    band = (nsq >= (r / 4) ** 2) & (nsq <= (r / 2) ** 2)
    dist = np.sqrt(nsq[band].astype(np.float64))
    phi = dist ** (2 - d) - float(r) ** (2 - d)
    gv = table.values[band]
    denom = float((phi * phi).sum())
    if band.sum() < 10 or denom < 1e-12:
        raise GreenError(f"fit band too small at r={r} (n={int(band.sum())})")
    a_hat = float((gv * phi).sum()) / denom
    rms = float(np.sqrt(np.mean((gv - a_hat * phi) ** 2)))
    return FitResult(a_d=a_hat, rms_residual=rms, points=int(band.sum()))


# ---------------------------------------------------------------------------
# No-return probability


@dataclass
class AlphaEstimate:
    """Fraction of walks with no return to the origin within the horizon.

    Truncation makes the estimate an upper bound on the true no-return
    probability; for d=2 the true value is 0 and the estimate just
    tracks the horizon tail.
    """

    d: int
    samples: int
    horizon: int
    estimate: float
    stderr: float
    seed: int
    no_return: int


def _alpha_counts_python(d: int, samples: int, horizon: int, seed: int) -> int:
    """Counter-stream twin of the jitted sampler, any d >= 2."""
    base = splitmix64(seed & _U64)
    no_return = 0
    nd = 2 * d
    for s in range(samples):
        st = splitmix64(base ^ s)
        pos = [0] * d
        returned = False
        for _ in range(horizon):
            st = (st + _GAMMA) & _U64
            k = splitmix64(st) % nd
            pos[k >> 1] += 1 - 2 * (k & 1)
            if not any(pos):
                returned = True
                break
        if not returned:
            no_return += 1
    return no_return


def alpha_mc(
    d: int,
    samples: int,
    horizon: int,
    seed: int = 0,
    impl: str = "auto",
    checkpoint_path: str | None = None,
    progress: bool = False,
) -> AlphaEstimate:
    """Estimate the no-return probability by horizon-truncated walks.

    Streams are counter-based per sample index, so runs shard and resume
    without changing the result.  horizon=1 gives exactly 1.0: a single
    step cannot revisit the origin.
    """
    if d < 2:
        raise GreenError(f"dimension must be >= 2, got {d}")
    if samples < 1 or horizon < 1:
        raise GreenError("samples and horizon must be positive")
    if impl == "python" or (impl == "auto" and d not in (2, 3)):
        no_return = _alpha_counts_python(d, samples, horizon, seed)
    else:
        from . import _fastpath

        no_return = _fastpath.alpha_counts(
            d,
            samples,
            horizon,
            seed,
            checkpoint_path=checkpoint_path,
            progress=progress,
        )
    p = no_return / samples
    stderr = math.sqrt(p * (1 - p) / samples)
    return AlphaEstimate(
        d=d,
        samples=samples,
        horizon=horizon,
        estimate=p,
        stderr=stderr,
        seed=seed,
        no_return=no_return,
    )


def load_cached_alpha(d: int = 3) -> AlphaEstimate | None:
    """Packaged precomputed estimate, or None when not shipped for d."""
    name = f"alpha_d{d}.json"
    try:
        raw = resources.files("rotorwalk.data").joinpath(name).read_text()
    except (FileNotFoundError, ModuleNotFoundError):
        return None
    rec = json.loads(raw)
    return AlphaEstimate(
        d=rec["d"],
        samples=rec["samples"],
        horizon=rec["horizon"],
        estimate=rec["estimate"],
        stderr=rec["stderr"],
        seed=rec["seed"],
        no_return=rec["no_return"],
    )


# ---------------------------------------------------------------------------
# Table export and cache


def green_to_csv(table: GreenTable) -> str:
    """Rows (coordinates, value) over the ball, sorted, full precision."""
    from .lattice import ball_points

    lines = [",".join(f"x{i+1}" for i in range(table.d)) + ",value"]
    for p in ball_points(table.d, table.r):
        lines.append(",".join(str(c) for c in p) + f",{table.value(p)!r}")
    return "\n".join(lines) + "\n"


def _cache_dir() -> str | None:
    return os.environ.get("ROTORWALK_CACHE") or None


def _cache_key(d: int, r: int, tol: float | None) -> str:
    tag = "default" if tol is None else f"{tol:.3e}"
    return f"green_d{d}_r{r}_tol{tag}.npz"


def _cache_load(d: int, r: int, tol: float | None) -> GreenTable | None:
    root = _cache_dir()
    if root is None:
        return None
    path = os.path.join(root, _cache_key(d, r, tol))
    if not os.path.exists(path):
        return None
    try:
        with np.load(path) as blob:
            meta = blob["meta"]
            values = blob["values"]
        if int(meta[0]) != d or int(meta[1]) != r:
            return None
        return GreenTable(
            d=d,
            r=r,
            values=values,
            tol=float(meta[2]),
            residual=float(meta[3]),
            sweeps=int(meta[4]),
        )
    except (OSError, KeyError, ValueError):
        return None


def _cache_store(table: GreenTable, tol: float | None) -> None:
    root = _cache_dir()
    if root is None:
        return
    os.makedirs(root, exist_ok=True)
    path = os.path.join(root, _cache_key(table.d, table.r, tol))
    tmp = path + ".tmp"
    meta = np.array(
        [table.d, table.r, table.tol, table.residual, table.sweeps], dtype=np.float64
    )
    with open(tmp, "wb") as fh:
        np.savez(fh, meta=meta, values=table.values)
    os.replace(tmp, path)
