"""Jitted inner loops for large walk experiments.

Dense-array layout shared by all kernels:
  - a site x is stored at index x + offset per axis (arrays are centered
    boxes); progress arrays are int8 with -1 meaning pristine;
  - direction codes follow the global enumeration +e1=0, -e1=1, +e2=2,
    -e2=3, +e3=4, -e3=5; a mechanism is its code sequence `seq` plus
    `base[k]` = first index of code k in seq (-1 if absent);
  - default rules are kind 0 (aligned, pristine progress = a_base) or
    kind 1 (hashed, pristine progress = base[splitmix-hash(seed, x) % 2d]),
    with the hash identical bit-for-bit to the pure-Python rule;
  - walk status codes: 0 returned to origin, 1 escaped (certified),
    2 stopped at boundary, 3 step limit, 4 box overflow (caller grows
    the arrays and resumes).

Escape kernels serve the all-up configuration only; columns that carried
an escape straight north hold the trail as a per-column ray start height
(sentinel NO_RAY when absent), exactly mirroring the sparse state.
"""

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


STATUS_RETURNED = 0
STATUS_ESCAPED = 1
STATUS_BOUNDARY = 2
STATUS_LIMIT = 3
STATUS_GROW = 4

NO_RAY = np.int64(2**62)
NEG_INF_I = np.int64(-(2**62))

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)


@njit(cache=True, inline="always")
def _sm64(z):
    z = z + _GAMMA
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _pristine_d2(rule_kind, a_base, base, nd, seed, x, y):
    if rule_kind == 0:
        return a_base
    h = _sm64(seed)
    h = _sm64(h ^ np.uint64(x))
    h = _sm64(h ^ np.uint64(y))
    return base[h % nd]


@njit(cache=True, inline="always")
def _pristine_d3(rule_kind, a_base, base, nd, seed, x, y, z):
    if rule_kind == 0:
        return a_base
    h = _sm64(seed)
    h = _sm64(h ^ np.uint64(x))
    h = _sm64(h ^ np.uint64(y))
    h = _sm64(h ^ np.uint64(z))
    return base[h % nd]


# ---------------------------------------------------------------------------
# Escape walks (all-up rule), growable box, resumable on overflow


@njit(cache=True)
def escape_walk_d2(prog, ray, frontier, half, seq, L, up_base, x, y, steps, step_limit):
    side = 2 * half + 1
    while True:
        if steps > 0 and x == 0 and y == 0:
            return STATUS_RETURNED, x, y, steps
        i = x + half
        if ray[i] == NO_RAY and y > frontier[i]:
            return STATUS_ESCAPED, x, y, steps
        if steps >= step_limit:
            return STATUS_LIMIT, x, y, steps
        j = y + half
        p = prog[i, j]
        if p < 0:
            p = up_base
            if ray[i] != NO_RAY and y >= ray[i]:
                p = (p + 1) % L
        k = seq[p]
        xn = x
        yn = y
        if k == 0:
            xn = x + 1
        elif k == 1:
            xn = x - 1
        elif k == 2:
            yn = y + 1
        else:
            yn = y - 1
        ii = xn + half
        jj = yn + half
        if ii < 0 or ii >= side or jj < 0 or jj >= side:
            return STATUS_GROW, x, y, steps
        prog[i, j] = (p + 1) % L
        if ray[i] == NO_RAY and y > frontier[i]:
            frontier[i] = y
        x = xn
        y = yn
        steps += 1


@njit(cache=True)
def escape_walk_d3(prog, ray, frontier, half, seq, L, up_base, x, y, z, steps, step_limit):
    side = 2 * half + 1
    while True:
        if steps > 0 and x == 0 and y == 0 and z == 0:
            return STATUS_RETURNED, x, y, z, steps
        i = x + half
        j = y + half
        if ray[i, j] == NO_RAY and z > frontier[i, j]:
            return STATUS_ESCAPED, x, y, z, steps
        if steps >= step_limit:
            return STATUS_LIMIT, x, y, z, steps
        kk = z + half
        p = prog[i, j, kk]
        if p < 0:
            p = up_base
            if ray[i, j] != NO_RAY and z >= ray[i, j]:
                p = (p + 1) % L
        k = seq[p]
        xn = x
        yn = y
        zn = z
        if k == 0:
            xn = x + 1
        elif k == 1:
            xn = x - 1
        elif k == 2:
            yn = y + 1
        elif k == 3:
            yn = y - 1
        elif k == 4:
            zn = z + 1
        else:
            zn = z - 1
        ii = xn + half
        jj = yn + half
        ll = zn + half
        if ii < 0 or ii >= side or jj < 0 or jj >= side or ll < 0 or ll >= side:
            return STATUS_GROW, x, y, z, steps
        prog[i, j, kk] = (p + 1) % L
        if ray[i, j] == NO_RAY and z > frontier[i, j]:
            frontier[i, j] = z
        x = xn
        y = yn
        z = zn
        steps += 1


# ---------------------------------------------------------------------------
# Finite-ball walks: stop on exiting B_r or on returning to the origin


@njit(cache=True)
def finite_ball_d2(
    prog, off, rsq, seq, base, L, rule_kind, a_base, seed, n, step_limit, statuses, steps_out
):
    nd = np.uint64(base.shape[0])
    for idx in range(n):
        x = 0
        y = 0
        steps = 0
        while True:
            if steps > 0:
                if x == 0 and y == 0:
                    statuses[idx] = STATUS_RETURNED
                    break
                if x * x + y * y >= rsq:
                    statuses[idx] = STATUS_BOUNDARY
                    break
            if steps >= step_limit:
                statuses[idx] = STATUS_LIMIT
                break
            i = x + off
            j = y + off
            p = prog[i, j]
            if p < 0:
                p = _pristine_d2(rule_kind, a_base, base, nd, seed, x, y)
            k = seq[p]
            prog[i, j] = (p + 1) % L
            if k == 0:
                x += 1
            elif k == 1:
                x -= 1
            elif k == 2:
                y += 1
            else:
                y -= 1
            steps += 1
        steps_out[idx] = steps


@njit(cache=True)
def finite_ball_d3(
    prog, off, rsq, seq, base, L, rule_kind, a_base, seed, n, step_limit, statuses, steps_out
):
    nd = np.uint64(base.shape[0])
    for idx in range(n):
        x = 0
        y = 0
        z = 0
        steps = 0
        while True:
            if steps > 0:
                if x == 0 and y == 0 and z == 0:
                    statuses[idx] = STATUS_RETURNED
                    break
                if x * x + y * y + z * z >= rsq:
                    statuses[idx] = STATUS_BOUNDARY
                    break
            if steps >= step_limit:
                statuses[idx] = STATUS_LIMIT
                break
            i = x + off
            j = y + off
            l = z + off
            p = prog[i, j, l]
            if p < 0:
                p = _pristine_d3(rule_kind, a_base, base, nd, seed, x, y, z)
            k = seq[p]
            prog[i, j, l] = (p + 1) % L
            if k == 0:
                x += 1
            elif k == 1:
                x -= 1
            elif k == 2:
                y += 1
            elif k == 3:
                y -= 1
            elif k == 4:
                z += 1
            else:
                z -= 1
            steps += 1
        steps_out[idx] = steps


# ---------------------------------------------------------------------------
# Odometer walks: stop only on exiting B_r; record exits, flux, arrivals


@njit(cache=True)
def odometer_d2(
    prog, counts, kx, ky, arrivals, off, rsq, seq, base, L, rule_kind, a_base, seed, n, step_limit
):
    nd = np.uint64(base.shape[0])
    for idx in range(n):
        x = 0
        y = 0
        steps = 0
        while True:
            if steps > 0 and x * x + y * y >= rsq:
                arrivals[x + off, y + off] += 1
                break
            if steps >= step_limit:
                return 1
            i = x + off
            j = y + off
            p = prog[i, j]
            if p < 0:
                p = _pristine_d2(rule_kind, a_base, base, nd, seed, x, y)
            k = seq[p]
            prog[i, j] = (p + 1) % L
            counts[i, j] += 1
            if k == 0:
                kx[i, j] += 1
                x += 1
            elif k == 1:
                kx[i - 1, j] -= 1
                x -= 1
            elif k == 2:
                ky[i, j] += 1
                y += 1
            else:
                ky[i, j - 1] -= 1
                y -= 1
            steps += 1
    return 0


@njit(cache=True)
def odometer_d3(
    prog,
    counts,
    kx,
    ky,
    kz,
    arrivals,
    off,
    rsq,
    seq,
    base,
    L,
    rule_kind,
    a_base,
    seed,
    n,
    step_limit,
):
    nd = np.uint64(base.shape[0])
    for idx in range(n):
        x = 0
        y = 0
        z = 0
        steps = 0
        while True:
            if steps > 0 and x * x + y * y + z * z >= rsq:
                arrivals[x + off, y + off, z + off] += 1
                break
            if steps >= step_limit:
                return 1
            i = x + off
            j = y + off
            l = z + off
            p = prog[i, j, l]
            if p < 0:
                p = _pristine_d3(rule_kind, a_base, base, nd, seed, x, y, z)
            k = seq[p]
            prog[i, j, l] = (p + 1) % L
            counts[i, j, l] += 1
            if k == 0:
                kx[i, j, l] += 1
                x += 1
            elif k == 1:
                kx[i - 1, j, l] -= 1
                x -= 1
            elif k == 2:
                ky[i, j, l] += 1
                y += 1
            elif k == 3:
                ky[i, j - 1, l] -= 1
                y -= 1
            elif k == 4:
                kz[i, j, l] += 1
                z += 1
            else:
                kz[i, j, l - 1] -= 1
                z -= 1
            steps += 1
    return 0


# ---------------------------------------------------------------------------
# Simple-random-walk no-return sampling (escape probability alpha_d)
#
# Stream for sample s: u_t = splitmix64(base_s + t*GAMMA) with
# base_s = splitmix64(splitmix64(seed) ^ s); a counter-based layout, so any
# sample shard is reproducible in isolation.  Starting from the origin the
# return time is even (bipartite lattice), so the origin test runs every
# other step without changing any outcome.


@njit(cache=True, inline="always")
def _stream_base(seed, sample):
    return _sm64(_sm64(seed) ^ np.uint64(sample))


@njit(cache=True)
def alpha_shard_d3(seed, first_sample, n_samples, horizon):
    no_return = 0
    six = np.uint64(6)
    for s in range(first_sample, first_sample + n_samples):
        st = _stream_base(seed, s)
        x = 0
        y = 0
        z = 0
        returned = False
        t = 0
        while t < horizon:
            st = st + _GAMMA
            k = _sm64(st) % six
            if k == np.uint64(0):
                x += 1
            elif k == np.uint64(1):
                x -= 1
            elif k == np.uint64(2):
                y += 1
            elif k == np.uint64(3):
                y -= 1
            elif k == np.uint64(4):
                z += 1
            else:
                z -= 1
            t += 1
            if t < horizon:
                st = st + _GAMMA
                k = _sm64(st) % six
                if k == np.uint64(0):
                    x += 1
                elif k == np.uint64(1):
                    x -= 1
                elif k == np.uint64(2):
                    y += 1
                elif k == np.uint64(3):
                    y -= 1
                elif k == np.uint64(4):
                    z += 1
                else:
                    z -= 1
                t += 1
                if x == 0 and y == 0 and z == 0:
                    returned = True
                    break
        if not returned:
            no_return += 1
    return no_return


@njit(cache=True)
def alpha_shard_d2(seed, first_sample, n_samples, horizon):
    no_return = 0
    four = np.uint64(4)
    for s in range(first_sample, first_sample + n_samples):
        st = _stream_base(seed, s)
        x = 0
        y = 0
        returned = False
        t = 0
        while t < horizon:
            st = st + _GAMMA
            k = _sm64(st) % four
            if k == np.uint64(0):
                x += 1
            elif k == np.uint64(1):
                x -= 1
            elif k == np.uint64(2):
                y += 1
            else:
                y -= 1
            t += 1
            if t < horizon:
                st = st + _GAMMA
                k = _sm64(st) % four
                if k == np.uint64(0):
                    x += 1
                elif k == np.uint64(1):
                    x -= 1
                elif k == np.uint64(2):
                    y += 1
                else:
                    y -= 1
                t += 1
                if x == 0 and y == 0:
                    returned = True
                    break
        if not returned:
            no_return += 1
    return no_return
