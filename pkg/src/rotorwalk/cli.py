"""Command-line surface: experiments, reports, rendering, sweeps, acceptance.

Every artifact is deterministic for fixed flags and seeds: CSV files
carry a versioned schema comment, images are raw binary PPM, and sweep
cells derive their seeds from (base seed, cell index) so parallelism
width never changes bytes.

Exit codes: 0 success, 2 invalid arguments or configuration, 3 a
checked identity failed (which means an engine bug, not user error),
4 a stabilization schedule ran out of radius without settling.  Every
failure also emits a one-line JSON error record on stderr.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import struct
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .analysis import (
    AnalysisError,
    check_flux_identity,
    compute_odometer,
    count_columns,
    dump_odometer_snapshot,
    odometer_to_csv,
)
from .engine import (
    EngineError,
    EscapeStats,
    run_escape_experiment,
    run_finite_ball_detailed,
    estimate_I_stabilized,
)
from .green import GreenError, green_exact, green_mc, green_to_csv, load_cached_alpha
from .lattice import (
    LatticeError,
    Mechanism,
    RotorState,
    default_odometer_radius,
    direction_set,
    rule_from_spec,
    up_direction,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_LEMMA = 3
EXIT_UNSTABLE = 4

ESCAPE_SCHEMA = "escape-v1"
ESCAPE_HEADER = "n,escaped,returned,steps_total,radius_used"
SNAPSHOT_MAGIC = b"RTW1"

# palette: rotor direction index -> RGB; unmodified sites are white
PALETTE = {
    0: (0, 170, 0),      # +e1 green
    1: (255, 140, 0),    # -e1 orange
    2: (0, 64, 255),     # +e2 blue
    3: (220, 0, 0),      # -e2 red
    4: (128, 0, 160),    # +e3 violet (slice views)
    5: (0, 150, 150),    # -e3 teal (slice views)
}
UNVISITED = (255, 255, 255)


class CliError(RuntimeError):
    """Bad flags or flag combinations."""


# ---------------------------------------------------------------------------
# Rendering


@dataclass
class RenderSpec:
    """Pixel geometry for rotor-field images.

    bbox is ((x_lo, x_hi), (y_lo, y_hi)) in lattice coordinates; None
    auto-fits a square box centered on the origin.  scale is pixels per
    site.  slice_coord fixes the third coordinate when d >= 3.
    """

    bbox: tuple[tuple[int, int], tuple[int, int]] | None = None
    palette: dict[int, tuple[int, int, int]] = field(default_factory=lambda: dict(PALETTE))
    unvisited: tuple[int, int, int] = UNVISITED
    scale: int = 1
    slice_coord: int = 0


def _render_cells(state, mech: Mechanism) -> dict[tuple, int]:
    """Every site with a non-default rotor, as point -> direction index.

    Escape-ray trails carry the direction the mechanism hands to a site
    after its first exit; they extend infinitely and are clipped to the
    requested box at draw time, so here only explicit entries appear.
    """
    return dict(state.modified_rotor_map(mech))


def render_rotors(state, spec: RenderSpec, mech: Mechanism | None = None) -> bytes:
    """P6 binary PPM of the rotor field, row-major, origin centered.

    Restricted to the plane: d=2 renders directly, d >= 3 renders the
    slice x_3 = spec.slice_coord (further coordinates pinned to 0).
    Only sites whose rotor was ever advanced are colored.
    """
    d = state.dimension
    mech = mech if mech is not None else Mechanism.default(d)
    if spec.scale < 1:
        raise CliError(f"scale must be >= 1, got {spec.scale}")
    cells = _render_cells(state, mech)
    rays = state.ray_map()
    ray_dir = None
    if rays:
        up = up_direction(d)
        ray_dir = mech.direction_at((mech.first_index(up) + 1) % mech.period).index

    if d == 2:
        def cell_at(x: int, y: int):
            got = cells.get((x, y))
            if got is not None:
                return got
            start = rays.get((x,))
            if start is not None and y >= start:
                return ray_dir
            return None

        support = list(cells) + [(c[0], s) for c, s in rays.items()]
    else:
        z = spec.slice_coord
        tail = (0,) * (d - 3)

        def cell_at(x: int, y: int):
            got = cells.get((x, y, z) + tail)
            if got is not None:
                return got
            start = rays.get((x, y) + tail)
            if start is not None and z >= start:
                return ray_dir
            return None

        support = [p[:2] for p in cells if p[2:] == (z,) + tail]
        support += [c[:2] for c, s in rays.items() if c[2:] == tail and s <= z]

    if spec.bbox is None:
        half = max((max(abs(p[0]), abs(p[1])) for p in support), default=0)
        (x_lo, x_hi), (y_lo, y_hi) = (-half, half), (-half, half)
    else:
        (x_lo, x_hi), (y_lo, y_hi) = spec.bbox
        if x_lo > x_hi or y_lo > y_hi:
            raise CliError(f"empty bounding box {spec.bbox}")

    width = (x_hi - x_lo + 1) * spec.scale
    height = (y_hi - y_lo + 1) * spec.scale
    buf = io.BytesIO()
    buf.write(f"P6\n{width} {height}\n255\n".encode())
    for y in range(y_hi, y_lo - 1, -1):
        row = bytearray()
        for x in range(x_lo, x_hi + 1):
            idx = cell_at(x, y)
            rgb = spec.unvisited if idx is None else spec.palette[idx]
            row += bytes(rgb) * spec.scale
        buf.write(bytes(row) * spec.scale)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Rotor-state snapshots


def dump_state_snapshot(state, mech: Mechanism | None = None) -> bytes:
    """Binary rotor snapshot: magic, version, dim, rule spec, then
    little-endian (point, direction index) records.

    Version 1 carries modified rotors only; when the state holds escape
    rays a version 2 snapshot appends (column, trail start) records,
    since rays are infinite and cannot be enumerated site by site.
    """
    d = state.dimension
    mech = mech if mech is not None else Mechanism.default(d)
    rotors = sorted(state.modified_rotor_map(mech).items())
    rays = sorted(state.ray_map().items())
    rule_spec = state.default_rule.spec_string().encode()
    buf = io.BytesIO()
    buf.write(SNAPSHOT_MAGIC)
    buf.write(struct.pack("<BB", 2 if rays else 1, d))
    buf.write(struct.pack("<H", len(rule_spec)))
    buf.write(rule_spec)
    buf.write(struct.pack("<Q", len(rotors)))
    for p, idx in rotors:
        buf.write(struct.pack(f"<{d}qB", *p, idx))
    if rays:
        buf.write(struct.pack("<Q", len(rays)))
        for col, start in rays:
            buf.write(struct.pack(f"<{d - 1}qq", *col, start))
    return buf.getvalue()


def load_state_snapshot(data: bytes):
    """Inverse of dump_state_snapshot; returns (dim, rule_spec, rotors, rays)."""
    buf = io.BytesIO(data)
    if buf.read(4) != SNAPSHOT_MAGIC:
        raise CliError("bad snapshot magic")
    version, d = struct.unpack("<BB", buf.read(2))
    if version not in (1, 2):
        raise CliError(f"unsupported snapshot version {version}")
    (spec_len,) = struct.unpack("<H", buf.read(2))
    rule_spec = buf.read(spec_len).decode()
    (count,) = struct.unpack("<Q", buf.read(8))
    rec = struct.Struct(f"<{d}qB")
    rotors = {}
    for _ in range(count):
        *p, idx = rec.unpack(buf.read(rec.size))
        rotors[tuple(p)] = idx
    rays = {}
    if version == 2:
        (rcount,) = struct.unpack("<Q", buf.read(8))
        rrec = struct.Struct(f"<{d - 1}qq")
        for _ in range(rcount):
            *col, start = rrec.unpack(buf.read(rrec.size))
            rays[tuple(col)] = start
    return d, rule_spec, rotors, rays


def state_from_snapshot(data: bytes):
    """Rebuild a queryable rotor state from a snapshot.

    The result answers rotor queries and renders; it is a display state,
    not a resumable engine state (progress within the mechanism period
    is reconstructed from the stored direction indices).
    """
    d, rule_spec, rotors, rays = load_state_snapshot(data)
    rule = rule_from_spec(rule_spec, d)
    state = RotorState.fresh(rule)
    mech = Mechanism.default(d)
    dirs = direction_set(d)
    for p, idx in rotors.items():
        state.progress[p] = mech.first_index(dirs[idx])
        col, height = p[:-1], p[-1]
        if col not in state.escape_rays:
            cur = state.column_frontier.get(col)
            state.column_frontier[col] = height if cur is None else max(cur, height)
    for col, start in rays.items():
        state.escape_rays[col] = start
        state.column_frontier.pop(col, None)
    return state


# ---------------------------------------------------------------------------
# Reports


def escape_rate_report(results: list[EscapeStats], alpha: float | None = None) -> str:
    """Normalized escape-rate table with theory reference columns.

    Columns: n, escaped, rate I/n, log-scaled rate I ln(n)/n, the
    measured no-return reference for the run's dimension (d >= 3), and
    the universal pi/2 upper reference for d=2.
    """
    lines = ["n,escaped,rate,rate_log_scaled,alpha_ref,half_pi_ref"]
    for st in results:
        if st.dimension >= 3 and alpha is None:
            cached = load_cached_alpha(st.dimension)
            alpha = cached.estimate if cached is not None else None
        rate = st.escaped / st.n if st.n else 0.0
        scaled = rate * math.log(st.n) if st.n > 1 else rate
        alpha_col = f"{alpha:.6f}" if (st.dimension >= 3 and alpha is not None) else ""
        lines.append(
            f"{st.n},{st.escaped},{rate:.6f},{scaled:.6f},{alpha_col},{math.pi / 2:.6f}"
        )
    return "\n".join(lines) + "\n"


def _escape_csv(rows: list[tuple[int, int, int, int, int]]) -> str:
    out = [f"# schema: {ESCAPE_SCHEMA}", ESCAPE_HEADER]
    for row in rows:
        out.append(",".join(str(v) for v in row))
    return "\n".join(out) + "\n"


def _emit(args, payload: dict, csv_text: str, default_name: str) -> None:
    """Write csv or json to --out directory, or stdout without --out."""
    if args.format == "json":
        text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
        name = default_name + ".json"
    else:
        text = csv_text
        name = default_name + ".csv"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, name)
        with open(path, "w") as fh:
            fh.write(text)
        print(path)
    else:
        sys.stdout.write(text)


def _error_record(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": {"code": code, "kind": kind, "message": message}}) + "\n")
    return code


# ---------------------------------------------------------------------------
# Subcommands


def _build_rule(args):
    seed = getattr(args, "seed", None)
    return rule_from_spec(args.rule, args.dim, seed=seed)


def _build_mech(args) -> Mechanism | None:
    if getattr(args, "mech", None):
        return Mechanism.from_spec(args.mech, args.dim)
    return None


def _parse_schedule(text: str) -> tuple[int, float, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise CliError(f"--schedule wants r0,growth,cap, got {text!r}")
    return int(parts[0]), float(parts[1]), int(parts[2])


def cmd_escape(args) -> int:
    rule = _build_rule(args)
    mech = _build_mech(args)
    if args.schedule:
        r0, growth, cap = _parse_schedule(args.schedule)
        res = estimate_I_stabilized(rule, args.n, r0=r0, growth=growth, cap=cap, mech=mech)
        row = (args.n, res.estimate, args.n - res.estimate, res.steps_total, res.radii[-1])
        payload = {
            "schema": ESCAPE_SCHEMA,
            "mode": "stabilized",
            "n": args.n,
            "escaped": res.estimate,
            "returned": args.n - res.estimate,
            "steps_total": res.steps_total,
            "radius_used": res.radii[-1],
            "radii": res.radii,
            "values": res.values,
            "stabilized": res.stabilized,
        }
        _emit(args, payload, _escape_csv([row]), "escape")
        if not res.stabilized:
            return _error_record(
                EXIT_UNSTABLE,
                "non-stabilization",
                f"finite-ball values {res.values} did not settle by radius {res.radii[-1]}",
            )
        return EXIT_OK
    stats = run_escape_experiment(rule, args.n, mech=mech)
    row = (args.n, stats.escaped, stats.returned, stats.steps_total, -1)
    payload = {
        "schema": ESCAPE_SCHEMA,
        "mode": "exact-up",
        "n": args.n,
        "escaped": stats.escaped,
        "returned": stats.returned,
        "steps_total": stats.steps_total,
        "radius_used": -1,
    }
    _emit(args, payload, _escape_csv([row]), "escape")
    return EXIT_OK


def cmd_finite_ball(args) -> int:
    rule = _build_rule(args)
    mech = _build_mech(args)
    if args.r is None:
        raise CliError("finite-ball needs --r")
    exits, _, steps = run_finite_ball_detailed(rule, args.n, args.r, mech=mech)
    row = (args.n, exits, args.n - exits, steps, args.r)
    payload = {
        "schema": ESCAPE_SCHEMA,
        "mode": "finite-ball",
        "n": args.n,
        "escaped": exits,
        "returned": args.n - exits,
        "steps_total": steps,
        "radius_used": args.r,
    }
    _emit(args, payload, _escape_csv([row]), "finite_ball")
    return EXIT_OK


def cmd_odometer(args) -> int:
    rule = _build_rule(args)
    mech = _build_mech(args)
    r = args.r if args.r is not None else default_odometer_radius(args.dim, args.n)
    od, flux, state = compute_odometer(rule, args.n, r, mech=mech)
    max_r = check_flux_identity(od, flux)
    payload = {
        "schema": "odometer-v1",
        "n": args.n,
        "r": r,
        "origin_count": od.origin_count(),
        "columns": count_columns(od),
        "max_abs_remainder": max_r,
        "remainder_bound": 4 * args.dim - 2,
        "arrivals": od.arrival_total(),
    }
    _emit(args, payload, odometer_to_csv(od), "odometer")
    if args.snapshot_out:
        with open(args.snapshot_out, "wb") as fh:
            fh.write(dump_odometer_snapshot(od, flux))
    return EXIT_OK


def cmd_green(args) -> int:
    if args.r is None:
        raise CliError("green needs --r")
    table = green_exact(args.dim, args.r, tol=args.tol)
    payload = {
        "schema": "green-v1",
        "d": table.d,
        "r": table.r,
        "origin": table.origin_value(),
        "residual": table.residual,
        "sweeps": table.sweeps,
    }
    if args.mc:
        x = tuple(int(c) for c in args.mc.split(","))
        est, stderr = green_mc(args.dim, args.r, x, args.samples, args.seed or 0)
        payload["mc"] = {
            "x": list(x),
            "estimate": est,
            "stderr": stderr,
            "exact": table.value(x),
            "samples": args.samples,
        }
    _emit(args, payload, green_to_csv(table), "green")
    return EXIT_OK


def cmd_render(args) -> int:
    mech = _build_mech(args)
    if args.snapshot:
        with open(args.snapshot, "rb") as fh:
            state = state_from_snapshot(fh.read())
    else:
        if args.n is None:
            raise CliError("render needs --n or --snapshot")
        rule = _build_rule(args)
        stats = run_escape_experiment(rule, args.n, mech=mech)
        state = stats.final_state
    spec = RenderSpec(scale=args.scale, slice_coord=args.slice)
    data = render_rotors(state, spec, mech=mech or Mechanism.default(state.dimension))
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "rotors.ppm")
    with open(path, "wb") as fh:
        fh.write(data)
    print(path)
    if args.snapshot_out:
        with open(args.snapshot_out, "wb") as fh:
            fh.write(dump_state_snapshot(state, mech))
    return EXIT_OK


def _sweep_cells(args):
    ns = [int(v) for v in args.n_list.split(",")]
    rules = args.rules.split(",") if args.rules else [args.rule]
    rs = [int(v) for v in args.r_list.split(",")] if args.r_list else [None]
    cells = []
    idx = 0
    for rule_spec in rules:
        for n in ns:
            for r in rs:
                cells.append({"index": idx, "rule": rule_spec, "n": n, "r": r})
                idx += 1
    return cells


def _run_sweep_cell(args, cell) -> dict:
    from .lattice import splitmix64

    seed = splitmix64(splitmix64(args.seed or 0) ^ cell["index"])
    rule = rule_from_spec(cell["rule"], args.dim, seed=seed)
    mech = _build_mech(args)
    if cell["r"] is not None:
        exits, _, steps = run_finite_ball_detailed(rule, cell["n"], cell["r"], mech=mech)
        row = (cell["n"], exits, cell["n"] - exits, steps, cell["r"])
    else:
        stats = run_escape_experiment(rule, cell["n"], mech=mech)
        row = (cell["n"], stats.escaped, stats.returned, stats.steps_total, -1)
    name = f"cell_{cell['index']:04d}.csv"
    path = os.path.join(args.out, name)
    with open(path, "w") as fh:
        fh.write(_escape_csv([row]))
    return {**cell, "seed": seed, "file": name, "escaped": row[1]}


def cmd_sweep(args) -> int:
    if not args.out:
        raise CliError("sweep needs --out DIR")
    os.makedirs(args.out, exist_ok=True)
    cells = _sweep_cells(args)
    width = max(1, args.parallel)
    if width == 1:
        results = [_run_sweep_cell(args, c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=width) as pool:
            results = list(pool.map(lambda c: _run_sweep_cell(args, c), cells))
    manifest = {
        "schema": "sweep-v1",
        "dim": args.dim,
        "base_seed": args.seed or 0,
        "cells": sorted(results, key=lambda c: c["index"]),
    }
    path = os.path.join(args.out, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    print(path)
    return EXIT_OK


def cmd_accept(args) -> int:
    from .acceptance import run_all

    results = run_all(only=args.only)
    failed = [r for r in results if not r.passed]
    return EXIT_LEMMA if failed else EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rotorwalk",
        description="Deterministic rotor-walk experiments on the integer lattice.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, n_required=True):
        p.add_argument("--dim", type=int, default=2, help="lattice dimension (default 2)")
        p.add_argument("--mech", help='rotor mechanism, e.g. "N,E,S,W" (default: axis order)')
        p.add_argument("--rule", default="up", help="default rule: up | aligned:DIR | random:SEED | split:DIR,DIR")
        if n_required:
            p.add_argument("--n", type=int, required=True, help="number of particles")
        else:
            p.add_argument("--n", type=int, help="number of particles")
        p.add_argument("--seed", type=int, help="seed for seeded rules and sweeps")
        p.add_argument("--out", help="output directory (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("escape", help="exact escape experiment (aligned rule), or stabilized estimate")
    common(p)
    p.add_argument("--schedule", help="r0,growth,cap: finite-ball radius schedule for non-aligned rules")
    p.set_defaults(fn=cmd_escape)

    p = sub.add_parser("finite-ball", help="walks stopped on the ball boundary or the origin")
    common(p)
    p.add_argument("--r", type=int, help="ball radius")
    p.set_defaults(fn=cmd_finite_ball)

    p = sub.add_parser("odometer", help="boundary-stopped exit counts, flux, and identities")
    common(p)
    p.add_argument("--r", type=int, help="ball radius (default ceil(n^(1/(d-1))))")
    p.add_argument("--snapshot-out", help="also write a binary odometer snapshot here")
    p.set_defaults(fn=cmd_odometer)

    p = sub.add_parser("green", help="ball Green function table")
    common(p, n_required=False)
    p.add_argument("--r", type=int, help="ball radius")
    p.add_argument("--tol", type=float, help="solver residual tolerance")
    p.add_argument("--mc", help="also Monte Carlo estimate at this point, e.g. 2,0")
    p.add_argument("--samples", type=int, default=20000, help="Monte Carlo samples")
    p.set_defaults(fn=cmd_green)

    p = sub.add_parser("render", help="render the rotor field to a PPM image")
    common(p, n_required=False)
    p.add_argument("--scale", type=int, default=1, help="pixels per lattice site")
    p.add_argument("--slice", type=int, default=0, help="x3 slice for d >= 3")
    p.add_argument("--snapshot", help="render this rotor snapshot instead of running")
    p.add_argument("--snapshot-out", help="also write the rotor snapshot here")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("sweep", help="cartesian experiment sweep with per-cell seeds")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--mech")
    p.add_argument("--rule", default="up")
    p.add_argument("--rules", help="comma-separated rule specs (overrides --rule)")
    p.add_argument("--n", dest="n_list", required=True, help="comma-separated particle counts")
    p.add_argument("--r", dest="r_list", help="comma-separated radii (omit for exact escape)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--parallel", type=int, default=1, help="worker width (does not change artifacts)")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("accept", help="run the acceptance suite")
    p.add_argument("--only", type=int, help="run a single criterion by number")
    p.set_defaults(fn=cmd_accept)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except AnalysisError as exc:
        return _error_record(EXIT_LEMMA, "lemma", str(exc))
    except (CliError, EngineError, GreenError, LatticeError, ValueError) as exc:
        return _error_record(EXIT_VALIDATION, "validation", str(exc))


if __name__ == "__main__":
    sys.exit(main())
