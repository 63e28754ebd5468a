"""Command line entry point ``tmhd``.

Exit codes: 0 on success, 2 when a checked invariant fails, 3 on blow-up.
Configuration errors exit through argparse with code 2 as well.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .diagnostics import apriori_checks, n_sweep
from .galerkin import GalerkinSystem, available_modes, build_basis, integrate_galerkin
from .io import (
    ConfigError,
    Snapshot,
    SnapshotError,
    load_config,
    load_snapshot,
    save_config,
    save_snapshot,
    write_diagnostics_csv,
    write_table_csv,
)
from .mild import MildConfig, PicardDivergenceError, picard_solve
from .operators import (
    a_pairing_h0,
    curl_identity_residual,
    pairing_h0_closed_form,
    pressure_residuals,
    recover_pressures,
)
from .taming import TamingFunction
from .timestepper import BlowUpError, Stepper, run

EXIT_OK = 0
EXIT_ASSERTION = 2
EXIT_BLOWUP = 3

DIVERGENCE_TOL = 1e-10
IDENTITY_TOL = 1e-10


class InvariantFailure(Exception):
    """A checked invariant does not hold; the message names it."""


def _fail(name: str, detail: str) -> None:
    raise InvariantFailure(f"invariant '{name}' violated: {detail}")


def _load(path: str):
    try:
        return load_config(path)
    except (OSError, ConfigError) as exc:
        raise InvariantFailure(f"invariant 'valid_config' violated: {exc}") from exc


# ---------------------------------------------------------------- commands


def cmd_run(args: argparse.Namespace) -> int:
    config = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.toml", config)
    try:
        traj = run(config, keep_states=config.snapshots)
    except BlowUpError as exc:
        if exc.trajectory is not None:
            write_diagnostics_csv(out / "diagnostics.csv", exc.trajectory.records)
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    write_diagnostics_csv(out / "diagnostics.csv", traj.records)
    tf = config.taming()
    threshold = config.threshold
    if config.snapshots:
        for i, (state, pressures) in enumerate(zip(traj.states, traj.pressures)):
            save_snapshot(out / f"snapshot_{i:04d}.tmhd", Snapshot.from_state(state, threshold, pressures))
    final = traj.final
    save_snapshot(out / "final.tmhd", Snapshot.from_state(final, threshold, recover_pressures(final, tf)))

    worst = max(max(r.div_v_max, r.div_B_max) for r in traj.records)
    if worst >= DIVERGENCE_TOL:
        _fail("divergence_free", f"max spectral divergence {worst:.3e} >= {DIVERGENCE_TOL:g}")
    report = apriori_checks(traj)
    if not report.passed:
        _fail("apriori_bounds", f"failed checks {', '.join(report.failures)}")
    print(f"run complete: {len(traj.records)} records, {traj.n_steps} steps, t={final.t:.6g}")
    print(f"max divergence {worst:.3e}; a-priori bounds hold; empirical H1 constant {report.empirical_constant:.6g}")
    return EXIT_OK


def _parse_list(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not values or any(not v > 0 for v in values):
        raise argparse.ArgumentTypeError("thresholds must be positive")
    return values


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        report = n_sweep(config, args.n_list)
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    write_table_csv(out / "sweep.csv", report.columns, report.table())
    for row in report.table():
        print(",".join(format(v, ".6g") if isinstance(v, float) else str(v) for v in row))
    sat = "none" if report.saturation is None else format(report.saturation, "g")
    print(f"saturation N*: {sat}")
    print(f"H2 fit: sup ||y||_H2^2 ~ {report.fit_intercept:.6g} + {report.fit_slope:.6g} (1 + N^2); "
          f"monotone in N: {report.h2_monotone}")
    for r in report.rows:
        if not r.taming_active and not r.pi_identically_zero:
            _fail("magnetic_pressure_vanishes", f"pi nonzero at N={r.threshold:g} without taming")
    return EXIT_OK


def cmd_galerkin(args: argparse.Namespace) -> int:
    config = _load(args.config)
    grid = config.grid
    total = available_modes(grid)
    if not 1 <= args.modes <= total:
        _fail("galerkin_modes", f"requested {args.modes} modes, grid n={grid.n} offers {total}")
    dt = min(1e-3, config.dt) if config.dt is not None else 1e-3
    tf = config.taming()
    forcing = config.forcing_coeffs()
    basis = build_basis(grid, args.modes)
    system = GalerkinSystem(basis, tf, forcing)
    y0 = config.initial_state()
    z0 = system.coefficients(y0)
    try:
        times, traj = integrate_galerkin(system, z0, config.t_end, dt)
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    stepper = Stepper(grid, tf, forcing, "if_rk4")
    state = y0
    rows = []
    for i, t in enumerate(times):
        if i > 0:
            state = state.replace(stepper.advance(state.coeffs, state.t, t - state.t), t)
        rec = system.reconstruct(traj[i]).coeffs
        d = rec - state.coeffs
        ref = grid.inner(state.coeffs, state.coeffs)
        rel = math.sqrt(grid.inner(d, d) / ref) if ref > 0 else math.sqrt(grid.inner(d, d))
        rows.append((float(t), float(np.dot(traj[i], traj[i])), grid.inner(rec, rec), rel))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table_csv(out / "galerkin.csv", ("t", "z_norm_sq", "energy", "relative_difference"), rows)
    print(f"galerkin: {args.modes} of {total} modes, {len(times) - 1} steps, "
          f"relative L2 difference at t={times[-1]:.6g}: {rows[-1][3]:.3e}")
    if args.modes == total and rows[-1][3] >= args.tolerance:
        _fail("galerkin_consistency", f"relative difference {rows[-1][3]:.3e} >= {args.tolerance:g}")
    return EXIT_OK


def cmd_mild(args: argparse.Namespace) -> int:
    config = _load(args.config)
    grid = config.grid
    tf = config.taming()
    forcing = config.forcing_coeffs()
    y0 = config.initial_state()
    try:
        mild = picard_solve(y0, tf, forcing, args.t_end, MildConfig(args.nodes, args.tolerance, args.max_iterations))
    except PicardDivergenceError as exc:
        _fail("picard_convergence", str(exc))
    h = args.t_end / args.nodes
    stepper = Stepper(grid, tf, forcing, config.integrator)
    state = y0
    try:
        for i in range(1, args.nodes + 1):
            state = state.replace(stepper.advance(state.coeffs, state.t, h), i * h)
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    d = mild.coeffs[-1] - state.coeffs
    ref = grid.inner(state.coeffs, state.coeffs)
    rel = math.sqrt(grid.inner(d, d) / ref) if ref > 0 else math.sqrt(grid.inner(d, d))
    print(f"picard iterations: {mild.iterations}; increments: "
          + ", ".join(f"{x:.2e}" for x in mild.increments))
    print(f"relative L2 difference to the timestepper at t={args.t_end:g}: {rel:.3e}")
    if rel >= args.agreement:
        _fail("mild_agreement", f"relative difference {rel:.3e} >= {args.agreement:g}")
    return EXIT_OK


def cmd_diagnose(args: argparse.Namespace) -> int:
    try:
        snap = load_snapshot(args.snapshot)
    except (OSError, SnapshotError) as exc:
        _fail("valid_snapshot", str(exc))
    grid = snap.grid
    state = snap.state()
    tf = TamingFunction(snap.threshold)
    scale_v = max(1.0, grid.lp_norm(snap.fields[:3], math.inf))
    scale_b = max(1.0, grid.lp_norm(snap.fields[3:], math.inf))
    div_v, div_b = state.divergence_max()
    print(f"max divergence: v {div_v:.3e}, B {div_b:.3e}")
    if div_v >= DIVERGENCE_TOL * scale_v:
        _fail("divergence_free_v", f"max spectral divergence of v is {div_v:.3e}")
    if div_b >= DIVERGENCE_TOL * scale_b:
        _fail("divergence_free_B", f"max spectral divergence of B is {div_b:.3e}")
    curl = curl_identity_residual(grid, state.v, state.b)
    print(f"curl identity relative residual: {curl:.3e}")
    if curl >= IDENTITY_TOL:
        _fail("curl_identity", f"relative residual {curl:.3e}")
    lhs, rhs = a_pairing_h0(state, tf), pairing_h0_closed_form(state, tf)
    rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
    print(f"energy pairing: assembled {lhs:.17g}, closed form {rhs:.17g}, relative {rel:.3e}")
    if rel >= IDENTITY_TOL and abs(lhs - rhs) > 1e-300:
        _fail("energy_pairing", f"relative mismatch {rel:.3e}")
    pressures = recover_pressures(state, tf)
    res = pressure_residuals(state, tf, pressures)
    print("pressure residuals: " + ", ".join(f"{k} {v:.3e}" for k, v in res.items()))
    scale = max(1.0, float(np.max(np.abs(grid.to_physical(grid.laplacian(pressures.p))))))
    if max(res.values()) >= IDENTITY_TOL * scale:
        _fail("pressure_poisson", f"residuals {res}")
    if snap.p is not None:
        dp = np.max(np.abs(snap.p - grid.to_physical(pressures.p)))
        dpi = np.max(np.abs(snap.pi - grid.to_physical(pressures.pi)))
        print(f"stored pressures vs recomputed: p {dp:.3e}, pi {dpi:.3e}")
    print("all identities hold")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tmhd", description="Tamed MHD solver and verification harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate a configuration and write diagnostics and snapshots")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="tmhd_out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-n", help="repeat a run over taming thresholds")
    p.add_argument("--config", required=True)
    p.add_argument("--n-list", type=_parse_list, default=[1.0, 2.0, 4.0, 8.0, 16.0])
    p.add_argument("--out", default="tmhd_out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("galerkin", help="Galerkin trajectory and comparison with the spectral solver")
    p.add_argument("--config", required=True)
    p.add_argument("--modes", type=int, required=True)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--out", default="tmhd_out")
    p.set_defaults(func=cmd_galerkin)

    p = sub.add_parser("mild-check", help="Picard solution of the integral equation vs the timestepper")
    p.add_argument("--config", required=True)
    p.add_argument("--t-end", type=float, default=0.05)
    p.add_argument("--nodes", type=int, default=64)
    p.add_argument("--tolerance", type=float, default=1e-10)
    p.add_argument("--max-iterations", type=int, default=20)
    p.add_argument("--agreement", type=float, default=1e-3)
    p.set_defaults(func=cmd_mild)

    p = sub.add_parser("diagnose", help="identity checks on a stored snapshot")
    p.add_argument("--snapshot", required=True)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantFailure as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_ASSERTION
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    raise SystemExit(main())
