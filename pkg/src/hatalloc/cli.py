"""Command line interface.

Subcommands:

* ``run``     -- integrate a scenario file or a named preset; writes a
                 trajectory table and a JSON summary.
* ``oracle``  -- print the centralized solution of a scenario as JSON.
* ``check``   -- randomized decoupling-equivalence and gradient checks on an
                 instance.
* ``preset``  -- write the generated scenario file(s) of a named preset.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 infeasible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import experiments
from .dynamics import FlowEngine, gradient_check, initial_state
from .errors import (
    DivergenceError,
    HatallocError,
    InfeasibleProblemError,
    UnsupportedByOracleError,
)
from .model import (
    gradient_consistency_error,
    load_scenario,
    midpoint_convexity_gap,
    save_scenario,
)
from .oracle import solve_centralized
from .reformulation import (
    build_decoupled,
    coupled_residual,
    decoupled_residual,
    find_certificate_z,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_INFEASIBLE = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hatalloc",
        description="Distributed resource allocation for human/autonomous teams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="integrate a scenario file or preset")
    run.add_argument("scenario", help="scenario file path or preset name")
    run.add_argument("--dt", type=float, default=None)
    run.add_argument("--tol", type=float, default=None)
    run.add_argument("--max-time", type=float, default=None)
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument(
        "--reference", choices=["oracle", "none"], default="oracle",
        help="record deviation/saddle metrics against the centralized solution",
    )

    oracle = sub.add_parser("oracle", help="print the centralized solution")
    oracle.add_argument("scenario")

    check = sub.add_parser("check", help="equivalence and gradient checks")
    check.add_argument("scenario")
    check.add_argument("--samples", type=int, default=100)
    check.add_argument("--seed", type=int, default=0)

    preset = sub.add_parser("preset", help="write a preset's scenario file(s)")
    preset.add_argument("name", help="|".join(experiments.PRESETS))
    preset.add_argument("--seed", type=int, default=1)
    preset.add_argument("--out", default=None)
    return parser


def _cmd_run(args) -> int:
    opts = {}
    if args.dt is not None:
        opts["dt"] = args.dt
    if args.tol is not None:
        opts["tolerance"] = args.tol
    if args.max_time is not None:
        opts["max_time"] = args.max_time
    is_preset = args.scenario in experiments.PRESETS
    if not is_preset and not os.path.exists(args.scenario):
        print(f"error: no such scenario file or preset '{args.scenario}'",
              file=sys.stderr)
        return EXIT_USAGE
    result = experiments.run_experiment(
        args.scenario, seed=args.seed, out_dir=args.out, opts=opts or None,
        reference=args.reference == "oracle",
    )
    print(json.dumps(result.summary, indent=2))
    for name, path in result.artifacts.items():
        print(f"{name}: {path}", file=sys.stderr)
    return result.exit_code


def _cmd_oracle(args) -> int:
    scenario = load_scenario(args.scenario)
    x, y, mu, value = solve_centralized(scenario)
    lay = scenario.layout
    payload = {
        "x": {i: x[lay.x_slice(i)].tolist() for i in lay.autonomous_ids},
        "y": {k: y[lay.y_slice(k)].tolist() for k in lay.human_ids},
        "mu": mu.tolist(),
        "value": value,
    }
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def _sample_feasible_pair(scenario, rng):
    """Random (x, y) made coupled-feasible by a least-squares shift."""
    lay = scenario.layout
    con = scenario.constraint
    x = rng.normal(size=lay.x_dim)
    y = rng.normal(size=lay.y_dim)
    resid = coupled_residual(scenario, x, y)
    a_cat = np.hstack([con.a_blocks[i] for i in lay.autonomous_ids]) \
        if lay.autonomous_ids else np.zeros((con.rows, 0))
    margin = rng.uniform(0.0, 1.0, size=con.rows)
    if lay.x_dim:
        x = x - np.linalg.pinv(a_cat) @ (resid + margin)
    return x, y


def _cmd_check(args) -> int:
    scenario = load_scenario(args.scenario)
    rng = np.random.default_rng(args.seed)
    dc = build_decoupled(scenario)
    failures = []

    certified = skipped = 0
    for _ in range(args.samples):
        x, y = _sample_feasible_pair(scenario, rng)
        coupled = coupled_residual(scenario, x, y)
        z = find_certificate_z(dc, x, y, coupled)
        if np.max(coupled) > 0:
            if z is not None:
                failures.append("certificate produced for an infeasible point")
            skipped += 1
            continue
        if z is None:
            failures.append("no certificate for a feasible point")
            continue
        gap = np.max(decoupled_residual(dc, x, y, z))
        if gap > 1e-8:
            failures.append(f"certificate violates the decoupled form by {gap:.3g}")
        certified += 1
    print(f"decoupling: {certified} certified, {skipped} infeasible draws")

    worst_grad = 0.0
    engine = FlowEngine(scenario, dc)
    for _ in range(10):
        state = initial_state(scenario)
        for i in scenario.layout.autonomous_ids:
            state.x[i] = rng.normal(size=scenario.dims[i])
        for a in scenario.layout.node_order:
            state.z[a] = rng.normal(size=dc.rows)
            state.lam[a] = rng.uniform(0.0, 1.0, size=dc.rows)
        worst_grad = max(worst_grad, gradient_check(scenario, dc, state))
    grad_tol = 1e-4 if engine.uses_softplus else 1e-5
    print(f"lagrangian x-gradient vs finite differences: {worst_grad:.3g} "
          f"(tolerance {grad_tol:g})")
    if worst_grad > grad_tol:
        failures.append(f"gradient mismatch {worst_grad:.3g}")

    for agent_id, cost in scenario.costs.items():
        gap = midpoint_convexity_gap(cost, rng, samples=50)
        if gap > 1e-9:
            failures.append(f"cost for '{agent_id}' fails midpoint convexity")
        err = gradient_consistency_error(cost, rng, points=10)
        if err > 1e-5:
            failures.append(f"cost gradient for '{agent_id}' off by {err:.3g}")
    print(f"cost convexity/gradients: {len(scenario.costs)} checked")

    if failures:
        for line in failures:
            print(f"FAIL: {line}", file=sys.stderr)
        return EXIT_NUMERICAL
    print("all checks passed")
    return EXIT_OK


def _cmd_preset(args) -> int:
    if args.name not in experiments.PRESETS:
        print(f"error: unknown preset '{args.name}' "
              f"(available: {', '.join(experiments.PRESETS)})", file=sys.stderr)
        return EXIT_USAGE
    out_dir = args.out or experiments.default_output_dir()
    os.makedirs(out_dir, exist_ok=True)
    base = experiments.team_scenario(args.seed)
    written = []
    if args.name == "fig4_convergence":
        path = os.path.join(out_dir, f"fig4_convergence_seed{args.seed}.json")
        save_scenario(base, path)
        written.append(path)
    else:
        h1, h2 = base.topology.human_ids
        for k1 in ("risk_seeking", "risk_averse"):
            for k2 in ("risk_seeking", "risk_averse"):
                cell = experiments.with_attitudes(
                    base, {h1: (k1, 1.0), h2: (k2, 1.0)}
                )
                path = os.path.join(
                    out_dir, f"fig5_{k1}_{k2}_seed{args.seed}.json"
                )
                save_scenario(cell, path)
                written.append(path)
    for path in written:
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
        if args.command == "check":
            return _cmd_check(args)
        if args.command == "preset":
            return _cmd_preset(args)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleProblemError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (DivergenceError, UnsupportedByOracleError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except HatallocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
