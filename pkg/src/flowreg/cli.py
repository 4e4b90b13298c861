"""Command-line interface: validate, run, oracle, and regulator subcommands.

Exit codes are the only process-level contract:
  validate: 0 all checks pass, 1 a check failed, 2 parse error
  run:      0 completed, 3 divergence, 1 invalid scenario, 2 parse error
  oracle:   0 gap <= 1e-5, 1 larger gap, 2 unsupported or malformed scenario
  regulator: 0 solved, 1 infeasible, 2 parse error

The default output directory is the FLOWREG_OUT_DIR environment
variable (falling back to the working directory); --out overrides it.
"""

import argparse
import concurrent.futures
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import plant as plant_mod
from . import scenario as scn
from . import sim
from .errors import FlowRegError, RegulatorInfeasibleError, ScenarioError
from .optimizer import kkt_residual, oracle_projected_gradient, solve_static
from .plant import InventoryPlant
from .regulator import rank_feasibility, solve_sylvester

_ORACLE_GAP_TOL = 1e-5


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="flowreg",
        description="Distributed internal-model controllers for flow networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a scenario file")
    p_validate.add_argument("file")

    p_run = sub.add_parser("run", help="simulate a scenario and write CSV + report")
    p_run.add_argument("file", help="scenario file, or a directory with --batch")
    p_run.add_argument("--dt", type=float, default=None)
    p_run.add_argument("--horizon", type=float, default=None)
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--batch", action="store_true",
                       help="run every *.json scenario in the given directory")

    p_oracle = sub.add_parser("oracle", help="compare solve_static with the brute-force oracle")
    p_oracle.add_argument("file")

    p_reg = sub.add_parser("regulator", help="solve the regulator equations for a scenario")
    p_reg.add_argument("file")

    args = parser.parse_args(argv)
    handler = {
        "validate": _cmd_validate,
        "run": _cmd_run,
        "oracle": _cmd_oracle,
        "regulator": _cmd_regulator,
    }[args.command]
    return handler(args)


def _load(path):
    try:
        return scn.load(path)
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        raise SystemExit(2) from err


def _cmd_validate(args):
    scenario = _load(args.file)
    rows = scn.validate(scenario)
    width = max(len(row.name) for row in rows)
    all_passed = True
    for row in rows:
        mark = "PASS" if row.passed else "FAIL"
        suffix = f"  {row.message}" if row.message else ""
        print(f"{row.name:<{width}}  {mark}{suffix}")
        all_passed &= row.passed
    return 0 if all_passed else 1


def _out_dir(args):
    base = args.out if getattr(args, "out", None) else os.environ.get("FLOWREG_OUT_DIR", ".")
    return Path(base)


def _cmd_run(args):
    if args.batch:
        directory = Path(args.file)
        files = sorted(directory.glob("*.json"))
        if not files:
            print(f"error: no scenario files in {directory}", file=sys.stderr)
            return 2
        with concurrent.futures.ThreadPoolExecutor() as pool:
            codes = list(pool.map(lambda f: _run_one(f, args), files))
        return max(codes)
    return _run_one(Path(args.file), args)


def _run_one(path, args):
    scenario = _load(path)
    if args.dt is not None:
        scenario.dt = args.dt
    if args.horizon is not None:
        scenario.horizon = args.horizon
    try:
        built = scn.build(scenario)
    except FlowRegError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1

    traj = sim.run(built.loop, built.w0, built.x0, built.controller_state0,
                   dt=scenario.dt, horizon=scenario.horizon,
                   record_every=scenario.record_every, cost=built.cost)

    out_dir = _out_dir(args)
    csv_path = _resolve(out_dir, scenario.csv_path, path, ".csv")
    report_path = _resolve(out_dir, scenario.report_path, path, ".report.json")
    write_csv(csv_path, traj)
    write_report(report_path, traj)
    status = "diverged" if traj.diverged else "completed"
    print(f"{path.name}: {status}, {traj.sample_count} samples -> {csv_path}")
    return 3 if traj.diverged else 0


def _resolve(out_dir, declared, scenario_path, suffix):
    if declared:
        target = Path(declared)
        if not target.is_absolute():
            target = out_dir / target
    else:
        target = out_dir / (Path(scenario_path).stem + suffix)
    target.parent.mkdir(parents=True, exist_ok=True)
    return target


def write_csv(path, traj):
    """Trajectory CSV with 17-significant-digit values (round-trips exactly)."""
    q = traj.disturbance.shape[1]
    r = traj.plant_state.shape[1]
    d = traj.controller_state.shape[1]
    m = traj.flow.shape[1]
    header = (["t"]
              + [f"w_{i + 1}" for i in range(q)]
              + [f"x_{i + 1}" for i in range(r)]
              + [f"eta_{i + 1}" for i in range(d)]
              + [f"lambda_{i + 1}" for i in range(m)]
              + ["agreement_error", "routing_error", "gamma_dist", "lyapunov"])
    with open(path, "w") as handle:
        handle.write(",".join(header) + "\n")
        for k in range(traj.sample_count):
            row = ([traj.times[k]]
                   + list(traj.disturbance[k])
                   + list(traj.plant_state[k])
                   + list(traj.controller_state[k])
                   + list(traj.flow[k])
                   + [traj.agreement_error[k], traj.routing_error[k],
                      traj.gamma_dist[k], traj.lyapunov[k]])
            handle.write(",".join(f"{value:.17g}" for value in row) + "\n")


def write_report(path, traj):
    violation = sim.dissipation_check(traj)
    report = {
        "samples": int(traj.sample_count),
        "final_time": float(traj.times[-1]),
        "final_agreement_error": float(traj.agreement_error[-1]),
        "final_routing_error": float(traj.routing_error[-1]),
        "final_gamma_dist": float(traj.gamma_dist[-1]),
        "final_lyapunov": float(traj.lyapunov[-1]),
        "max_state_norm": float(traj.max_state_norm),
        "dissipation_max_violation": None if violation is None else float(violation),
        "diverged": bool(traj.diverged),
        "divergence_time": traj.divergence_time,
    }
    with open(path, "w") as handle:
        json.dump(report, handle, indent=2)
        handle.write("\n")


def _cmd_oracle(args):
    scenario = _load(args.file)
    if not isinstance(scenario.plant, InventoryPlant) or scenario.cost is None:
        print("error: the oracle command needs an inventory scenario with a cost section",
              file=sys.stderr)
        return 2
    if scenario.exosystem_w0 is None:
        print("error: the oracle command needs an explicit w0", file=sys.stderr)
        return 2
    supply = scenario.plant.supply_map @ scenario.exosystem_w0

    point = solve_static(scenario.graph, scenario.cost, supply)
    oracle_flow = oracle_projected_gradient(scenario.graph, scenario.cost, supply)
    gap = float(np.abs(point.flow - oracle_flow).max(initial=0.0))
    stationarity, feasibility = kkt_residual(point, scenario.graph, scenario.cost)

    print("solve_static flow:      ", np.array2string(point.flow, precision=10))
    print("projected-gradient flow:", np.array2string(oracle_flow, precision=10))
    print(f"infinity-norm gap:       {gap:.3e}")
    print(f"KKT residuals:           stationarity {stationarity:.3e}, "
          f"feasibility {feasibility:.3e}")
    return 0 if gap <= _ORACLE_GAP_TOL else 1


def _cmd_regulator(args):
    scenario = _load(args.file)
    parts = plant_mod.stacked_matrices(scenario.plant)
    if parts is None:
        print("error: regulator command needs an inventory or linear plant", file=sys.stderr)
        return 2
    A, G, C, P = parts
    try:
        S = scn._internal_matrix(scenario.exosystem)
    except ScenarioError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    p = scenario.plant.output_dim
    feasible, offending = rank_feasibility(A, G, C, S, scenario.graph, p)
    print(f"rank feasibility: {'PASS' if feasible else 'FAIL'}"
          + ("" if feasible else f"  offending eigenvalues: {offending}"))
    try:
        solution = solve_sylvester(A, G, C, P, S, scenario.graph, p)
    except RegulatorInfeasibleError as err:
        print(f"regulator equations infeasible: {err}")
        return 1
    with np.printoptions(precision=10, suppress=True):
        print("Pi =")
        print(solution.state_map)
        print("Gamma =")
        print(solution.input_map)
        print("H =")
        print(solution.flow_map)
    print(f"residuals: sylvester {solution.sylvester_residual:.3e}, "
          f"agreement {solution.agreement_residual:.3e}, "
          f"flow factorization {solution.flow_residual:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
