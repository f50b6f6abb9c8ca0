"""Command line entry point.

Exit codes: 0 when the run converged, 2 when it hit the iteration limit,
1 on any input error (bad flags, unknown scenario, unreadable files).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .coupling import monotonicity_probe
from .grid import Policy
from .io import OutputError, read_policy, write_run_outputs
from .scenarios import SOLVER_KEYS, Scenario, ScenarioError, load_scenario, read_config
from .spi import Algorithm, Schedule, SolverConfig, solve

EXIT_CONVERGED = 0
EXIT_INPUT_ERROR = 1
EXIT_MAX_ITERATIONS = 2
PROBE_TRIALS = 200


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spimfg", description="Solve a discrete mean field game by smoothed policy iteration.")
    p.add_argument("--scenario", required=True, help="preset name or key = value config file")
    p.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=None)
    p.add_argument("--rate", choices=[s.value for s in Schedule], default=None,
                   help="SPI1 learning rate: 2/(n+2) or 1/(n+2)")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--q0", default=None, help="zero | linear:<slope> | file:<path>")
    p.add_argument("--out", default=None, help="directory for CSV/JSON output")
    p.add_argument("--seed", type=int, default=None, help="seed for the monotonicity probe")
    p.add_argument("--compat-discrete-step4", action="store_true", default=None,
                   help="SPI1: average in the previous greedy policy")
    return p


def _solver_defaults(scenario_arg: str) -> dict[str, str]:
    """Solver keys given in a config file; command line flags take precedence."""
    try:
        entries = read_config(scenario_arg)
    except ScenarioError:
        return {}
    return {k: v for k, v in entries.items() if k in SOLVER_KEYS}


def initial_policy(spec: str, scenario: Scenario) -> Policy | None:
    grid = scenario.grid
    kind, _, arg = spec.partition(":")
    if kind == "zero" and not arg:
        return None
    if kind == "linear":
        try:
            slope = float(arg)
        except ValueError:
            raise InputError(f"bad slope in --q0 {spec!r}") from None
        # Q_L = Q_R = slope * x_a on each axis, clipped to the cap.
        per_axis = np.clip(slope * np.stack(scenario.coords), -scenario.cap, scenario.cap)
        left = np.broadcast_to(per_axis, (grid.time_steps, *per_axis.shape)).copy()
        return Policy(left, left.copy())
    if kind == "file" and arg:
        try:
            return read_policy(arg, (grid.time_steps, grid.dim, *grid.shape))
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    raise InputError(f"--q0 must be zero, linear:<slope> or file:<path>, got {spec!r}")


def _config(args, defaults: dict[str, str]) -> SolverConfig:
    def pick(flag, key, convert):
        value = getattr(args, flag)
        if value is None and key in defaults:
            try:
                value = convert(defaults[key])
            except ValueError:
                raise InputError(f"bad value for {key}: {defaults[key]!r}") from None
        return value

    options = {
        "algorithm": pick("algorithm", "algorithm", str),
        "schedule": pick("rate", "rate", str),
        "tol": pick("tol", "tol", float),
        "max_iterations": pick("max_iter", "max-iter", int),
        "compat_step4": pick("compat_discrete_step4", "compat-discrete-step4",
                              lambda s: s.strip().lower() in ("1", "true", "yes")),
    }
    try:
        return SolverConfig(**{k: v for k, v in options.items() if v is not None})
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _summary(record) -> str:
    return (f"n={record.n:4d}  dQ={record.policy_change:.3e}  a_n={record.a_n:.3e}  "
            f"J0={record.energy:.10g}  mass_drift={record.mass_drift:.1e}  "
            f"min_m={record.min_density:.3e}")


def run(args) -> int:
    defaults = _solver_defaults(args.scenario)
    scenario = load_scenario(args.scenario)
    config = _config(args, defaults)
    q0 = initial_policy(args.q0 or defaults.get("q0", "zero"), scenario)
    seed = args.seed if args.seed is not None else int(defaults.get("seed", 0))
    try:
        result = solve(scenario, config, q0, callback=lambda r: print(_summary(r), flush=True))
    except ValueError as exc:
        # Raised by the pre-run checks on q0 (shape, cap).
        raise InputError(str(exc)) from exc
    report = result.report
    cert = report.certification
    print(f"{report.termination} after {report.iterations} iterations; certification: "
          f"policy {cert.policy_consistency:.3e}, fpk {cert.fpk_residual:.3e}, "
          f"hjb {cert.hjb_residual:.3e}")
    out_dir = args.out or defaults.get("out")
    if out_dir:
        probe = monotonicity_probe(scenario.coupling, PROBE_TRIALS, np.random.default_rng(seed))
        extra = {
            "scenario": scenario.name,
            "config": {"algorithm": config.algorithm.value, "rate": config.schedule.value,
                       "tol": config.tol, "max_iter": config.max_iterations,
                       "compat_discrete_step4": config.compat_step4,
                       "q0": args.q0 or defaults.get("q0", "zero"), "seed": seed},
            "parameters": dict(scenario.params),
            "monotonicity_probe_min": probe,
        }
        write_run_outputs(result, out_dir, extra)
    return EXIT_CONVERGED if report.converged else EXIT_MAX_ITERATIONS


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(args)
    except (InputError, ScenarioError, OutputError) as exc:
        print(f"spimfg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
