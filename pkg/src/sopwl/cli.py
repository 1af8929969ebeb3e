"""Command-line entry point: build, solve, export, and validate linearized
DistFlow models.

Subcommands: ``solve``, ``export-lp``, ``validate``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import milp
from .distflow import (
    MODE_PWL,
    MODE_SOPWL,
    BuildOptions,
    DistflowArtifacts,
    build_distflow,
    build_restoration_objective,
)
from .network import NetworkCase, bundled_case_path, load_case
from .solvers import DEFAULT_TIMEOUT_SECONDS, ScipyMilpAdapter, SubprocessAdapter
from .validation import (
    DEFAULT_ZERO_FLOW_FLOOR,
    branch_errors,
    filling_dump,
    radial_sweep,
)

ADAPTER_ENV_VAR = "SOPWL_ADAPTER_CMD"


@dataclass
class RunConfig:
    case: str
    mode: str = MODE_PWL  # pwl | sopwl | both
    num_segments: int = 50
    objective: str = "restoration"
    adapter_cmd: Optional[str] = None
    timeout: float = DEFAULT_TIMEOUT_SECONDS
    out_dir: Path = Path("sopwl_out")
    zero_flow_floor: float = DEFAULT_ZERO_FLOW_FLOOR
    report_format: str = "table"  # table | delimited

    def __post_init__(self) -> None:
        if self.num_segments < 1:
            raise ValueError("segments must be >= 1")
        if self.mode not in (MODE_PWL, MODE_SOPWL, "both"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.report_format not in ("table", "delimited"):
            raise ValueError(f"unknown report format {self.report_format!r}")

    def resolve_case_path(self) -> Path:
        path = Path(self.case)
        if path.exists():
            return path
        try:
            return bundled_case_path(self.case)
        except FileNotFoundError:
            pass
        raise FileNotFoundError(f"case {self.case!r}: no such file or bundled case")

    def make_adapter(self):
        cmd = self.adapter_cmd or os.environ.get(ADAPTER_ENV_VAR)
        if cmd:
            parts = cmd.split(None, 1)
            template = parts[1] if len(parts) > 1 else "{lp} {sol}"
            return SubprocessAdapter(
                command=parts[0], arg_template=template, timeout=self.timeout
            )
        return ScipyMilpAdapter(time_limit=self.timeout)


def _build(case: NetworkCase, config: RunConfig, mode: str):
    options = BuildOptions(
        num_segments=config.num_segments, mode=mode, objective=config.objective
    )
    model = milp.MilpModel(name=f"{case.name}_{mode}")
    artifacts = build_distflow(model, case, options)
    build_restoration_objective(model, artifacts)
    model.freeze()
    return model, artifacts


def _solution_injections(
    artifacts: DistflowArtifacts, solution: milp.Solution
) -> dict[int, tuple[float, float]]:
    """Net per-bus injections implied by a solved model, for the exact sweep."""
    injections: dict[int, tuple[float, float]] = {}
    case = artifacts.case
    for gen in case.generators:
        gp, gq = artifacts.gen_vars[gen.bus]
        p, q = injections.get(gen.bus, (0.0, 0.0))
        injections[gen.bus] = (p + solution.values[gp], q + solution.values[gq])
    for load in case.loads:
        beta = solution.values[artifacts.pickup_vars[load.bus]]
        p, q = injections.get(load.bus, (0.0, 0.0))
        injections[load.bus] = (p - beta * load.p_pu, q - beta * load.q_pu)
    if artifacts.root_injection_vars is not None:
        pr, qr = artifacts.root_injection_vars
        p, q = injections.get(case.root, (0.0, 0.0))
        injections[case.root] = (
            p + solution.values[pr],
            q + solution.values[qr],
        )
    return injections


def _run_one_mode(case: NetworkCase, config: RunConfig, mode: str) -> tuple[int, dict]:
    out = config.out_dir / mode
    out.mkdir(parents=True, exist_ok=True)
    model, artifacts = _build(case, config, mode)
    adapter = config.make_adapter()
    try:
        solution = milp.solve(model, adapter, workdir=out)
    except Exception as exc:
        print(f"[{mode}] solver failure: {exc}", file=sys.stderr)
        return 1, {}
    if solution.status not in ("optimal", "feasible"):
        print(f"[{mode}] solve ended with status {solution.status}", file=sys.stderr)
        return 1, {}

    violations = milp.check_solution(model, solution)
    for tag, gap in violations:
        print(f"[{mode}] constraint {tag} violated by {gap:.3e}", file=sys.stderr)

    report = branch_errors(solution, artifacts, zero_flow_floor=config.zero_flow_floor)
    ext = "csv" if config.report_format == "delimited" else "txt"
    text = (
        report.to_delimited()
        if config.report_format == "delimited"
        else report.to_table()
    )
    (out / f"report.{ext}").write_text(text)
    (out / "fillings.txt").write_text(filling_dump(solution, artifacts))
    meta = {
        "case": case.name,
        "mode": mode,
        "segments": config.num_segments,
        "objective_variant": config.objective,
        "status": solution.status,
        "objective_value": solution.objective_value,
        "solve_seconds": solution.solve_seconds,
        "max_e_p_percent": report.max_e_p,
        "violations": len(violations),
    }
    (out / "run.json").write_text(json.dumps(meta, indent=1) + "\n")
    print(f"[{mode}] status={solution.status} objective={solution.objective_value:.6f}")
    print(text, end="")
    status = 0 if not violations else 1
    return status, {"report": report, "meta": meta}


def cmd_solve(config: RunConfig) -> int:
    case = load_case(config.resolve_case_path())
    modes = [MODE_PWL, MODE_SOPWL] if config.mode == "both" else [config.mode]
    results = {}
    exit_status = 0
    for mode in modes:
        status, res = _run_one_mode(case, config, mode)
        exit_status = max(exit_status, status)
        results[mode] = res
    if config.mode == "both" and all(results.values()):
        sep = "," if config.report_format == "delimited" else "\t"
        lines = [sep.join(["feeder", "E_p_pwl", "E_p_sopwl", "E_q_pwl", "E_q_sopwl"])]
        pwl_rec = {r.branch_key: r for r in results[MODE_PWL]["report"].records}
        for r in results[MODE_SOPWL]["report"].records:
            p = pwl_rec[r.branch_key]

            def fmt(e):
                return "negligible" if e is None else f"{e:.6f}"

            lines.append(
                sep.join([r.branch_key, fmt(p.e_p), fmt(r.e_p), fmt(p.e_q), fmt(r.e_q)])
            )
        ext = "csv" if config.report_format == "delimited" else "txt"
        (config.out_dir / f"comparison.{ext}").write_text("\n".join(lines) + "\n")
    return exit_status


def cmd_export_lp(config: RunConfig) -> int:
    case = load_case(config.resolve_case_path())
    modes = [MODE_PWL, MODE_SOPWL] if config.mode == "both" else [config.mode]
    config.out_dir.mkdir(parents=True, exist_ok=True)
    for mode in modes:
        model, _ = _build(case, config, mode)
        path = config.out_dir / f"{case.name}_{mode}.lp"
        path.write_text(milp.write_lp(model))
        print(path)
    return 0


def cmd_validate(config: RunConfig, solution_path: Path) -> int:
    case = load_case(config.resolve_case_path())
    if config.mode == "both":
        raise ValueError("validate requires a single mode")
    model, artifacts = _build(case, config, config.mode)
    solution = milp.parse_solution(solution_path.read_text(), model)
    if solution.status not in ("optimal", "feasible"):
        print(f"solution status is {solution.status}; nothing to validate")
        return 1

    violations = milp.check_solution(model, solution)
    for tag, gap in violations:
        print(f"VIOLATED {tag} by {gap:.3e}")

    report = branch_errors(solution, artifacts, zero_flow_floor=config.zero_flow_floor)
    print(report.to_table(), end="")

    sweep = radial_sweep(
        case,
        _solution_injections(artifacts, solution),
        v_norm=artifacts.options.v_norm,
    )
    print(f"exact sweep converged in {sweep.iterations} iterations")
    print(
        f"root slack injection: P={sweep.root_injection[0]:.6e} pu, "
        f"Q={sweep.root_injection[1]:.6e} pu"
    )
    dev = max(
        abs(sweep.voltages[b] ** 2 - solution.values[artifacts.voltage_vars[b]])
        for b in sweep.voltages
    )
    print(f"max |V^2 deviation| linearized vs exact: {dev:.6e} pu^2")
    return 0 if not violations else 1


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--case", required=True, help="case file path or bundled case name")
    parser.add_argument("--mode", default="pwl", choices=["pwl", "sopwl", "both"])
    parser.add_argument("--segments", type=int, default=50)
    parser.add_argument(
        "--objective",
        default="restoration",
        choices=["restoration", "restoration_with_loss_penalty"],
    )
    parser.add_argument("--adapter-cmd", default=None,
                        help=f"external solver command (default: ${ADAPTER_ENV_VAR} or built-in)")
    parser.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT_SECONDS)
    parser.add_argument("--out", default="sopwl_out")
    parser.add_argument("--zero-flow-floor", type=float, default=DEFAULT_ZERO_FLOW_FLOOR)
    parser.add_argument("--format", default="table", choices=["table", "delimited"])
    parser.add_argument("--config", default=None, help="JSON config file overriding flags")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = {
        "case": args.case,
        "mode": args.mode,
        "num_segments": args.segments,
        "objective": args.objective,
        "adapter_cmd": args.adapter_cmd,
        "timeout": args.timeout,
        "out_dir": args.out,
        "zero_flow_floor": args.zero_flow_floor,
        "report_format": args.format,
    }
    if args.config:
        overrides = json.loads(Path(args.config).read_text())
        unknown = set(overrides) - set(fields)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        fields.update(overrides)
    fields["out_dir"] = Path(fields["out_dir"])
    return RunConfig(**fields)


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sopwl",
        description="Piecewise-linearized DistFlow models with ordered-filling "
        "(self-optimal) constraints",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="build and solve, then report errors")
    _add_common(p_solve)

    p_export = sub.add_parser("export-lp", help="write the LP file without solving")
    _add_common(p_export)

    p_val = sub.add_parser("validate", help="re-check a solution file against the model")
    _add_common(p_val)
    p_val.add_argument("--solution", required=True, help="solution file to validate")

    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
        if args.command == "solve":
            return cmd_solve(config)
        if args.command == "export-lp":
            return cmd_export_lp(config)
        return cmd_validate(config, Path(args.solution))
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
