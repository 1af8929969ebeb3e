"""Solver backends: an in-process HiGHS adapter (via scipy) and a generic
subprocess adapter for any external MILP solver speaking LP files.

Both produce the same textual solution format consumed by
:func:`sopwl.milp.parse_solution`:

    optimal|feasible|infeasible|unbounded|error
    obj <value>
    <name> <value>
    ...
"""

from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.optimize as sopt
import scipy.sparse as sp

from .milp import BINARY, MilpModel

__all__ = ["ScipyMilpAdapter", "SubprocessAdapter", "format_solution_text"]

DEFAULT_TIMEOUT_SECONDS = 600.0


def format_solution_text(status: str, objective: float, values: dict[str, float]) -> str:
    lines = [status, f"obj {objective!r}"]
    lines.extend(f"{name} {val!r}" for name, val in values.items())
    return "\n".join(lines) + "\n"


@dataclass
class ScipyMilpAdapter:
    """Solves the model in process with scipy's HiGHS-backed MILP solver."""

    time_limit: float = DEFAULT_TIMEOUT_SECONDS
    mip_rel_gap: float = 1e-4

    def run(self, model: MilpModel, lp_path: Path, workdir: Path) -> str:
        variables = model.variables
        n = len(variables)
        index = {v.name: i for i, v in enumerate(variables)}

        c = np.zeros(n)
        for name, coef in model.objective_terms:
            c[index[name]] += coef
        sign = -1.0 if model.objective_sense == "max" else 1.0
        c *= sign

        rows, cols, data, lo, hi = [], [], [], [], []
        for r, con in enumerate(model.constraints):
            for name, coef in con.terms:
                rows.append(r)
                cols.append(index[name])
                data.append(coef)
            if con.sense == "<=":
                lo.append(-np.inf)
                hi.append(con.rhs)
            elif con.sense == ">=":
                lo.append(con.rhs)
                hi.append(np.inf)
            else:
                lo.append(con.rhs)
                hi.append(con.rhs)

        constraints = []
        if model.constraints:
            a = sp.csr_matrix(
                (data, (rows, cols)), shape=(len(model.constraints), n)
            )
            constraints = [sopt.LinearConstraint(a, lo, hi)]

        bounds = sopt.Bounds(
            [v.lower for v in variables], [v.upper for v in variables]
        )
        integrality = np.array(
            [1 if v.kind == BINARY else 0 for v in variables]
        )

        res = sopt.milp(
            c=c,
            constraints=constraints,
            bounds=bounds if n else None,
            integrality=integrality if n else None,
            options={
                "time_limit": self.time_limit,
                "mip_rel_gap": self.mip_rel_gap,
            },
        )

        if res.status == 0:
            status = "optimal"
        elif res.status == 1 and res.x is not None:
            status = "feasible"  # hit time limit with an incumbent
        elif res.status == 2:
            status = "infeasible"
        elif res.status == 3:
            status = "unbounded"
        else:
            status = "error"

        if res.x is None or status in ("infeasible", "unbounded", "error"):
            return format_solution_text(status, 0.0, {})

        x = np.asarray(res.x, dtype=float)
        # snap binaries and clip integrality dust so downstream bound checks
        # see clean values
        for i, v in enumerate(variables):
            if v.kind == BINARY:
                x[i] = round(x[i])
            x[i] = min(max(x[i], v.lower), v.upper)
        # recompute the objective from snapped values for consistency
        objective = float(
            sum(coef * x[index[name]] for name, coef in model.objective_terms)
        )
        values = {v.name: float(x[i]) for i, v in enumerate(variables)}
        return format_solution_text(status, objective, values)


@dataclass
class SubprocessAdapter:
    """Runs an external solver executable.

    ``arg_template`` is a shell-style template; ``{lp}`` and ``{sol}`` expand
    to the LP input path and the expected solution output path. The external
    command must write the textual solution format to ``{sol}``.
    """

    command: str
    arg_template: str = "{lp} {sol}"
    timeout: float = DEFAULT_TIMEOUT_SECONDS

    def run(self, model: MilpModel, lp_path: Path, workdir: Path) -> str:
        sol_path = workdir / f"{model.name}.adapter.sol"
        args = [self.command] + [
            part.format(lp=str(lp_path), sol=str(sol_path))
            for part in shlex.split(self.arg_template)
        ]
        log_path = workdir / f"{model.name}.solver.log"
        with open(log_path, "w") as log:
            proc = subprocess.run(
                args,
                stdout=log,
                stderr=subprocess.STDOUT,
                timeout=self.timeout,
            )
        if proc.returncode != 0:
            raise RuntimeError(
                f"solver command {args[0]!r} exited {proc.returncode}; "
                f"log at {log_path}"
            )
        if not sol_path.exists():
            raise RuntimeError(f"solver produced no solution file at {sol_path}")
        return sol_path.read_text()
