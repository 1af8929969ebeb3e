"""Post-solve analysis: filling-state extraction, per-branch approximation
errors, ordered-filling compliance, and an exact radial sweep cross-check.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional

from .distflow import (
    MODE_PWL,
    MODE_SOPWL,
    DistflowArtifacts,
    PwlBlockHandle,
    emit_pwl_block,
)
from .milp import MilpModel, Solution, check_solution
from .network import NetworkCase
from .pwl import FillingState, PwlGrid, eso_fill, is_eso, pwl_value, relative_error

__all__ = [
    "BranchErrorRecord",
    "ErrorReport",
    "SweepResult",
    "SweepDivergence",
    "extract_filling",
    "branch_errors",
    "check_unordered_feasibility",
    "radial_sweep",
]

DEFAULT_ZERO_FLOW_FLOOR = 1e-6
ESO_CHECK_EXTRA_TOL = 1e-6


def extract_filling(solution: Solution, block: PwlBlockHandle) -> FillingState:
    """Read the block's segment variables out of a solution, clipping solver
    feasibility dust back into the segment bounds."""
    h = block.grid.seg_width
    deltas = []
    for name in block.delta_names:
        if name not in solution.values:
            raise KeyError(f"solution has no value for {name}")
        deltas.append(min(max(solution.values[name], 0.0), h))
    return FillingState(grid=block.grid, deltas=tuple(deltas))


@dataclass(frozen=True)
class BranchErrorRecord:
    branch_key: str
    p: float
    q: float
    f_p: float
    f_q: float
    e_p: Optional[float]  # percent; None when the flow is negligible
    e_q: Optional[float]
    eso_ok_p: bool
    eso_ok_q: bool
    negligible_p: bool
    negligible_q: bool


@dataclass(frozen=True)
class ErrorReport:
    mode: str
    records: tuple[BranchErrorRecord, ...]
    zero_flow_floor: float

    def _reported(self, kind: str) -> list[float]:
        if kind == "p":
            return [r.e_p for r in self.records if r.e_p is not None]
        return [r.e_q for r in self.records if r.e_q is not None]

    @property
    def max_e_p(self) -> float:
        vals = self._reported("p")
        return max(vals) if vals else 0.0

    @property
    def mean_e_p(self) -> float:
        vals = self._reported("p")
        return sum(vals) / len(vals) if vals else 0.0

    @property
    def max_e_q(self) -> float:
        vals = self._reported("q")
        return max(vals) if vals else 0.0

    @property
    def mean_e_q(self) -> float:
        vals = self._reported("q")
        return sum(vals) / len(vals) if vals else 0.0

    def to_delimited(self, sep: str = ",") -> str:
        lines = [sep.join(["feeder", "mode", "E_p", "E_q", "eso_ok"])]
        for r in self.records:
            e_p = "negligible" if r.e_p is None else f"{r.e_p:.6f}"
            e_q = "negligible" if r.e_q is None else f"{r.e_q:.6f}"
            eso_ok = str(r.eso_ok_p and r.eso_ok_q).lower()
            lines.append(sep.join([r.branch_key, self.mode, e_p, e_q, eso_ok]))
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        header = f"{'feeder':>8} {'mode':>6} {'E_p %':>12} {'E_q %':>12} {'eso_ok':>7}"
        lines = [header]
        for r in self.records:
            e_p = "negl." if r.e_p is None else f"{r.e_p:12.6f}"
            e_q = "negl." if r.e_q is None else f"{r.e_q:12.6f}"
            ok = "yes" if (r.eso_ok_p and r.eso_ok_q) else "NO"
            lines.append(f"{r.branch_key:>8} {self.mode:>6} {e_p:>12} {e_q:>12} {ok:>7}")
        lines.append(
            f"summary: max E_p = {self.max_e_p:.6f} %, mean E_p = {self.mean_e_p:.6f} % "
            f"over {len(self._reported('p'))} reported feeders"
        )
        return "\n".join(lines) + "\n"


def branch_errors(
    solution: Solution,
    artifacts: DistflowArtifacts,
    zero_flow_floor: float = DEFAULT_ZERO_FLOW_FLOOR,
) -> ErrorReport:
    """Per-branch relative approximation errors of the solved flows, with
    ordered-filling flags. Branches whose flow magnitude is below the floor
    are flagged negligible and excluded from summaries."""
    records = []
    for br in artifacts.case.branches:
        key = br.key
        grid = artifacts.grids[key]
        eso_tol = artifacts.options.block_epsilon(grid) + ESO_CHECK_EXTRA_TOL
        row: dict[str, object] = {"branch_key": key}
        for kind in ("P", "Q"):
            state = extract_filling(solution, artifacts.blocks[(key, kind)])
            f = pwl_value(state)
            y = abs(solution.values[artifacts.flow_vars[(key, kind)]])
            negligible = y < zero_flow_floor
            err = None if negligible else relative_error(f, y)
            lk = kind.lower()
            row[lk] = y
            row[f"f_{lk}"] = f
            row[f"e_{lk}"] = err
            row[f"eso_ok_{lk}"] = is_eso(state, eso_tol)
            row[f"negligible_{lk}"] = negligible
        records.append(BranchErrorRecord(**row))  # type: ignore[arg-type]
    return ErrorReport(
        mode=artifacts.options.mode,
        records=tuple(records),
        zero_flow_floor=zero_flow_floor,
    )


def filling_dump(solution: Solution, artifacts: DistflowArtifacts) -> str:
    """Segment-by-segment dump of every block's filling state."""
    lines = ["branch kind lambda delta"]
    for br in artifacts.case.branches:
        for kind in ("P", "Q"):
            state = extract_filling(solution, artifacts.blocks[(br.key, kind)])
            for lam, d in enumerate(state.deltas, start=1):
                lines.append(f"{br.key} {kind} {lam} {d!r}")
    return "\n".join(lines) + "\n"


def check_unordered_feasibility(
    state: FillingState,
    big_m: Optional[float] = None,
    epsilon_plus: Optional[float] = None,
    tol: float = 1e-6,
) -> tuple[bool, bool]:
    """Substitute a candidate filling into a standalone linearized-square
    block in each mode and report (feasible in plain mode, feasible in
    ordered mode) by direct constraint evaluation."""
    grid = state.grid
    h = grid.seg_width
    total = state.total
    results = []
    for mode in (MODE_PWL, MODE_SOPWL):
        model = MilpModel(name=f"witness_{mode}")
        y_var = model.add_variable("y", lower=-grid.y_max, upper=grid.y_max)
        block = emit_pwl_block(
            model, y_var, grid, mode, big_m=big_m, epsilon_plus=epsilon_plus
        )
        values = {y_var: total, block.pos_name: total, block.neg_name: 0.0,
                  block.z_pos_name: 1.0, block.z_neg_name: 0.0}
        for name, d in zip(block.delta_names, state.deltas):
            values[name] = d
        # indicator binaries: forced to 1 wherever the next segment is used,
        # free (set 0) elsewhere
        for lam, name in enumerate(block.x_names, start=1):
            forced = lam < grid.num_segments and state.deltas[lam] > tol
            values[name] = 1.0 if forced else 0.0
        model.freeze()
        solution = Solution(status="feasible", objective_value=0.0, values=values)
        ok = not check_solution(model, solution, tol=tol)
        for v in model.variables:
            val = values[v.name]
            if val < v.lower - tol or val > v.upper + tol:
                ok = False
        results.append(ok)
    return results[0], results[1]


@dataclass(frozen=True)
class SweepResult:
    voltages: dict[int, float]  # bus -> |V| in pu
    branch_flows: dict[str, tuple[float, float]]  # sending-end (P, Q) pu
    iterations: int
    root_injection: tuple[float, float]  # slack power drawn from the root

    @property
    def converged(self) -> bool:
        return True  # non-convergence raises instead


class SweepDivergence(RuntimeError):
    def __init__(self, trace: list[float]):
        super().__init__(
            f"radial sweep did not converge in {len(trace)} iterations; "
            f"voltage-change trace: {trace}"
        )
        self.trace = trace


def radial_sweep(
    case: NetworkCase,
    injections: dict[int, tuple[float, float]],
    v_norm: float = 1.0,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> SweepResult:
    """Backward/forward sweep exact power flow on the radial case.

    ``injections`` maps bus id to net (P, Q) injection in pu (generation
    positive, load negative); the root is the slack bus at ``v_norm``.
    """
    root = case.root
    # children in BFS order so the forward pass sees parents first
    order: list = []
    queue = [root]
    while queue:
        b = queue.pop(0)
        for br in case.branches:
            if br.from_bus == b:
                order.append(br)
                queue.append(br.to_bus)

    voltage = {bus.id: complex(v_norm, 0.0) for bus in case.buses}
    currents: dict[str, complex] = {br.key: 0.0j for br in case.branches}
    trace: list[float] = []
    for _ in range(max_iter):
        # backward: accumulate drawn currents toward the root
        drawn = {}
        for bus in case.buses:
            p, q = injections.get(bus.id, (0.0, 0.0))
            s_drawn = complex(-p, -q)
            drawn[bus.id] = (s_drawn / voltage[bus.id]).conjugate()
        subtree = dict(drawn)
        for br in reversed(order):
            currents[br.key] = subtree[br.to_bus]
            subtree[br.from_bus] += subtree[br.to_bus]
        # forward: propagate voltage drops from the root
        delta = 0.0
        for br in order:
            z = complex(br.r_pu, br.x_pu)
            v_new = voltage[br.from_bus] - z * currents[br.key]
            delta = max(delta, abs(v_new - voltage[br.to_bus]))
            voltage[br.to_bus] = v_new
        trace.append(delta)
        if delta < tol:
            break
    else:
        raise SweepDivergence(trace)

    flows = {}
    for br in order:
        s = voltage[br.from_bus] * currents[br.key].conjugate()
        flows[br.key] = (s.real, s.imag)
    root_current = sum(currents[br.key] for br in case.branches if br.from_bus == root)
    s_root = voltage[root] * root_current.conjugate()
    return SweepResult(
        voltages={b: abs(v) for b, v in voltage.items()},
        branch_flows=flows,
        iterations=len(trace),
        root_injection=(s_root.real, s_root.imag),
    )
