"""Radial distribution network cases: schema, validation, unit conversion."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Union

__all__ = ["Bus", "Branch", "Load", "Generator", "NetworkCase", "load_case", "bundled_case_path"]

DEFAULT_V_SQR_MIN = 0.9**2
DEFAULT_V_SQR_MAX = 1.1**2


@dataclass(frozen=True)
class Bus:
    id: int
    v_sqr_min: float = DEFAULT_V_SQR_MIN
    v_sqr_max: float = DEFAULT_V_SQR_MAX


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r_pu: float
    x_pu: float
    i_max_amps: float

    @property
    def key(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class Load:
    bus: int
    p_pu: float
    q_pu: float


@dataclass(frozen=True)
class Generator:
    bus: int
    p_max_pu: float
    q_max_pu: float


@dataclass(frozen=True)
class NetworkCase:
    name: str
    s_base_mva: float
    v_base_kv: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    loads: tuple[Load, ...]
    generators: tuple[Generator, ...]

    @property
    def root(self) -> int:
        return self.buses[0].id

    @property
    def i_base_amps(self) -> float:
        """Current base: S_base / (sqrt(3) * V_base) for a three-phase system."""
        return self.s_base_mva * 1e6 / (math.sqrt(3) * self.v_base_kv * 1e3)

    @property
    def z_base_ohm(self) -> float:
        return self.v_base_kv**2 / self.s_base_mva

    def bus(self, bus_id: int) -> Bus:
        for b in self.buses:
            if b.id == bus_id:
                return b
        raise KeyError(f"no bus {bus_id}")

    def children(self, bus_id: int) -> list[Branch]:
        return [br for br in self.branches if br.from_bus == bus_id]


class CaseError(ValueError):
    pass


def _check_radial(case: NetworkCase) -> None:
    bus_ids = {b.id for b in case.buses}
    if len(bus_ids) != len(case.buses):
        raise CaseError("duplicate bus ids")
    if len(case.branches) != len(case.buses) - 1:
        raise CaseError(
            f"{len(case.branches)} branches for {len(case.buses)} buses: not a tree"
        )
    adjacency: dict[int, list[int]] = {b.id: [] for b in case.buses}
    for br in case.branches:
        if br.from_bus not in bus_ids or br.to_bus not in bus_ids:
            raise CaseError(f"branch {br.key} references unknown bus")
        adjacency[br.from_bus].append(br.to_bus)
        adjacency[br.to_bus].append(br.from_bus)
    seen = {case.root}
    stack = [case.root]
    while stack:
        b = stack.pop()
        for nb in adjacency[b]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if seen != bus_ids:
        raise CaseError("branch graph is disconnected")
    # connected + |E| = |V| - 1 implies acyclic; orientation must point away
    # from the root
    parent = {case.root: None}
    queue = [case.root]
    order = {}
    while queue:
        b = queue.pop()
        for br in case.branches:
            if br.from_bus == b and br.to_bus not in parent:
                parent[br.to_bus] = b
                queue.append(br.to_bus)
            elif br.to_bus == b and br.from_bus not in parent:
                raise CaseError(
                    f"branch {br.key} is oriented toward the root; "
                    "branches must run parent -> child"
                )


def load_case(source: Union[str, Path, dict]) -> NetworkCase:
    """Load and validate a case document (JSON file or parsed dict)."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        doc = json.loads(path.read_text())
        default_name = path.stem
    else:
        doc = source
        default_name = "case"

    try:
        bases = doc["bases"]
        s_base = float(bases["s_base_mva"])
        v_base = float(bases["v_base_kv"])
    except KeyError as exc:
        raise CaseError(f"missing required field: {exc}") from exc
    if s_base <= 0 or v_base <= 0:
        raise CaseError("bases must be positive")
    z_base = v_base**2 / s_base

    buses = tuple(
        Bus(
            id=int(b["id"]),
            v_sqr_min=float(b.get("v_sqr_min", DEFAULT_V_SQR_MIN)),
            v_sqr_max=float(b.get("v_sqr_max", DEFAULT_V_SQR_MAX)),
        )
        for b in doc.get("buses", [])
    )
    if not buses:
        raise CaseError("case has no buses")

    branches = []
    for raw in doc.get("branches", []):
        if "r_pu" in raw:
            r_pu, x_pu = float(raw["r_pu"]), float(raw["x_pu"])
        elif "r_ohm" in raw:
            r_pu = float(raw["r_ohm"]) / z_base
            x_pu = float(raw["x_ohm"]) / z_base
        else:
            raise CaseError(f"branch {raw} needs r_pu or r_ohm")
        if r_pu < 0 or x_pu < 0:
            raise CaseError("impedances must be nonnegative")
        branches.append(
            Branch(
                from_bus=int(raw["from"]),
                to_bus=int(raw["to"]),
                r_pu=r_pu,
                x_pu=x_pu,
                i_max_amps=float(raw["i_max_amps"]),
            )
        )

    loads = tuple(
        Load(bus=int(l["bus"]), p_pu=float(l["p_pu"]), q_pu=float(l["q_pu"]))
        for l in doc.get("loads", [])
    )
    generators = tuple(
        Generator(
            bus=int(g["bus"]),
            p_max_pu=float(g["p_max_pu"]),
            q_max_pu=float(g["q_max_pu"]),
        )
        for g in doc.get("generators", [])
    )

    case = NetworkCase(
        name=doc.get("name", default_name),
        s_base_mva=s_base,
        v_base_kv=v_base,
        buses=buses,
        branches=tuple(branches),
        loads=loads,
        generators=generators,
    )
    _check_radial(case)
    return case


def bundled_case_path(name: str) -> Path:
    """Path of a case shipped with the package (e.g. ``ieee33_4dg``)."""
    ref = resources.files("sopwl") / "cases" / f"{name}.json"
    with resources.as_file(ref) as path:
        if not path.exists():
            raise FileNotFoundError(f"no bundled case named {name!r}")
        return Path(path)
