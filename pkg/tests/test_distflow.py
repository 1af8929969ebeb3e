import math

import pytest

from sopwl.distflow import (
    BuildOptions,
    build_distflow,
    build_restoration_objective,
    emit_pwl_block,
    flow_bound,
)
from sopwl.milp import MilpModel, check_solution, solve
from sopwl.network import bundled_case_path, load_case
from sopwl.pwl import PwlGrid
from sopwl.solvers import ScipyMilpAdapter


@pytest.fixture(scope="module")
def ieee33():
    return load_case(bundled_case_path("ieee33_4dg"))


@pytest.fixture()
def twobus(cases_dir):
    return load_case(cases_dir / "twobus.json")


class TestFlowBound:
    def test_unit_conversion(self, ieee33):
        opts = BuildOptions(num_segments=50)
        grid = flow_bound(ieee33.branches[0], ieee33, opts)
        # 50 A on a 456.1 A base at nominal voltage
        assert grid.y_max == pytest.approx(0.1096, abs=2e-4)
        assert grid.seg_width == pytest.approx(grid.y_max / 50)

    def test_unity(self, ieee33):
        br = ieee33.branches[0]
        scaled = type(br)(
            from_bus=br.from_bus,
            to_bus=br.to_bus,
            r_pu=br.r_pu,
            x_pu=br.x_pu,
            i_max_amps=ieee33.i_base_amps,
        )
        grid = flow_bound(scaled, ieee33, BuildOptions(num_segments=10))
        assert grid.y_max == pytest.approx(1.0)


class TestEmitBlock:
    def _base_model(self, grid):
        m = MilpModel()
        y = m.add_variable("y", lower=-grid.y_max, upper=grid.y_max)
        return m, y

    def test_plain_counts(self):
        grid = PwlGrid(1.0, 50)
        m, y = self._base_model(grid)
        block = emit_pwl_block(m, y, grid, "pwl")
        # 50 segments + 2 sign vars + flow var itself
        assert len(m.variables) == 1 + 50 + 2 + 2
        assert sum(1 for v in m.variables if v.kind == "binary") == 2
        assert len(m.constraints) == 5  # sign split, total, two links, pair cap
        assert len(block.f_terms) == 50
        assert block.x_names == ()

    def test_ordered_counts(self):
        grid = PwlGrid(1.0, 50)
        m, y = self._base_model(grid)
        block = emit_pwl_block(m, y, grid, "sopwl")
        assert sum(1 for v in m.variables if v.kind == "binary") == 2 + 50
        assert len(m.constraints_by_tag("eq20")) == 50
        assert len(m.constraints_by_tag("eq21")) == 49
        assert len(block.x_names) == 50

    def test_single_segment(self):
        grid = PwlGrid(1.0, 1)
        m, y = self._base_model(grid)
        block = emit_pwl_block(m, y, grid, "sopwl")
        assert block.f_terms[0][1] == pytest.approx(1.0)  # slope equals y_max
        assert len(m.constraints_by_tag("eq20")) == 1
        assert len(m.constraints_by_tag("eq21")) == 0

    def test_frozen_model_rejected(self):
        grid = PwlGrid(1.0, 5)
        m, y = self._base_model(grid)
        m.freeze()
        with pytest.raises(Exception):
            emit_pwl_block(m, y, grid, "pwl")

    def test_segment_bounds(self):
        grid = PwlGrid(1.0, 4)
        m, y = self._base_model(grid)
        block = emit_pwl_block(m, y, grid, "pwl")
        for name in block.delta_names:
            v = m.variable(name)
            assert v.lower == 0.0
            assert v.upper == pytest.approx(grid.seg_width)


class TestBuildDistflow:
    def test_ieee33_block_counts(self, ieee33):
        opts = BuildOptions(num_segments=50, mode="pwl")
        m = MilpModel()
        art = build_distflow(m, ieee33, opts)
        assert len(art.blocks) == 64
        deltas = [v for v in m.variables if "_d" in v.name]
        assert len(deltas) == 3200

    def test_empty_network_feasible(self, cases_dir):
        case = load_case(cases_dir / "empty2bus.json")
        opts = BuildOptions(num_segments=5, mode="pwl")
        m = MilpModel(name="empty")
        art = build_distflow(m, case, opts)
        build_restoration_objective(m, art)
        m.freeze()
        sol = solve(m, ScipyMilpAdapter())
        assert sol.status == "optimal"
        assert sol.objective_value == pytest.approx(0.0, abs=1e-9)
        assert sol.values[art.voltage_vars[2]] == pytest.approx(1.0, abs=1e-6)

    def test_twobus_balance_by_hand(self, twobus):
        opts = BuildOptions(num_segments=5, mode="pwl")
        m = MilpModel()
        art = build_distflow(m, twobus, opts)
        (bal,) = m.constraints_by_tag("balanceP:2")
        terms = dict(bal.terms)
        assert terms[art.flow_vars[("1-2", "P")]] == 1.0
        assert terms[art.isqr_vars["1-2"]] == pytest.approx(-0.01)
        assert terms[art.pickup_vars[2]] == pytest.approx(-0.01)
        assert terms[art.gen_vars[2][0]] == 1.0
        assert bal.rhs == 0.0

    def test_twobus_full_restoration(self, twobus):
        # local generation covers the local load: every pickup hits 1
        opts = BuildOptions(num_segments=10, mode="sopwl")
        m = MilpModel(name="twobus")
        art = build_distflow(m, twobus, opts)
        build_restoration_objective(m, art)
        m.freeze()
        sol = solve(m, ScipyMilpAdapter())
        assert sol.status == "optimal"
        assert sol.values[art.pickup_vars[2]] == pytest.approx(1.0, abs=1e-6)
        assert check_solution(m, sol) == []

    def test_restored_load_capped_by_generation(self, ieee33):
        opts = BuildOptions(num_segments=10, mode="pwl")
        m = MilpModel(name="cap")
        art = build_distflow(m, ieee33, opts)
        build_restoration_objective(m, art)
        m.freeze()
        sol = solve(m, ScipyMilpAdapter())
        assert sol.status == "optimal"
        assert sol.objective_value <= 4 * 0.05 + 1e-6

    def test_restorable_subset(self, twobus):
        opts = BuildOptions(
            num_segments=5, mode="pwl", restorable_buses=frozenset()
        )
        m = MilpModel(name="none_restorable")
        art = build_distflow(m, twobus, opts)
        build_restoration_objective(m, art)
        m.freeze()
        sol = solve(m, ScipyMilpAdapter())
        assert sol.objective_value == pytest.approx(0.0, abs=1e-9)

    def test_binary_pickup_unimplemented(self):
        with pytest.raises(NotImplementedError):
            BuildOptions(binary_pickup=True)


class TestLossPenaltyObjective:
    def test_terms_include_losses(self, twobus):
        opts = BuildOptions(
            num_segments=5, mode="pwl", objective="restoration_with_loss_penalty",
            loss_weight=2.0,
        )
        m = MilpModel()
        art = build_distflow(m, twobus, opts)
        build_restoration_objective(m, art)
        terms = dict(m.objective_terms)
        assert terms[art.isqr_vars["1-2"]] == pytest.approx(-2.0 * 0.01)
        assert m.objective_sense == "max"
