from __future__ import annotations

import math

import pytest

from app.core.alpha_field import constant_field, two_level_field
from app.core.errors import DomainError
from app.core.initial_conditions import initial_condition
from app.core.pde_solver import Boundary, Grid1D
from app.core.simulator import SimConfig
from app.services.validation_service import (
    compare_mc_pde,
    constant_order,
    constants_checks,
    eigenmode_check,
    eigenmode_oracle,
    half_stable_ks_check,
    heat_reduction_check,
    laplace_checks,
    mittag_leffler_checks,
    run_validation_suite,
)


def test_deterministic_oracles_pass():
    checks = [*mittag_leffler_checks(), heat_reduction_check(), *constants_checks()]
    assert all(c.passed for c in checks), [c.model_dump() for c in checks if not c.passed]


def test_eigenmode_against_closed_form():
    check = eigenmode_check()
    assert check.passed, check.model_dump()
    assert check.expected == pytest.approx(eigenmode_oracle(0.5, 1.0, 1.0))


@pytest.mark.slow
def test_sampler_oracles_pass():
    checks = [*laplace_checks(0, 1_000_000), half_stable_ks_check(0, 1_000_000)]
    assert len(checks) == 41
    assert all(c.passed for c in checks), [c.model_dump() for c in checks if not c.passed]


def test_constant_order_detection():
    assert constant_order(constant_field(0.4)) == 0.4
    assert constant_order(two_level_field(0.3, 0.7)) is None
    assert constant_order(0.6) == 0.6


def test_constant_datum_is_reproduced_exactly():
    field = two_level_field(0.3, 0.7)
    grid = Grid1D(-2.0, 3.0, 40, Boundary.NEUMANN0)
    report = compare_mc_pde(
        field, grid, initial_condition("constant"), 0.5, 20,
        sim=SimConfig(dt=0.01), pde_dt=0.05, start_points=[-1.0, 0.5, 2.0],
    )
    assert report.passed
    assert report.max_discrepancy < 1e-12
    assert all(p.oracle is None for p in report.points)


def test_start_points_snap_to_nodes():
    grid = Grid1D(-2.0, 3.0, 40, Boundary.NEUMANN0)
    report = compare_mc_pde(
        two_level_field(0.3, 0.7), grid, initial_condition("constant"), 0.5, 4,
        sim=SimConfig(dt=0.01), pde_dt=0.05, start_points=[0.51],
    )
    assert report.points[0].x in set(grid.nodes.tolist())


def test_bare_order_cannot_be_simulated():
    grid = Grid1D(-math.pi, math.pi, 32)
    with pytest.raises(DomainError):
        compare_mc_pde(0.5, grid, initial_condition("cos"), 0.5, 4, sim=SimConfig(dt=0.01), pde_dt=0.05)


@pytest.mark.slow
@pytest.mark.parametrize("T", [0.5, 1.0, 2.0])
def test_monte_carlo_matches_constant_order_eigenmode(T):
    grid = Grid1D(-math.pi, math.pi, 256)
    report = compare_mc_pde(
        constant_field(0.5), grid, initial_condition("cos"), T, 10_000,
        sim=SimConfig(dt=1e-3), pde_dt=0.005, start_points=[0.0], base_seed=4, threads=4, tolerance=0.02,
    )
    point = report.points[0]
    assert point.oracle == pytest.approx(eigenmode_oracle(0.5, 1.0, T))
    assert report.passed, report.model_dump()


@pytest.mark.slow
def test_monte_carlo_matches_variable_order_solution():
    grid = Grid1D(-6.0, 7.0, 130, Boundary.NEUMANN0)
    report = compare_mc_pde(
        two_level_field(0.3, 0.7), grid, initial_condition("bump", lo=0.0, hi=1.0, width=0.2), 0.5, 2000,
        sim=SimConfig(dt=1e-3), pde_dt=0.005, start_points=[-0.5, 0.5, 1.5], base_seed=6, threads=4,
        tolerance=0.05,
    )
    assert report.passed, report.model_dump()


@pytest.mark.slow
def test_full_suite_passes():
    report = run_validation_suite(seed=0)
    assert report.passed, [c.model_dump() for c in report.checks if not c.passed]
