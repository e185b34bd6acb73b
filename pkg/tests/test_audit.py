import math

import numpy as np
import pytest

from oracles import exp_zero_crossing, linear_zero_crossing
from pbrs.audit import (ANALYSIS_LABEL, AuditInput, Verdict, audit, classify_transition,
                        enumerate_transitions, min_delta_exponential, min_delta_linear,
                        potential_bounds, shaping_surface, shaping_value, write_audit_csv,
                        write_surface_csv)
from pbrs.core import TerminationKind, Transition
from pbrs.envs import RIGHT, Gridworld, GridworldConfig, RewardMode
from pbrs.errors import ConfigurationError
from pbrs.shaping import Constant, ManhattanToGoal, PotentialSpec, recommended_bias

NT, TERM, TRUNC = (TerminationKind.NON_TERMINAL, TerminationKind.TERMINAL,
                   TerminationKind.TRUNCATED)


def grid_spec(grid, bias=0.0, exp_base=32.0, gamma=0.95):
    return PotentialSpec(ManhattanToGoal(grid), bias=bias, exp_base=exp_base, gamma=gamma)


class TestClassify:
    def test_step_toward_goal_incentivized(self):
        grid = GridworldConfig(25, 25)
        assert 0.95 * 32 ** (1 / 48) > 1
        inp = AuditInput(grid_spec(grid), 0.0, 0.0, 1.0,
                         [Transition(0, RIGHT, 1, 0.0, NT)])
        assert classify_transition(inp, inp.transitions[0]).verdict is \
            Verdict.INCENTIVIZED_CORRECTLY

    def test_positive_init_violates_req1_near_start(self):
        grid = GridworldConfig(25, 25)
        inp = AuditInput(grid_spec(grid), 1.0, 0.0, 1.0, [Transition(0, RIGHT, 1, 0.0, NT)])
        v = classify_transition(inp, inp.transitions[0])
        assert v.verdict is Verdict.VIOLATES_REQ1
        assert 0 < v.shaped_r < 0.05

    def test_step_away_and_wall(self):
        grid = GridworldConfig(5, 5)
        spec = grid_spec(grid)
        inp = AuditInput(spec, 0.0, 0.0, 1.0, [Transition(1, 2, 0, 0.0, NT),
                                                Transition(0, 0, 0, 0.0, NT)])
        away, wall = (classify_transition(inp, t).verdict for t in inp.transitions)
        assert away is Verdict.DISINCENTIVIZED_CORRECTLY
        assert wall is Verdict.DISINCENTIVIZED_CORRECTLY

    def test_truncation_with_on_step_matched_bias(self):
        grid = GridworldConfig(11, 11, RewardMode.ON_STEP)
        b = recommended_bias(0.95, 0.0, -1.0)
        spec = grid_spec(grid, bias=b)
        t = Transition(5, RIGHT, 6, -1.0, TRUNC)
        inp = AuditInput(spec, 0.0, -1.0, -1.0, [t])
        v = classify_transition(inp, t)
        assert v.shaped_r > 0
        assert v.verdict is Verdict.VIOLATES_TERMINAL_REQ

    def test_goal_requirement(self):
        inside = PotentialSpec(Constant(0.5), normalize=False)
        outside = PotentialSpec(Constant(1.05), normalize=False)
        t = Transition(0, RIGHT, 1, 1.0, TERM)
        ok = classify_transition(AuditInput(inside, 0.0, 0.0, 1.0, [t]), t)
        bad = classify_transition(AuditInput(outside, 0.0, 0.0, 1.0, [t]), t)
        assert ok.verdict is Verdict.INCENTIVIZED_CORRECTLY
        assert bad.verdict is Verdict.VIOLATES_GOAL_REQ

    def test_failure_terminal_when_terminal_is_not_goal(self):
        spec = PotentialSpec(Constant(0.5), normalize=False, gamma=0.99)
        t = Transition(0, 1, 1, 1.0, TERM)
        v = classify_transition(AuditInput(spec, 0.0, 1.0, 1.0, [t], terminal_is_goal=False), t)
        # 1 - 0.5 > 0: dying is rewarded, which the terminal requirement forbids.
        assert v.verdict is Verdict.VIOLATES_TERMINAL_REQ

    def test_boundary_flag(self):
        # F = (gamma - 1) * 1 = -0.05 = (1 - gamma) * Q_init with Q_init = -1.
        spec = PotentialSpec(Constant(1.0), normalize=False, gamma=0.95)
        t = Transition(0, 0, 1, 0.0, NT)
        v = classify_transition(AuditInput(spec, -1.0, 0.0, 1.0, [t]), t)
        assert v.shaped_r == pytest.approx(v.threshold, abs=1e-15)
        assert v.boundary and not v.increases_q and not v.decreases_q
        assert v.verdict is Verdict.DISINCENTIVIZED_CORRECTLY

    def test_rounding_tie_is_a_tie(self):
        # Exact arithmetic gives shaped_r == threshold; floats land 7e-16 above.
        spec = PotentialSpec(Constant(0.0), normalize=False, bias=1.05, gamma=0.95)
        t = Transition(0, 0, 1, -1.0, NT)
        v = classify_transition(AuditInput(spec, 1.0, -1.0, -1.0, [t]), t)
        assert v.boundary and v.verdict is Verdict.DISINCENTIVIZED_CORRECTLY

    def test_exactly_one_verdict_each(self):
        env = Gridworld(GridworldConfig(6, 6))
        ts = enumerate_transitions(env)
        report = audit(AuditInput(grid_spec(env.config), 0.0, 0.0, 1.0, ts))
        assert sum(report.counts.values()) == len(ts) == len(report.rows)


class TestBounds:
    def test_goal_directed(self):
        b = potential_bounds(0.95, 0.0, 1.0, 0.0)
        assert (b.lower, b.upper, b.feasible) == (0.0, 1.0, True)

    def test_infeasible(self):
        assert not potential_bounds(0.95, 0.0, -1.0, -1.0).feasible
        assert not potential_bounds(0.95, 0.0, -1.0, -1.0).contains(0.0)

    def test_negative_init(self):
        b = potential_bounds(0.95, -1.0, 1.0, 0.0)
        assert b.lower == pytest.approx(0.05, abs=1e-15)
        assert b.upper == pytest.approx(1.05, abs=1e-15)

    def test_potentials_in_bounds_satisfy_terminal_requirements(self):
        # Any potential strictly inside the bounds keeps the goal transition
        # incentivized and non-goal terminal transitions disincentivized.
        bounds = potential_bounds(0.95, 0.0, 1.0, 0.0)
        for phi in np.linspace(0.01, 0.99, 25):
            assert bounds.contains(phi)
            spec = PotentialSpec(Constant(phi), normalize=False)
            goal = Transition(0, 0, 1, 1.0, TERM)
            trunc = Transition(0, 0, 1, 0.0, TRUNC)
            inp = AuditInput(spec, 0.0, 0.0, 1.0, [goal, trunc])
            assert classify_transition(inp, goal).verdict is Verdict.INCENTIVIZED_CORRECTLY
            assert classify_transition(inp, trunc).verdict is Verdict.DISINCENTIVIZED_CORRECTLY


class TestMinDelta:
    def test_zero_potential(self):
        assert min_delta_linear(0.0, 0.9) == 0.0

    def test_values(self):
        assert min_delta_linear(1.0, 0.75) == pytest.approx(1 / 3, abs=1e-15)
        assert min_delta_linear(0.5, 0.95) == pytest.approx(0.0263, abs=5e-5)
        assert min_delta_exponential(8.0, 0.75) == pytest.approx(math.log(4 / 3) / math.log(8))
        assert min_delta_exponential(8.0, 0.75) == pytest.approx(0.1383, abs=5e-5)
        assert min_delta_exponential(64.0, 0.75) == pytest.approx(0.0692, abs=5e-5)

    def test_limit_gamma_one(self):
        assert min_delta_exponential(8.0, 1.0) == 0.0
        assert min_delta_exponential(8.0, 1 - 1e-12) < 1e-11

    def test_negative_branch(self):
        # Mirror image: for negative potentials F > 0 for decreases smaller than the threshold.
        gamma, phi = 0.8, -0.6
        d = min_delta_linear(phi, gamma, negative_branch=True)
        assert d == pytest.approx(0.15)
        assert shaping_value(phi, -0.5 * d, gamma) > 0
        assert shaping_value(phi, -1.5 * d, gamma) < 0

    def test_errors(self):
        with pytest.raises(ConfigurationError):
            min_delta_linear(1.0, 0.0)
        with pytest.raises(ConfigurationError):
            min_delta_linear(-1.0, 0.9)
        with pytest.raises(ConfigurationError):
            min_delta_linear(1.0, 0.9, negative_branch=True)

    @pytest.mark.parametrize("base", [2.0, 8.0, 32.0, 64.0])
    @pytest.mark.parametrize("phi", [0.0, 0.3, 1.0])
    def test_exponential_matches_root_finder(self, base, phi):
        assert min_delta_exponential(base, 0.75) == pytest.approx(
            exp_zero_crossing(base, 0.75, phi), abs=1e-9)

    @pytest.mark.parametrize("phi", [0.1, 0.5, 1.0, 3.0])
    def test_linear_matches_root_finder(self, phi):
        assert min_delta_linear(phi, 0.75) == pytest.approx(
            linear_zero_crossing(0.75, phi), abs=1e-9)


class TestSurface:
    def test_linear_zero_delta(self):
        table = shaping_surface(None, 0.8, [0.0, 0.5, 1.0], [0.0])
        np.testing.assert_allclose(table[:, 2], [0.0, -0.1, -0.2], atol=1e-15)
        assert np.all(table[:, 2] <= 0)

    def test_exponential_value(self):
        (row,) = shaping_surface(8.0, 0.75, [0.0], [0.2])
        assert row[2] == pytest.approx(0.75 * 8 ** 0.2 - 1)
        assert row[2] == pytest.approx(0.1368, abs=5e-5)

    def test_linear_value(self):
        (row,) = shaping_surface(None, 0.75, [0.0], [0.5])
        assert row[2] == pytest.approx(0.375, abs=1e-15)

    def test_layout_is_phi_major(self):
        table = shaping_surface(None, 0.9, [0.0, 1.0], [-0.1, 0.0, 0.1])
        assert table.shape == (6, 3)
        np.testing.assert_array_equal(table[:3, 0], [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(table[:3, 1], [-0.1, 0.0, 0.1])

    def test_rejects_non_finite_grid(self):
        with pytest.raises(ConfigurationError):
            shaping_surface(None, 0.9, [math.nan], [0.0])

    def test_csv(self, tmp_path):
        p = tmp_path / "s.csv"
        write_surface_csv(p, {"linear": shaping_surface(None, 0.75, [0.0], [0.5])}, 0.75)
        assert p.read_text().splitlines() == ["potential,gamma,phi_s,delta,F",
                                              "linear,0.75,0,0.5,0.375"]


def test_report_summary_and_csv(tmp_path):
    env = Gridworld(GridworldConfig(4, 4))
    report = audit(AuditInput(grid_spec(env.config), 0.0, 0.0, 1.0,
                              enumerate_transitions(env)))
    text = report.summary()
    assert ANALYSIS_LABEL in text
    assert "potential bounds: (0, 1)" in text
    p = tmp_path / "audit.csv"
    write_audit_csv(p, report)
    lines = p.read_text().splitlines()
    assert lines[0] == f"# {ANALYSIS_LABEL}"
    assert lines[1].startswith("step,a,kind,r,shaped_r,threshold,verdict,boundary")
    assert len(lines) == 2 + len(report.rows)


def test_audit_input_validation():
    spec = PotentialSpec(Constant(0.0), normalize=False)
    with pytest.raises(ConfigurationError):
        AuditInput(spec, 0.0, 0.0, 1.0, [])
    with pytest.raises(ConfigurationError):
        AuditInput(spec, 0.0, math.inf, 1.0, [Transition(0, 0, 1, 0.0, NT)])
