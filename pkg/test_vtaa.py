#!/usr/bin/env python3
"""
Tests for the variable-stopping-time solver: schedules, branch
amplitudes, amplification, Gamma factor and the cost bound.
"""

import math
import os
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(__file__))

from core.errors import SpectrumPromiseError, ValidationError
from core.linalg import HermitianOperator, StateVector
from modules.instances import random_pd_instance
from modules.solver import solve_postselect
from modules.vtaa import (
    _stage_scalars,
    build_schedule,
    choose_rounds,
    eps_tilde_for,
    gamma_factor,
    simulate_vst,
    vtaa_cost_report,
)


@pytest.fixture(scope="module")
def schedule_32():
    return build_schedule(32.0, eta=1.0, eps=0.1)


def test_schedule_stage_count():
    two = build_schedule(2.0)
    assert two.m == 2
    assert two.deltas == [0.5, 0.25]
    assert build_schedule(9.0).m == 5


def test_schedule_times_and_windows(schedule_32):
    s = schedule_32
    assert s.m == 6
    assert s.eps_tilde == pytest.approx(eps_tilde_for(32.0, 0.1))
    assert s.eps_tilde == pytest.approx(0.1 / (4 * 32 * math.sqrt(6.0)))
    running = 0
    for stage in s.stages:
        running += stage.deg_w + stage.deg_p
        assert stage.t == running
    assert s.stages[-1].deg_w == 0
    assert all(stage.deg_w > 0 for stage in s.stages[:-1])
    assert s.K == max(stage.approximant.K for stage in s.stages)
    assert s.to_json()["m"] == 6


def test_schedule_rejects_bad_parameters():
    with pytest.raises(ValidationError):
        build_schedule(1.0)
    with pytest.raises(ValidationError):
        build_schedule(4.0, eta=1.5)
    with pytest.raises(ValidationError):
        build_schedule(4.0, eps=1.0)


def test_choose_rounds():
    assert choose_rounds(0.1) == 4
    assert choose_rounds(1.4) == 0
    # interval [0.15, 0.81] holds no integer
    assert choose_rounds(0.6) == 0


def test_identity_returns_input():
    schedule = build_schedule(2.0, eps=0.1)
    b = StateVector(np.array([0.6, 0.0, 0.8, 0.0]))
    x, report = simulate_vst(HermitianOperator.identity(4), b, schedule)
    assert report.trace_error < 1e-9
    assert abs(np.vdot(x.amplitudes, b.amplitudes)) == pytest.approx(1.0, abs=1e-9)


def test_seeded_instance_meets_precision(schedule_32):
    inst = random_pd_instance(64, 32.0, seed=17)
    x, report = simulate_vst(inst.operator, inst.b, schedule_32)
    assert report.trace_error <= 0.1
    assert report.p_succ >= 0.25
    assert report.norm_drift < 1e-9
    assert report.uncompute_leakage >= 0.0
    assert abs(np.linalg.norm(x.amplitudes) - 1.0) < 1e-12


@pytest.mark.parametrize("seed", range(25))
def test_amplified_runs_over_seeded_instances(schedule_32, seed):
    inst = random_pd_instance(32, 32.0, seed=seed)
    _, report = simulate_vst(inst.operator, inst.b, schedule_32)
    assert report.p_succ >= 0.25
    assert report.trace_error <= 0.1
    assert 1.0 - 1e-12 <= gamma_factor(inst.operator, inst.b) <= math.sqrt(32.0) + 1e-12


def test_unamplified_branches_match_closed_form(schedule_32):
    inst = random_pd_instance(32, 32.0, seed=3)
    m = schedule_32.m
    _, report = simulate_vst(inst.operator, inst.b, schedule_32, amplify=[0] * m)
    assert report.p_succ == pytest.approx(report.p_succ_unamplified, abs=1e-9)
    assert sum(report.stopping_probabilities) + report.final_unstopped == pytest.approx(1.0, abs=1e-9)
    assert all(s["k"] == 0 for s in report.stages)
    assert report.queries["U_b"] == 1

    lam, vec = inst.operator.spectrum
    beta = vec.conj().T @ inst.b.amplitudes
    w, p, _, sp, m_prev = _stage_scalars(schedule_32, 1.0 - lam)
    for j in range(m):
        assert np.max(np.abs(report.state.branches[j, 1] - m_prev[j] * w[j] * p[j] * beta)) < 1e-9
        assert np.max(np.abs(report.state.branches[j, 0] - m_prev[j] * w[j] * sp[j] * beta)) < 1e-9


def test_query_recursion_without_amplification(schedule_32):
    inst = random_pd_instance(16, 32.0, seed=8)
    _, report = simulate_vst(inst.operator, inst.b, schedule_32, amplify=[0] * schedule_32.m)
    t_m = schedule_32.stopping_times[-1]
    uncompute = sum(stage.deg_w for stage in schedule_32.stages)
    assert report.queries["U_B"] == t_m + uncompute


def test_explicit_rounds_validated(schedule_32):
    inst = random_pd_instance(8, 32.0, seed=1)
    with pytest.raises(ValidationError):
        simulate_vst(inst.operator, inst.b, schedule_32, amplify=[1, 1])


def test_spectrum_promise_checked():
    schedule = build_schedule(4.0)
    with pytest.raises(SpectrumPromiseError):
        simulate_vst(np.diag([0.1, 1.0]), StateVector.basis(2, 0), schedule)


def test_gamma_factor_extremes():
    kappa = 16.0
    low = random_pd_instance(8, kappa, seed=2, b_model="fixed_eigvec", eigenvalue=1.0 / kappa)
    high = random_pd_instance(8, kappa, seed=2, b_model="fixed_eigvec", eigenvalue=1.0)
    assert gamma_factor(low.operator, low.b) == pytest.approx(1.0, rel=1e-9)
    assert gamma_factor(high.operator, high.b) == pytest.approx(4.0, rel=1e-9)
    for seed in range(5):
        inst = random_pd_instance(16, kappa, seed=seed)
        g = gamma_factor(inst.operator, inst.b)
        assert 1.0 - 1e-12 <= g <= 4.0 + 1e-12


def test_cost_report_within_bound():
    schedule = build_schedule(4.0, eps=0.1)
    inst = random_pd_instance(16, 4.0, seed=11)
    _, report = simulate_vst(inst.operator, inst.b, schedule)
    cost = vtaa_cost_report(schedule, report, inverse_norm=inst.meta["inverse_norm"])
    assert cost["within_bound"]
    assert cost["ratio"] <= 50.0
    assert cost["QUB"] == report.queries["U_B"]
    assert "QUb_ratio" in cost
    assert cost["preprocessing_cost"] > 0.0


def test_query_slope_below_linear():
    """U_B counts against kappa, next to fixed-degree amplification on the same systems."""
    kappas = [8.0, 16.0, 32.0, 64.0]
    counts, amplified = [], []
    for kappa in kappas:
        schedule = build_schedule(kappa, eps=0.1)
        inst = random_pd_instance(32, kappa, seed=5)
        _, report = simulate_vst(inst.operator, inst.b, schedule)
        counts.append(report.queries["U_B"])
        _, plain = solve_postselect(inst.operator, inst.b, eps=0.1, mode="amplify")
        amplified.append(plain.queries["U_B"])
    slope = np.polyfit(np.log(kappas), np.log(counts), 1)[0]
    assert slope <= 1.1
    assert np.polyfit(np.log(kappas), np.log(amplified), 1)[0] >= 1.0
