#!/usr/bin/env python3
"""
Tests for the post-selection solver: success probability, amplification
rounds, trace error, regime labels and CSV rows.
"""

import math
import os
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(__file__))

from core.errors import SpectrumPromiseError, ValidationError
from core.linalg import HermitianOperator, StateVector, haar_unitary, porter_thomas
from modules.instances import random_pd_instance
from modules.solver import (
    SOLVER_SCHEMA,
    aa_rounds,
    regime_classify,
    solve_batch,
    solve_postselect,
)


def _random_pd(n, kappa, seed):
    rng = np.random.default_rng(seed)
    lam = np.concatenate([[1.0 / kappa, 1.0], rng.uniform(1.0 / kappa, 1.0, n - 2)])
    return HermitianOperator.from_spectrum(lam, haar_unitary(n, rng), kappa_bound=kappa), porter_thomas(n, rng)


def test_identity_returns_input():
    b = StateVector(np.array([0.6, 0.8j, 0.0, 0.0]))
    x, report = solve_postselect(HermitianOperator.identity(4), b)
    assert report.trace_error < 1e-6
    assert abs(np.vdot(x.amplitudes, b.amplitudes)) == pytest.approx(1.0, abs=1e-8)


def test_success_probability_matches_formula():
    a, b = _random_pd(16, 8.0, seed=21)
    _, report = solve_postselect(a, b, eps=1e-7)
    expected = float(np.linalg.norm(a.solve(b)) ** 2) / report.K ** 2
    assert report.p_succ == pytest.approx(expected, rel=1e-6)
    assert report.p_succ == pytest.approx(report.p_succ_ideal, rel=1e-6)


@pytest.mark.parametrize("eps", [0.1, 0.01])
def test_trace_error_within_precision(eps):
    a, b = _random_pd(16, 16.0, seed=5)
    _, report = solve_postselect(a, b, eps=eps)
    assert report.trace_error <= 4.0 * eps


def test_postselect_query_counts():
    a, b = _random_pd(8, 4.0, seed=2)
    _, report = solve_postselect(a, b, eps=0.01)
    assert report.aa_rounds == 0
    assert report.queries["U_b"] == 1
    assert report.queries["U_B"] == 2 * report.ell - 1
    assert report.expected_repetitions == pytest.approx(1.0 / report.p_succ)


def test_amplify_mode_boosts_success():
    a, b = _random_pd(16, 32.0, seed=9)
    _, report = solve_postselect(a, b, eps=0.01, mode="amplify")
    k = report.aa_rounds
    assert k == aa_rounds(report.p_succ)
    assert report.amplified_success >= 0.4
    assert report.queries["U_b"] == 2 * k + 1
    assert report.queries["U_B"] == (2 * k + 1) * (2 * report.ell - 1)


def test_aa_rounds_values():
    assert aa_rounds(1.0) == 0
    assert aa_rounds(0.25) == 1
    theta = math.asin(math.sqrt(0.01))
    assert aa_rounds(0.01) == math.floor(math.pi / (4 * theta))
    with pytest.raises(ValidationError):
        aa_rounds(0.0)


def test_regime_labels():
    kappa = 16.0
    a = HermitianOperator(np.diag([1.0 / kappa, 0.25, 0.5, 1.0]), kappa_bound=kappa)
    assert regime_classify(a, StateVector.basis(4, 0))[0] == "best"
    assert regime_classify(a, StateVector.basis(4, 3))[0] == "worst"
    label, stat = regime_classify(a, StateVector.basis(4, 1))
    assert label == "average" and stat == pytest.approx(4.0)


def test_gram_encoder_agrees_with_dilation():
    n = 4
    a = 0.5 * np.eye(n) + 0.2 * (np.eye(n, k=1) + np.eye(n, k=-1))
    b = StateVector(np.ones(n) / 2.0)
    x_dil, rep_dil = solve_postselect(a, b, eps=0.01)
    x_gram, rep_gram = solve_postselect(a, b, eps=0.01, encoder="gram")
    assert rep_gram.trace_error <= 0.04
    assert abs(np.vdot(x_dil.amplitudes, x_gram.amplitudes)) == pytest.approx(1.0, abs=1e-6)
    assert rep_gram.queries["P_A"] > 0
    assert rep_gram.extra["encoder"] == "gram"


def test_gram_encoder_needs_unit_eta():
    with pytest.raises(ValidationError):
        solve_postselect(0.5 * np.eye(2), StateVector.basis(2, 0), eta=0.5, encoder="gram")


def test_eta_rescaling():
    a, b = _random_pd(8, 4.0, seed=13)
    _, full = solve_postselect(a, b, eta=1.0, eps=0.01)
    _, half = solve_postselect(a, b, eta=0.5, eps=0.01)
    assert half.trace_error <= 0.04
    assert half.ell >= full.ell


def test_rejects_spectrum_violations():
    with pytest.raises(SpectrumPromiseError):
        solve_postselect(np.diag([0.5, 1.5]), StateVector.basis(2, 0))
    with pytest.raises(SpectrumPromiseError):
        solve_postselect(HermitianOperator(np.diag([0.25, 1.0]), kappa_bound=2.0), StateVector.basis(2, 0))
    with pytest.raises(SpectrumPromiseError):
        solve_postselect(np.diag([-0.5, 1.0]), StateVector.basis(2, 0))


def test_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        solve_postselect(np.eye(2), StateVector(np.array([1.0, 1.0])))
    with pytest.raises(ValidationError):
        solve_postselect(np.eye(2), StateVector.basis(2, 0), mode="teleport")


def test_csv_row_columns():
    a, b = _random_pd(8, 4.0, seed=1)
    _, report = solve_postselect(a, b, seed=1)
    row = report.csv_row()
    assert tuple(row) == SOLVER_SCHEMA
    assert len(SOLVER_SCHEMA) == 13
    assert row["seed"] == 1
    assert row["QUB"] == report.queries["U_B"]


def test_solve_batch_order():
    problems = [_random_pd(8, k, seed=3) for k in (2.0, 4.0, 8.0)]
    reports = solve_batch(problems, eps=0.01)
    assert [r.kappa for r in reports] == [2.0, 4.0, 8.0]


@pytest.mark.parametrize("seed", range(50))
def test_seeded_instances_meet_formula_and_precision(seed):
    inst = random_pd_instance((8, 16, 32, 64)[seed % 4], (4.0, 16.0, 64.0)[seed % 3], seed=seed)
    eta = 1.0 if seed % 2 == 0 else 0.75
    inverse_norm = float(np.linalg.norm(inst.direct_solution()))
    _, sharp = solve_postselect(inst.operator, inst.b, eta=eta, eps=1e-8)
    assert sharp.p_succ == pytest.approx(inverse_norm ** 2 / (eta * sharp.K) ** 2, abs=1e-8)
    _, report = solve_postselect(inst.operator, inst.b, eta=eta, eps=0.01, seed=seed)
    assert report.trace_error <= 4.0 * 0.01
