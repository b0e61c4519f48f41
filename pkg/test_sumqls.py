#!/usr/bin/env python3
"""
Tests for the Sum-QLS pipeline: local Cholesky blocks, L / L^g identities,
sparse b', the overlap gamma, pseudo-inversion and the clock systems.
"""

import math
import os
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(__file__))

from core.codec import sparse_to_json
from core.errors import FactorizationError, ValidationError
from core.linalg import QueryLedger
from modules.blockenc import LocalTerm, SumHamiltonianSpec, embed_local
from modules.instances import (
    circuit_output,
    clock_window_output,
    feynman_kitaev_sumqls,
    fk_m_matrix,
    random_circuit,
    random_sum_instance,
)
from modules.sumqls import (
    SUMQLS_SCHEMA,
    apply_local_sparse,
    as_sparse,
    build_factorization,
    cholesky_blocks,
    effective_condition_number,
    gamma_overlap,
    pseudo_inverse_costs,
    pseudo_solve,
    sumqls_solve,
)


def test_cholesky_block_entries():
    h = np.array([[2.0, 1.0], [1.0, 2.0]])
    spec = SumHamiltonianSpec(1, [LocalTerm(h, (0,))])
    (blk,) = cholesky_blocks(spec)
    expected = np.array([[math.sqrt(2.0), 0.0], [1.0 / math.sqrt(2.0), math.sqrt(1.5)]])
    assert np.allclose(blk.l, expected)
    assert blk.l_inv[0, 1] == 0.0
    assert np.allclose(blk.l_inv @ blk.l, np.eye(2))
    assert blk.lambda_min == pytest.approx(1.0)
    assert blk.lambda_max == pytest.approx(3.0)


def test_singular_term_rejected():
    spec = SumHamiltonianSpec(2, [LocalTerm(np.diag([1.0, 0.0]), (0,)), LocalTerm(np.eye(2), (1,))])
    with pytest.raises(FactorizationError) as info:
        cholesky_blocks(spec)
    assert info.value.details["term"] == 0


def test_threaded_blocks_match_serial():
    inst = random_sum_instance(3, 4, 2, seed=6)
    serial = cholesky_blocks(inst.spec)
    threaded = cholesky_blocks(inst.spec, workers=3)
    assert [b.term for b in threaded] == [0, 1, 2, 3]
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.l, b.l)


def test_apply_local_sparse_matches_dense():
    rng = np.random.default_rng(4)
    dims = (3, 2, 2)
    m = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    vec = {1: 0.5 + 0.5j, 7: -1.0, 10: 2.0}
    dense = np.zeros(12, dtype=complex)
    for p, v in vec.items():
        dense[p] = v
    expected = embed_local(m, (2, 0), dims) @ dense
    got = apply_local_sparse(m, (2, 0), dims, vec)
    out = np.zeros(12, dtype=complex)
    for q, v in got.items():
        out[q] = v
    assert np.allclose(out, expected)


def test_as_sparse_inputs():
    assert as_sparse({"positions": [3, 1], "re": [1.0, 0.0], "im": [0.0, 2.0]}, 4) == {3: 1.0, 1: 2j}
    assert as_sparse(np.array([0.0, 1.0, 0.0]), 3) == {1: 1.0}
    with pytest.raises(ValidationError):
        as_sparse({5: 1.0}, 4)
    with pytest.raises(ValidationError):
        as_sparse(np.ones(3), 4)


def test_factorization_identities():
    inst = random_sum_instance(3, 3, 2, seed=12, d_b=2)
    art = build_factorization(inst.spec, inst.b)
    assert art.checks["LLdag_residual"] < 1e-9
    assert art.checks["LLg_residual"] < 1e-9
    assert art.checks["sparse_bprime_residual"] < 1e-9
    assert art.checks["pinv_direction"] < 1e-9
    assert art.L.shape == (8, 24)
    assert art.d_bprime <= art.d_b * inst.spec.J * inst.spec.max_local_dim
    assert art.b_prime.normalized


def test_zero_rhs_rejected():
    inst = random_sum_instance(2, 2, 1, seed=1)
    with pytest.raises(ValidationError):
        build_factorization(inst.spec, {})


def test_effective_condition_number_is_root_kappa():
    inst = random_sum_instance(3, 4, 2, seed=2)
    art = build_factorization(inst.spec, inst.b)
    lam = np.linalg.eigvalsh(inst.spec.assemble())
    assert effective_condition_number(art.L) == pytest.approx(math.sqrt(lam[-1] / lam[0]), rel=1e-8)


def test_single_term_has_full_overlap():
    h = np.array([[2.0, 1.0], [1.0, 2.0]])
    spec = SumHamiltonianSpec(1, [LocalTerm(h, (0,))])
    art = build_factorization(spec, np.array([1.0, 0.0]))
    gamma, diag = gamma_overlap(art)
    assert gamma == pytest.approx(0.99)
    assert diag["overlap_formula"] == pytest.approx(1.0)


def test_equal_terms_have_full_overlap():
    rng = np.random.default_rng(8)
    z = rng.standard_normal((4, 4))
    h = z @ z.T / 8.0 + 0.3 * np.eye(4)
    spec = SumHamiltonianSpec(2, [LocalTerm(h, (0, 1)), LocalTerm(h, (0, 1)), LocalTerm(h, (0, 1))])
    art = build_factorization(spec, {0: 1.0, 3: 1.0})
    _, diag = gamma_overlap(art)
    assert diag["overlap_formula"] == pytest.approx(1.0, abs=1e-10)


def test_overlap_formula_matches_projector():
    inst = random_sum_instance(3, 5, 2, seed=31)
    art = build_factorization(inst.spec, inst.b)
    gamma, diag = gamma_overlap(art)
    assert diag["overlap_gap"] < 1e-8
    assert diag["lambda_star_bound_holds"]
    assert 0.0 < gamma <= 0.99


def test_pseudo_solve_and_costs():
    inst = random_sum_instance(3, 3, 2, seed=9)
    art = build_factorization(inst.spec, inst.b)
    gamma, _ = gamma_overlap(art)
    x, cost = pseudo_solve(art, gamma, 0.01)
    assert cost["trace_error"] < 1e-8
    assert cost["kappa_tilde"] == pytest.approx(math.sqrt(art.kappa_A))
    assert cost["alpha"] == inst.spec.J * inst.spec.max_local_dim
    expected = pseudo_inverse_costs(cost["alpha"], cost["kappa_tilde"], gamma, 0.01)
    assert cost["QUL"] == pytest.approx(expected["QUL"])
    with pytest.raises(ValidationError):
        pseudo_solve(art, 0.0, 0.01)


def test_cost_logs_floored():
    small = pseudo_inverse_costs(2.0, 1.5, 1.0, 0.5)
    assert small["QUv"] == pytest.approx(1.5)
    assert small["QUL"] == pytest.approx(2.0 * 1.5)


def test_sumqls_solve_end_to_end():
    inst = random_sum_instance(4, 5, 2, seed=21, d_b=3)
    ledger = QueryLedger()
    x, report = sumqls_solve(inst.spec, sparse_to_json(*_support(inst.b.amplitudes)), eps=0.01, ledger=ledger)
    direct = np.linalg.solve(inst.spec.assemble(), inst.b.amplitudes)
    assert abs(np.vdot(x.amplitudes, direct / np.linalg.norm(direct))) == pytest.approx(1.0, abs=1e-8)
    assert report.trace_error < 1e-8
    assert report.kappa_true <= report.kappa_A * (1.0 + 1e-12)
    assert ledger["U_L"] == math.ceil(report.QUL)
    assert ledger["U_v"] == math.ceil(report.QUv)
    assert tuple(report.csv_row()) == SUMQLS_SCHEMA
    assert report.gate_estimate > 0.0


def _support(amps):
    pos = np.flatnonzero(amps)
    return pos, amps[pos]


def test_clock_system_solution_window():
    t, n = 2, 2
    inst = feynman_kitaev_sumqls(random_circuit(n, t, seed=5), n)
    x, report = sumqls_solve(inst.spec, inst.b)
    assert report.J == 3 * t
    assert report.trace_error < 1e-8
    reference = np.asarray(inst.meta["output"]["re"]) + 1j * np.asarray(inst.meta["output"]["im"])
    prob, fidelity = clock_window_output(x, t, n, reference)
    assert prob == pytest.approx(inst.meta["window_probability"], abs=1e-6)
    assert fidelity == pytest.approx(1.0, abs=1e-6)
    assert 1.0 / (report.gamma / 0.99) <= inst.meta["inverse_gamma_bound"]


@pytest.mark.parametrize("seed", range(50))
def test_factorization_over_seeded_specs(seed):
    inst = random_sum_instance(3, 2 + seed % 4, 1 + seed % 3, seed=seed, d_b=1 + seed % 3)
    art = build_factorization(inst.spec, inst.b)
    assert art.checks["LLdag_residual"] < 1e-9
    assert art.checks["LLg_residual"] < 1e-9
    lam = np.linalg.eigvalsh(inst.spec.assemble())
    assert effective_condition_number(art.L) == pytest.approx(math.sqrt(lam[-1] / lam[0]), rel=1e-6)
    _, diag = gamma_overlap(art)
    assert diag["overlap_gap"] < 1e-8
    x, report = sumqls_solve(inst.spec, inst.b, eps=0.01)
    direct = np.linalg.solve(inst.spec.assemble(), inst.b.amplitudes)
    assert report.trace_error <= 0.01
    assert abs(np.vdot(x.amplitudes, direct / np.linalg.norm(direct))) ** 2 >= 1.0 - 0.01


@pytest.mark.parametrize("n,t,seed", [(1, 2, 0), (2, 3, 1), (3, 4, 2), (2, 4, 3), (3, 3, 4)])
def test_clock_systems_over_random_circuits(n, t, seed):
    eps = 0.01
    circuit = random_circuit(n, t, seed=seed)
    inst = feynman_kitaev_sumqls(circuit, n)
    m = fk_m_matrix(circuit, n)
    assert np.allclose(inst.spec.assemble(), m.conj().T @ m, atol=1e-12)
    assert inst.meta["kappa_measured"] <= 4.0 * t * t / (1.0 - math.exp(-1.0)) ** 2
    assert inst.meta["d_b"] <= 3

    x, report = sumqls_solve(inst.spec, inst.b, eps=eps)
    assert 1.0 / (report.gamma / 0.99) <= 5.01 * t * t
    reference = circuit_output(circuit, n)
    prob, fidelity = clock_window_output(x, t, n, reference)
    assert prob >= 0.11
    assert fidelity >= 1.0 - 10.0 * eps
