#!/usr/bin/env python3
"""
Tests for the instance families: search, promise majority, expanders,
clock systems, random PD systems and deterministic regeneration.
"""

import json
import math
import os
import sys

import networkx as nx
import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(__file__))

from core import codec
from core.errors import InstanceError, TermSpecError
from modules.instances import (
    CNOT,
    Gate,
    QlsInstance,
    circuit_output,
    expander_instance,
    fk_inverse_series,
    fk_m_matrix,
    generate_instance,
    grover_diagonal,
    load_instance,
    majority_string,
    plus_overlap,
    promise_majority_instance,
    random_circuit,
    random_pd_instance,
    feynman_kitaev_sumqls,
    signed_majority_instance,
    sparse_rhs,
    spectral_gap,
)
from modules.solver import solve_postselect


# ----------------------------------------------------------------------
# search
# ----------------------------------------------------------------------
def test_grover_balanced_is_identity_like():
    inst = grover_diagonal(8, 4, marked=[0, 2, 4, 6])
    assert inst.kappa == pytest.approx(1.0)
    assert inst.meta["marked_probability"] == pytest.approx(0.5)


def test_grover_closed_form():
    inst = grover_diagonal(16, 2, marked=[3, 11])
    assert inst.kappa == pytest.approx(math.sqrt(7.0))
    assert inst.meta["marked_probability"] == pytest.approx(0.5)
    x = inst.direct_solution()
    x /= np.linalg.norm(x)
    assert np.allclose(x, inst.meta["solution"])
    assert np.sum(np.abs(x[[3, 11]]) ** 2) == pytest.approx(0.5)


def test_grover_marked_set_drawn_from_seed():
    a = grover_diagonal(32, 3, seed=4)
    b = grover_diagonal(32, 3, seed=4)
    assert a.meta["marked"] == b.meta["marked"]
    assert len(set(a.meta["marked"])) == 3


def test_grover_rejects_bad_sizes():
    with pytest.raises(InstanceError):
        grover_diagonal(8, 5)
    with pytest.raises(InstanceError):
        grover_diagonal(8, 2, marked=[1, 1])


def test_grover_solver_hits_marked_half():
    inst = grover_diagonal(64, 4, seed=1)
    x, report = solve_postselect(inst.solver_operator(), inst.b, eps=0.01)
    marked = inst.meta["marked"]
    assert np.sum(np.abs(x.amplitudes[marked]) ** 2) == pytest.approx(0.5, abs=0.02)
    assert report.trace_error <= 0.01


def test_grover_queries_grow_faster_than_search():
    counts = []
    kappas = [2, 4, 8, 16]
    for k in kappas:
        inst = grover_diagonal(k * k + 1, 1, marked=[0])
        _, report = solve_postselect(inst.solver_operator(), inst.b, eps=0.1, mode="amplify")
        counts.append(report.queries["U_B"])
    slope = np.polyfit(np.log(kappas), np.log(counts), 1)[0]
    assert slope >= 1.0


# ----------------------------------------------------------------------
# promise majority and expanders
# ----------------------------------------------------------------------
def test_majority_string_margin():
    y = majority_string(10, 4, 1, seed=3)
    assert sum(y) == 7
    with pytest.raises(InstanceError):
        majority_string(10, 3, 0)


@pytest.mark.parametrize("f", [0, 1])
def test_promise_majority_overlap(f):
    inst = promise_majority_instance(100, 10, f, seed=2)
    assert inst.kappa == pytest.approx(11.0)
    assert inst.measured_kappa() == pytest.approx(11.0)
    expected = (1.0 + (-1.0) ** f * math.sqrt(1.1)) / math.sqrt(6.0)
    assert plus_overlap(inst) == pytest.approx(expected, abs=1e-9)
    assert inst.meta["plus_overlap"] == pytest.approx(expected)


def test_promise_majority_checks_string():
    with pytest.raises(InstanceError):
        promise_majority_instance(4, 2, y=[0, 1, 0, 1])
    with pytest.raises(InstanceError):
        promise_majority_instance(4, 2, f=1, y=[0, 0, 0, 1])


@pytest.mark.parametrize("f", [0, 1])
def test_signed_majority_moves_string_into_matrix(f):
    base = promise_majority_instance(100, 10, f, seed=2)
    inst = signed_majority_instance(100, 10, f, seed=2)
    signs = np.asarray(inst.meta["twist"])
    assert np.array_equal(signs[:-1], (-1.0) ** np.asarray(base.meta["y"]))
    assert np.allclose(inst.matrix, np.outer(signs, signs) * base.matrix, atol=0.0)
    u = np.ones(101)
    u[-1] = math.sqrt(110.0)
    assert np.allclose(inst.b.amplitudes, u / np.linalg.norm(u))
    assert np.allclose(inst.direct_solution(), signs * base.direct_solution(), atol=1e-12)
    expected = (1.0 + (-1.0) ** f * math.sqrt(1.1)) / math.sqrt(6.0)
    assert plus_overlap(inst) == pytest.approx(expected, abs=1e-9)
    assert inst.kappa == pytest.approx(11.0)


def test_signed_majority_solves_directly():
    inst = signed_majority_instance(40, 8, 1, seed=5)
    x, report = solve_postselect(inst.solver_operator(), inst.b, eps=0.01)
    assert report.trace_error <= 0.04
    direct = inst.direct_solution()
    assert abs(np.vdot(x.amplitudes, direct / np.linalg.norm(direct))) ** 2 >= 1.0 - 0.08


def test_spectral_gap_of_complete_graph():
    g = nx.complete_graph(5)
    walk = nx.to_numpy_array(g) / 4.0
    assert spectral_gap(walk) == pytest.approx(0.75)


@pytest.mark.parametrize("f,band", [(0, "high"), (1, "low")])
def test_expander_overlap_bands(f, band):
    inst = expander_instance(64, 6, 16, f, seed=7)
    assert inst.meta["gap"] >= 0.2
    assert inst.meta["band"] == band
    overlap = abs(plus_overlap(inst))
    if band == "high":
        assert overlap >= inst.meta["band_bounds"]["high"]
    else:
        assert overlap <= inst.meta["band_bounds"]["low"]
    assert inst.measured_kappa() == pytest.approx(inst.kappa)


@pytest.mark.parametrize("f", [0, 1])
def test_sign_conjugated_expander(f):
    plain = expander_instance(64, 6, 16, f, seed=7)
    twisted = expander_instance(64, 6, 16, f, seed=7, dad=True)
    signs = np.asarray(twisted.meta["twist"])
    assert np.array_equal(signs[:-1], (-1.0) ** np.asarray(plain.meta["y"]))
    assert np.allclose(twisted.matrix, np.outer(signs, signs) * plain.matrix, atol=0.0)
    # the sparsity pattern carries no information about y
    assert np.array_equal(twisted.matrix != 0, plain.matrix != 0)
    assert np.all(twisted.b.amplitudes.real > 0.0)
    assert plus_overlap(twisted) == pytest.approx(plus_overlap(plain), abs=1e-9)
    assert twisted.params["dad"] is True
    again = generate_instance("expander", 7, {"N": 64, "d": 6, "M": 16, "f": f, "dad": True})
    assert np.array_equal(again.matrix, twisted.matrix)


def test_expander_supplied_graph_validated():
    with pytest.raises(InstanceError):
        expander_instance(8, 3, 2, 0, graph=nx.cycle_graph(8))


# ----------------------------------------------------------------------
# clock systems
# ----------------------------------------------------------------------
def test_gate_validation():
    with pytest.raises(TermSpecError):
        Gate(np.array([[1.0, 1.0], [0.0, 1.0]]), (0,))
    with pytest.raises(TermSpecError):
        Gate(np.eye(4), (1, 1))


def test_clock_inverse_series():
    circuit = random_circuit(2, 3, seed=4)
    m = fk_m_matrix(circuit, 2)
    assert np.allclose(fk_inverse_series(circuit, 2) @ m, np.eye(m.shape[0]), atol=1e-10)


def test_clock_sum_equals_gram_of_m():
    circuit = random_circuit(2, 3, seed=8)
    inst = feynman_kitaev_sumqls(circuit, 2)
    m = fk_m_matrix(circuit, 2)
    assert np.allclose(inst.spec.assemble(), m.conj().T @ m, atol=1e-12)
    assert inst.spec.J == 9
    assert inst.meta["kappa_measured"] <= inst.meta["kappa_bound"]
    assert inst.meta["d_b"] <= 3


@pytest.mark.parametrize("n,t", [(3, 4), (2, 3)])
@pytest.mark.parametrize("seed", range(5))
def test_clock_rhs_is_three_sparse(n, t, seed):
    circuit = random_circuit(n, t, seed=seed)
    assert all(np.array_equal(g.matrix, CNOT) for g in circuit if len(g.qubits) == 2)
    assert feynman_kitaev_sumqls(circuit, n).meta["d_b"] <= 3


def test_haar_gate_set_and_unknown_gate_set():
    inst = feynman_kitaev_sumqls(random_circuit(2, 3, seed=1, gate_set="haar"), 2)
    assert inst.meta["d_b"] <= 1 + 4
    with pytest.raises(InstanceError):
        random_circuit(2, 3, gate_set="toffoli")


def test_clock_window_and_overlap_bound():
    t, n = 3, 2
    circuit = random_circuit(n, t, seed=12)
    inst = feynman_kitaev_sumqls(circuit, n)
    x = inst.direct_solution()
    x = x / np.linalg.norm(x)
    rows = x.reshape(3 * t, 1 << n)[t:2 * t]
    prob = float(np.sum(np.abs(rows) ** 2))
    assert prob >= 0.11
    assert prob == pytest.approx(inst.meta["window_probability"], abs=1e-9)
    out = circuit_output(circuit, n)
    for row in rows:
        assert abs(np.vdot(out, row)) ** 2 == pytest.approx(np.vdot(row, row).real, rel=1e-9)


# ----------------------------------------------------------------------
# random systems and regeneration
# ----------------------------------------------------------------------
def test_random_pd_spectrum_pinned():
    inst = random_pd_instance(16, 20.0, seed=3)
    lam = inst.operator.eigenvalues
    assert lam[0] == pytest.approx(1.0 / 20.0)
    assert lam[-1] == pytest.approx(1.0)
    assert inst.meta["inverse_norm"] == pytest.approx(np.linalg.norm(inst.direct_solution()))


def test_random_pd_fixed_eigvec():
    inst = random_pd_instance(8, 10.0, seed=2, b_model="fixed_eigvec", eigenvalue=0.5)
    assert inst.meta["inverse_norm"] == pytest.approx(2.0)
    with pytest.raises(InstanceError):
        random_pd_instance(8, 10.0, seed=2, b_model="fixed_eigvec", eigenvalue=0.01)
    with pytest.raises(InstanceError):
        random_pd_instance(8, 10.0, b_model="gaussian")


@pytest.mark.parametrize(
    "family,params",
    [
        ("grover", {"N": 16, "M": 2}),
        ("promise_majority", {"N": 10, "M": 2, "f": 0}),
        ("signed_majority", {"N": 10, "M": 2, "f": 1}),
        ("random_pd", {"N": 8, "kappa": 5.0}),
        ("random_sum", {"n": 3, "J": 2, "s": 2}),
        ("feynman_kitaev", {"n": 1, "T": 2}),
        ("identity", {"N": 4, "index": 2}),
    ],
)
def test_regeneration_and_json(family, params, tmp_path):
    first = generate_instance(family, 42, params)
    second = generate_instance(family, 42, params)
    assert np.array_equal(first.matrix, second.matrix)
    assert np.array_equal(first.b.amplitudes, second.b.amplitudes)

    path = tmp_path / "instance.json"
    codec.dump(first, path)
    loaded = load_instance(path)
    assert loaded.family == family
    assert np.allclose(loaded.matrix, first.matrix, atol=0.0)
    assert np.array_equal(loaded.b.amplitudes, first.b.amplitudes)
    assert json.loads(path.read_text())["kappa"] == first.kappa


def test_unknown_family_and_missing_params():
    with pytest.raises(InstanceError):
        generate_instance("sudoku", 1, {})
    with pytest.raises(InstanceError):
        generate_instance("grover", 1, {"N": 8})


def test_instance_needs_one_source():
    inst = generate_instance("identity", None, {"N": 2})
    with pytest.raises(InstanceError):
        QlsInstance("identity", None, {}, inst.b, 1.0)


def test_sparse_rhs_envelope():
    inst = generate_instance("identity", None, {"N": 4, "index": 3})
    assert sparse_rhs(inst) == {"positions": [3], "re": [1.0], "im": [0.0]}
