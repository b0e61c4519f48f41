#!/usr/bin/env python3
"""
Tests for the shared substrate: Hermitian operators, dilations, states,
query ledger, codec and run log.
"""

import json
import math
import os
import sys

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(__file__))

from core import codec, config
from core.errors import (
    NormBoundError,
    NotHermitianError,
    NullPostselectionError,
    SpectrumPromiseError,
    ValidationError,
)
from core.linalg import (
    BlockEncoding,
    HermitianOperator,
    QueryLedger,
    StateVector,
    apply_postselected,
    dilate_unitary,
    eigendecompose,
    extract_block,
    haar_unitary,
    porter_thomas,
    random_hermitian,
    trace_distance,
)
from core.runlog import log_event


def test_eigendecomposition_reconstructs():
    rng = np.random.default_rng(7)
    h = random_hermitian(12, rng)
    lam, vec = eigendecompose(h)
    assert np.all(np.diff(lam) >= 0)
    rebuilt = (vec * lam) @ vec.conj().T
    assert np.max(np.abs(rebuilt - h)) < config.RECONSTRUCT_TOL
    assert np.max(np.abs(vec.conj().T @ vec - np.eye(12))) < 1e-10


def test_non_hermitian_rejected_with_asymmetry():
    m = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(NotHermitianError) as info:
        HermitianOperator(m)
    assert info.value.details["max_asymmetry"] == pytest.approx(2.0)
    assert info.value.exit_code == 2


def test_kappa_and_solve():
    op = HermitianOperator(np.diag([0.25, 0.5, 1.0]))
    assert op.kappa == pytest.approx(4.0)
    x = op.solve(np.array([1.0, 1.0, 1.0]))
    assert np.allclose(x, [4.0, 2.0, 1.0])


def test_positive_definite_check():
    with pytest.raises(SpectrumPromiseError):
        HermitianOperator(np.diag([1.0, -0.5]), positive_definite=True)


def test_b_domain_check():
    HermitianOperator(np.diag([-1.0, 0.75]), kappa_bound=4.0, eta=1.0, b_operator=True)
    with pytest.raises(SpectrumPromiseError):
        HermitianOperator(np.diag([-1.0, 0.8]), kappa_bound=4.0, eta=1.0, b_operator=True)


def test_eta_out_of_range():
    with pytest.raises(ValidationError):
        HermitianOperator(np.eye(2), eta=0.0)


def test_dilation_is_unitary_with_block():
    rng = np.random.default_rng(3)
    m = random_hermitian(8, rng, spectral_radius=0.9)
    enc = dilate_unitary(m)
    checks = enc.verify()
    assert checks["unitarity_residual"] < 1e-10
    assert np.max(np.abs(enc.block() - m)) < 1e-12
    assert np.max(np.abs(extract_block(enc) - m)) < 1e-12
    assert enc.ancillas == 1 and enc.core_ancillas == 1


def test_dilation_rejects_large_norm():
    with pytest.raises(NormBoundError):
        dilate_unitary(np.diag([1.5, 0.2]))


def test_block_encoding_ancilla_declaration():
    u = np.eye(8, dtype=complex)
    with pytest.raises(ValidationError):
        BlockEncoding(unitary=u, ancillas=1, target_dim=2)
    enc = BlockEncoding(unitary=u, ancillas=4, target_dim=2)
    assert enc.core_ancillas == 2


def test_apply_postselected_probability():
    enc = dilate_unitary(np.diag([0.5, 1.0]), query_cost={"U_A": 1})
    ledger = QueryLedger()
    b = StateVector(np.array([1.0, 1.0]) / math.sqrt(2.0))
    out, p = apply_postselected(enc, b, ledger)
    assert p == pytest.approx(0.5 * (0.25 + 1.0))
    assert out.normalized
    assert ledger["U_A"] == 1


def test_apply_postselected_null():
    enc = dilate_unitary(np.diag([0.0, 1.0]))
    with pytest.raises(NullPostselectionError):
        apply_postselected(enc, StateVector.basis(2, 0))


def test_trace_distance_small_angle_accuracy():
    theta = 1e-9
    a = np.array([1.0, 0.0])
    b = np.array([math.cos(theta), math.sin(theta)])
    assert trace_distance(a, b) == pytest.approx(theta, rel=1e-6)
    assert trace_distance(a, 1j * a) == pytest.approx(0.0, abs=1e-15)


def test_haar_unitary_and_porter_thomas():
    rng = np.random.default_rng(11)
    u = haar_unitary(6, rng)
    assert np.max(np.abs(u @ u.conj().T - np.eye(6))) < 1e-12
    v = porter_thomas(32, rng)
    assert np.linalg.norm(v) == pytest.approx(1.0)


def test_ledger_rejects_unknown_oracle():
    ledger = QueryLedger()
    ledger.charge("U_B", 3)
    other = QueryLedger()
    other.charge("U_b", 2)
    ledger.absorb(other, times=2)
    assert ledger.snapshot()["U_b"] == 4
    assert ledger.total() == 7
    with pytest.raises(ValidationError):
        ledger.charge("U_X")
    with pytest.raises(ValidationError):
        ledger.charge("U_B", -1)


def test_codec_17_digit_doubles():
    text = codec.dumps({"x": 0.1, "n": 3, "ok": True, "z": complex(1.0, -2.0)})
    assert "0.10000000000000001" in text
    doc = json.loads(text)
    assert doc["x"] == 0.1
    assert doc["z"] == {"re": 1.0, "im": -2.0}


def test_matrix_json_round_trip_is_exact():
    rng = np.random.default_rng(5)
    h = random_hermitian(5, rng)
    doc = json.loads(codec.dumps(codec.matrix_to_json(h)))
    assert np.array_equal(codec.matrix_from_json(doc), h)


def test_sparse_json_duplicates_rejected():
    with pytest.raises(ValidationError):
        codec.sparse_from_json({"positions": [1, 1], "re": [1.0, 2.0], "im": [0.0, 0.0]})


def test_runlog_writes_json_lines(isolated_runlog):
    log_event("unit_test", value=np.float64(1.5), vec=np.arange(3))
    lines = isolated_runlog.log_file.read_text().splitlines()
    entry = json.loads(lines[-1])
    assert entry["action"] == "unit_test"
    assert entry["details"] == {"value": 1.5, "vec": [0, 1, 2]}
    assert entry["session"] == isolated_runlog.session_id


def test_resolve_seed_env(monkeypatch):
    monkeypatch.setenv("PDQLS_SEED", "99")
    assert config.resolve_seed() == 99
    assert config.resolve_seed(5) == 5
