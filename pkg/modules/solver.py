"""
PDQLS SKILL MODULE: POST-SELECTION SOLVER
=========================================
This file is part of THE LAB - solver pipelines.

Solve A x = b for positive-definite A by encoding A^{-1}/(eta K), applying
it to |b> and post-selecting the ancillas, optionally boosted by
amplitude amplification in closed form. Reports success probabilities,
oracle counts, the trace error against a direct solve and the regime of
the input vector.
"""

import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from core import config
from core.errors import SpectrumPromiseError, ValidationError
from core.linalg import (
    HermitianOperator,
    QueryLedger,
    StateVector,
    apply_postselected,
    as_operator,
    as_state,
    dilate_unitary,
    trace_distance,
)
from core.runlog import log_event
from modules.blockenc import SparseMatrixOracle, gram_encoding, inverse_encoding

SOLVER_SCHEMA = (
    "N", "kappa", "eta", "eps", "ell", "K", "p_succ", "k",
    "QUb", "QUB", "trace_error", "regime", "seed",
)


@dataclass
class SolveReport:
    """Outcome of one post-selection / amplification solve."""

    N: int
    kappa: float
    eta: float
    eps: float
    ell: int
    K: float
    p_succ: float
    p_succ_ideal: float
    aa_rounds: int
    amplified_success: float
    expected_repetitions: float
    trace_error: float
    queries: Dict[str, int]
    regime: str
    statistic: float
    mode: str
    seed: Optional[int] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        doc = {k: v for k, v in self.__dict__.items() if k != "extra"}
        doc.update(self.extra)
        return doc

    def csv_row(self) -> Dict[str, Any]:
        return {
            "N": self.N,
            "kappa": self.kappa,
            "eta": self.eta,
            "eps": self.eps,
            "ell": self.ell,
            "K": self.K,
            "p_succ": self.p_succ,
            "k": self.aa_rounds,
            "QUb": self.queries.get("U_b", 0),
            "QUB": self.queries.get("U_B", 0),
            "trace_error": self.trace_error,
            "regime": self.regime,
            "seed": "" if self.seed is None else self.seed,
        }


def aa_rounds(p_succ: float) -> int:
    """k = round(pi / (4 theta) - 1/2) = floor(pi / (4 theta)), theta = arcsin sqrt(p)."""
    theta = math.asin(math.sqrt(min(1.0, max(0.0, p_succ))))
    if theta == 0.0:
        raise ValidationError("amplification needs a positive success probability")
    return int(math.floor(math.pi / (4.0 * theta)))


def regime_classify(
    a: Union[HermitianOperator, np.ndarray],
    b: Union[StateVector, np.ndarray],
    kappa: Optional[float] = None,
) -> Tuple[str, float]:
    """
    Label |b> by the statistic ||A^{-1} b||.

    Args:
        a: Positive-definite operator
        b: Normalized state
        kappa: Condition-number bound (default: declared, else measured)

    Returns:
        ("worst" if <= 2, "best" if >= kappa/2, else "average", statistic)
    """
    op = as_operator(a)
    state = as_state(b)
    stat = float(np.linalg.norm(op.solve(state.amplitudes)))
    k = kappa or op.kappa_bound or op.kappa
    if stat <= config.WORST_THRESHOLD:
        return "worst", stat
    if stat >= k / 2.0:
        return "best", stat
    return "average", stat


def _spectrum_kappa(op: HermitianOperator) -> float:
    op.check_positive_definite()
    kappa = op.kappa_bound if op.kappa_bound is not None else 1.0 / op.lambda_min
    lo, hi = op.lambda_min, op.lambda_max
    if lo < 1.0 / kappa - 1e-12 * max(1.0, 1.0 / kappa) or hi > 1.0 + 1e-12:
        raise SpectrumPromiseError(
            "spectrum outside [1/kappa, 1]", {"lambda_min": lo, "lambda_max": hi, "kappa": kappa}
        )
    return kappa


def solve_postselect(
    a: Union[HermitianOperator, np.ndarray],
    b: Union[StateVector, np.ndarray],
    eta: float = 1.0,
    eps: float = 0.01,
    mode: str = "postselect",
    encoder: str = "dilation",
    ledger: Optional[QueryLedger] = None,
    seed: Optional[int] = None,
) -> Tuple[StateVector, SolveReport]:
    """
    Approximate |A^{-1} b> through the inverse block-encoding.

    Args:
        a: Positive-definite A with spectrum in [1/kappa, 1]
        b: Normalized right-hand side
        eta: Rescaling constant of B = I - eta*A
        eps: Target precision; half goes to the encoding error
        mode: "postselect" (one attempt, repetitions reported) or "amplify"
        encoder: "dilation" (spectral) or "gram" (diagonally dominant A, eta = 1)
        ledger: Solve ledger (a fresh one is used when omitted)
        seed: Recorded in the report

    Returns:
        (output state, SolveReport)
    """
    if mode not in ("postselect", "amplify"):
        raise ValidationError(f"unknown solve mode {mode!r}")
    op = as_operator(a)
    state = as_state(b)
    if not state.normalized:
        raise ValidationError("right-hand side must be normalized", {"norm": state.norm})
    kappa = _spectrum_kappa(op)
    n = op.dim

    if encoder == "dilation":
        lam, vec = op.spectrum
        b_op = HermitianOperator.from_spectrum(1.0 - eta * lam, vec)
        e_b = dilate_unitary(b_op, query_cost={"U_B": 1}, label="B")
    elif encoder == "gram":
        if eta != 1.0:
            raise ValidationError("the Gram construction encodes I - A (eta = 1)")
        e_b = gram_encoding(SparseMatrixOracle.from_dense(op.entries))
        e_b.query_cost = {"U_B": 1, **e_b.query_cost}
    else:
        raise ValidationError(f"unknown encoder {encoder!r}")

    build_ledger = QueryLedger()
    enc = inverse_encoding(e_b, kappa, eta, eps / 2.0, build_ledger)
    K = float(enc.cost_model["K"])
    ell = int(enc.cost_model["ell"])

    ledger = ledger if ledger is not None else QueryLedger()
    x, p_succ = apply_postselected(enc, state)

    exact = op.solve(state.amplitudes)
    p_ideal = float(np.vdot(exact, exact).real) / (eta * K) ** 2
    trace_error = trace_distance(x, exact)
    regime, stat = regime_classify(op, state, kappa)

    if mode == "amplify":
        k = aa_rounds(p_succ)
        theta = math.asin(math.sqrt(p_succ))
        amplified = math.sin((2 * k + 1) * theta) ** 2
        repetitions = 1.0 / amplified
        ledger.charge("U_b", 2 * k + 1)
        ledger.charge_all(enc.query_cost, 2 * k + 1)
    else:
        k = 0
        amplified = p_succ
        repetitions = 1.0 / p_succ
        ledger.charge("U_b", 1)
        ledger.charge_all(enc.query_cost)

    report = SolveReport(
        N=n,
        kappa=kappa,
        eta=eta,
        eps=eps,
        ell=ell,
        K=K,
        p_succ=p_succ,
        p_succ_ideal=p_ideal,
        aa_rounds=k,
        amplified_success=amplified,
        expected_repetitions=repetitions,
        trace_error=trace_error,
        queries=ledger.snapshot(),
        regime=regime,
        statistic=stat,
        mode=mode,
        seed=seed,
        extra={"degree": int(enc.cost_model["degree"]), "encoder": encoder, "encoding_eps": enc.eps},
    )
    log_event(
        "solve_postselect",
        N=n, kappa=kappa, eta=eta, eps=eps, mode=mode, ell=ell, K=K,
        p_succ=p_succ, k=k, trace_error=trace_error, regime=regime,
    )
    return x, report


def solve_batch(
    problems: List[Tuple[HermitianOperator, StateVector]],
    **kwargs: Any,
) -> List[SolveReport]:
    """Solve several instances with one parameter set; reports in input order."""
    return [solve_postselect(a, b, **kwargs)[1] for a, b in problems]
