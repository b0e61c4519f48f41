"""
PDQLS SKILL MODULE: SUM-QLS PRECONDITIONING
===========================================
This file is part of THE LAB - solver pipelines.

For A = sum_j H_j with local strictly positive-definite terms, the
classical side factors every local block h_j = l_j l_j^dag and forms

    L   = (L_1 ... L_J)                 in C^{N x JN},  L L^dag = A
    L^g = (1/J) stack_j L_j^{-1}        in C^{JN x N},  L L^g  = I
    |b'> proportional to L^g |b>, computed by sparse arithmetic.

The quantum side solves L^dag y = b' by pseudo-inversion of the
Hermitian extension of L; here that solve is carried out exactly by a
Moore-Penrose inverse while the query counts follow the pseudo-inversion
cost model with kappa~ = sqrt(kappa_A) and the overlap gamma.
"""

import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from core import config
from core.codec import sparse_from_json
from core.errors import FactorizationError, IdentityCheckError, NumericalCheckError, ValidationError
from core.linalg import QueryLedger, StateVector, trace_distance
from core.runlog import log_event
from modules.blockenc import SumHamiltonianSpec, embed_local

SUMQLS_SCHEMA = (
    "n", "J", "s", "d_b", "kappa_A", "gamma", "d_bprime",
    "QUL", "QUv", "gate_estimate", "trace_error",
)

SparseVector = Dict[int, complex]


@dataclass
class CholeskyBlock:
    term: int
    l: np.ndarray
    l_inv: np.ndarray
    lambda_min: float
    lambda_max: float
    residual: float


@dataclass
class FactorizationArtifacts:
    """
    Classical preconditioning products for one (spec, b).

    L and L^g are assembled densely; N <= MAX_DIM keeps that affordable.
    """

    spec: SumHamiltonianSpec
    blocks: List[CholeskyBlock]
    L: np.ndarray
    Lg: np.ndarray
    b: np.ndarray
    d_b: int
    b_prime: StateVector
    b_prime_sparse: SparseVector
    kappa_A: float
    checks: Dict[str, float] = field(default_factory=dict)

    @property
    def d_bprime(self) -> int:
        return len(self.b_prime_sparse)

    @property
    def lambda_star(self) -> float:
        return min(blk.lambda_min for blk in self.blocks)

    def summary(self) -> Dict[str, Any]:
        return {
            "n": self.spec.n,
            "J": self.spec.J,
            "N": self.spec.N,
            "d_b": self.d_b,
            "d_bprime": self.d_bprime,
            "kappa_A": self.kappa_A,
            **self.checks,
        }


# ----------------------------------------------------------------------
# local factorizations
# ----------------------------------------------------------------------
def _factor_block(j: int, h: np.ndarray) -> CholeskyBlock:
    lam = np.linalg.eigvalsh(h)
    if lam[0] <= 1e-12:
        raise FactorizationError(
            f"term {j} is not strictly positive definite", {"term": j, "lambda_min": float(lam[0])}
        )
    l = scipy.linalg.cholesky(h, lower=True)
    # inverse of a lower-triangular factor is lower-triangular
    l_inv = scipy.linalg.solve_triangular(l, np.eye(h.shape[0], dtype=complex), lower=True)
    residual = float(np.max(np.abs(l @ l.conj().T - h)))
    if residual > config.RECONSTRUCT_TOL * max(1.0, float(lam[-1])):
        raise IdentityCheckError(f"Cholesky residual of term {j} too large", {"term": j, "residual": residual})
    return CholeskyBlock(j, l, l_inv, float(lam[0]), float(lam[-1]), residual)


def cholesky_blocks(spec: SumHamiltonianSpec, workers: int = 1) -> List[CholeskyBlock]:
    """
    Factor every local term h_j = l_j l_j^dag.

    Args:
        spec: Sum-of-local-terms description of A
        workers: Thread count; the blocks are independent

    Returns:
        One CholeskyBlock per term, in term order
    """
    jobs = [(j, t.matrix) for j, t in enumerate(spec.terms)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(lambda jh: _factor_block(*jh), jobs))
    else:
        blocks = [_factor_block(j, h) for j, h in jobs]
    log_event(
        "cholesky_blocks",
        J=spec.J, lambda_min=min(b.lambda_min for b in blocks), max_residual=max(b.residual for b in blocks),
    )
    return blocks


# ----------------------------------------------------------------------
# sparse arithmetic on |b>
# ----------------------------------------------------------------------
def as_sparse(b: Union[SparseVector, Dict[str, Any], np.ndarray, StateVector], dim: int) -> SparseVector:
    """Accept a position map, the sparse JSON envelope or a dense vector."""
    if isinstance(b, StateVector):
        b = b.amplitudes
    if isinstance(b, np.ndarray):
        if b.shape != (dim,):
            raise ValidationError("right-hand side has the wrong dimension", {"dim": dim, "got": list(b.shape)})
        return {int(p): complex(b[p]) for p in np.flatnonzero(b)}
    if "positions" in b:
        b = sparse_from_json(b)
    out: SparseVector = {}
    for p, v in b.items():
        p = int(p)
        if not 0 <= p < dim:
            raise ValidationError(f"sparse position {p} outside [0, {dim})")
        if v != 0:
            out[p] = complex(v)
    return out


def apply_local_sparse(
    matrix: np.ndarray, sites: Tuple[int, ...], dims: Tuple[int, ...], vec: SparseVector
) -> SparseVector:
    """(matrix on `sites`) (x) I applied to a sparse vector, touching only its support."""
    site_dims = [dims[s] for s in sites]
    out: SparseVector = {}
    for p, v in vec.items():
        digits = list(np.unravel_index(p, dims))
        col = int(np.ravel_multi_index([digits[s] for s in sites], site_dims))
        column = matrix[:, col]
        for row in np.flatnonzero(column):
            local = np.unravel_index(int(row), site_dims)
            for s, d in zip(sites, local):
                digits[s] = int(d)
            q = int(np.ravel_multi_index(digits, dims))
            out[q] = out.get(q, 0.0) + column[row] * v
    return {q: w for q, w in out.items() if w != 0}


def _assemble_l(spec: SumHamiltonianSpec, blocks: List[CholeskyBlock]) -> Tuple[np.ndarray, np.ndarray]:
    big = [embed_local(blk.l, spec.terms[blk.term].sites, spec.dims) for blk in blocks]
    big_inv = [embed_local(blk.l_inv, spec.terms[blk.term].sites, spec.dims) for blk in blocks]
    L = np.hstack(big)
    Lg = np.vstack(big_inv) / spec.J
    return L, Lg


def build_factorization(
    spec: SumHamiltonianSpec,
    b: Union[SparseVector, Dict[str, Any], np.ndarray, StateVector],
    blocks: Optional[List[CholeskyBlock]] = None,
    tol: float = 1e-9,
) -> FactorizationArtifacts:
    """
    Assemble L, L^g and |b'> and check their identities.

    Args:
        spec: Sum-of-local-terms description of A
        b: Right-hand side (sparse map, sparse JSON or dense); normalized here
        blocks: Precomputed cholesky_blocks output
        tol: Tolerance of the identity checks

    Returns:
        FactorizationArtifacts
    """
    blocks = blocks if blocks is not None else cholesky_blocks(spec)
    n_dim, j_terms = spec.N, spec.J
    sparse_b = as_sparse(b, n_dim)
    norm = math.sqrt(sum(abs(v) ** 2 for v in sparse_b.values()))
    if norm == 0.0:
        raise ValidationError("right-hand side is zero")
    sparse_b = {p: v / norm for p, v in sparse_b.items()}
    dense_b = np.zeros(n_dim, dtype=complex)
    for p, v in sparse_b.items():
        dense_b[p] = v

    stacked: SparseVector = {}
    for blk in blocks:
        part = apply_local_sparse(blk.l_inv, spec.terms[blk.term].sites, spec.dims, sparse_b)
        for q, v in part.items():
            stacked[blk.term * n_dim + q] = v / j_terms
    scale = math.sqrt(sum(abs(v) ** 2 for v in stacked.values()))
    b_prime_sparse = {q: v / scale for q, v in sorted(stacked.items())}
    b_prime = np.zeros(j_terms * n_dim, dtype=complex)
    for q, v in b_prime_sparse.items():
        b_prime[q] = v

    L, Lg = _assemble_l(spec, blocks)
    a = spec.assemble()
    kappa_a = sum(blk.lambda_max for blk in blocks) / sum(blk.lambda_min for blk in blocks)

    checks = {
        "LLdag_residual": float(np.max(np.abs(L @ L.conj().T - a))),
        "LLg_residual": float(np.max(np.abs(L @ Lg - np.eye(n_dim)))),
        "sparse_bprime_residual": float(np.max(np.abs(Lg @ dense_b / np.linalg.norm(Lg @ dense_b) - b_prime))),
    }
    # (L^dag)^+ = A^{-1} L, so (L^dag)^+ b' is proportional to A^{-1} b
    x_direct = np.linalg.solve(a, dense_b)
    checks["pinv_direction"] = trace_distance(np.linalg.solve(a, L @ b_prime), x_direct)
    worst = max(checks, key=checks.get)
    if checks[worst] > tol * max(1.0, float(np.max(np.abs(a)))):
        raise IdentityCheckError(f"factorization identity {worst} failed", checks)

    d_bound = len(sparse_b) * j_terms * spec.max_local_dim
    if len(b_prime_sparse) > d_bound:
        raise IdentityCheckError("b' sparsity above d_b J 2^s", {"d_bprime": len(b_prime_sparse), "bound": d_bound})

    art = FactorizationArtifacts(
        spec=spec, blocks=blocks, L=L, Lg=Lg, b=dense_b, d_b=len(sparse_b),
        b_prime=StateVector(b_prime), b_prime_sparse=b_prime_sparse, kappa_A=kappa_a, checks=checks,
    )
    log_event("build_factorization", **art.summary())
    return art


def effective_condition_number(m: np.ndarray, rcond: float = config.PINV_RCOND) -> float:
    """Largest over smallest non-zero singular value."""
    sv = scipy.linalg.svdvals(m)
    kept = sv[sv > rcond * sv[0]]
    return float(kept[0] / kept[-1])


# ----------------------------------------------------------------------
# overlap with the range of L^dag
# ----------------------------------------------------------------------
def gamma_overlap(art: FactorizationArtifacts, a: Optional[np.ndarray] = None, tol: float = 1e-8):
    """
    ||Pi_L b'||^2 from block inverses, cross-checked against Pi_L = L^dag A^{-1} L.

    Args:
        art: build_factorization output
        a: Assembled A (default: art.spec.assemble())
        tol: Agreement required between formula and projector values

    Returns:
        (gamma = GAMMA_SAFETY * ||Pi_L b'||^2, diagnostics)
    """
    a = art.spec.assemble() if a is None else np.asarray(a, dtype=complex)
    b = art.b
    numerator = 0.0
    for blk in art.blocks:
        # <b|H_j^{-1}|b> = ||L_j^{-1} b||^2
        part = apply_local_sparse(blk.l_inv, art.spec.terms[blk.term].sites, art.spec.dims, as_sparse(b, b.size))
        numerator += sum(abs(v) ** 2 for v in part.values())
    inv_b = float(np.vdot(b, np.linalg.solve(a, b)).real)
    j_terms = art.spec.J
    formula = j_terms ** 2 * inv_b / numerator

    projector = art.L.conj().T @ np.linalg.solve(a, art.L)
    projected = float(np.linalg.norm(projector @ art.b_prime.amplitudes) ** 2)
    diagnostics = {
        "overlap_formula": formula,
        "overlap_projector": projected,
        "overlap_gap": abs(formula - projected),
        "lambda_star": art.lambda_star,
        "lambda_star_bound": j_terms * art.lambda_star * inv_b,
    }
    if diagnostics["overlap_gap"] > tol:
        raise IdentityCheckError("overlap formula disagrees with the projector", diagnostics)
    if formula > 1.0 + tol:
        raise IdentityCheckError("overlap above 1", diagnostics)
    # ||Pi_L b'||^2 >= J lambda_* <b|A^{-1}|b>
    diagnostics["lambda_star_bound_holds"] = formula >= diagnostics["lambda_star_bound"] - tol
    gamma = config.GAMMA_SAFETY * min(1.0, formula)
    log_event("gamma_overlap", gamma=gamma, **diagnostics)
    return gamma, diagnostics


# ----------------------------------------------------------------------
# pseudo-inversion solve
# ----------------------------------------------------------------------
def _log_floor(x: float) -> float:
    return max(1.0, math.log(x))


def pseudo_inverse_costs(alpha: float, kappa_tilde: float, gamma: float, eps: float) -> Dict[str, float]:
    """Q[U_L] = (alpha/sqrt(gamma)) k~ log^3 k~ log^2(1/eps), Q[U_v] = (1/sqrt(gamma)) k~ log k~."""
    lk = _log_floor(kappa_tilde)
    le = _log_floor(1.0 / eps)
    return {
        "QUL": alpha / math.sqrt(gamma) * kappa_tilde * lk ** 3 * le ** 2,
        "QUv": 1.0 / math.sqrt(gamma) * kappa_tilde * lk,
    }


def pseudo_solve(art: FactorizationArtifacts, gamma: float, eps: float, tol: float = 1e-8):
    """
    Solve L^dag y = b' through the Hermitian extension [[0, L^dag], [L, 0]].

    Args:
        art: build_factorization output
        gamma: Certified lower bound on ||Pi_L b'||^2
        eps: Target precision of the cost model
        tol: Allowed trace distance of the output to A^{-1} b

    Returns:
        (x, cost dict with alpha, kappa_tilde, QUL, QUv)
    """
    if not gamma > 0.0:
        raise ValidationError("gamma must be positive", {"gamma": gamma})
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie in (0, 1)", {"eps": eps})
    n_dim, wide = art.L.shape
    ext = np.zeros((wide + n_dim, wide + n_dim), dtype=complex)
    ext[:wide, wide:] = art.L.conj().T
    ext[wide:, :wide] = art.L
    pinv, rank = scipy.linalg.pinvh(ext, atol=0.0, rtol=config.PINV_RCOND, return_rank=True)
    if rank != 2 * n_dim:
        raise NumericalCheckError("Hermitian extension has the wrong rank", {"rank": int(rank), "expected": 2 * n_dim})
    v = np.concatenate([art.b_prime.amplitudes, np.zeros(n_dim, dtype=complex)])
    y = (pinv @ v)[wide:]
    x = StateVector(y).normalize()

    exact = np.linalg.solve(art.spec.assemble(), art.b)
    err = trace_distance(x, exact)
    if err > tol:
        raise IdentityCheckError("pseudo-inverse output is not proportional to A^{-1} b", {"trace_error": err})

    alpha = float(art.spec.J * art.spec.max_local_dim)
    kappa_tilde = math.sqrt(art.kappa_A)
    cost = {"alpha": alpha, "kappa_tilde": kappa_tilde, "gamma": gamma, "eps": eps, "trace_error": err}
    cost.update(pseudo_inverse_costs(alpha, kappa_tilde, gamma, eps))
    log_event("pseudo_solve", **cost)
    return x, cost


@dataclass
class SumQlsReport:
    n: int
    J: int
    s: int
    d_b: int
    kappa_A: float
    kappa_true: float
    gamma: float
    d_bprime: int
    QUL: float
    QUv: float
    gate_estimate: float
    trace_error: float
    queries: Dict[str, int]
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return dict(self.__dict__)

    def csv_row(self) -> Dict[str, Any]:
        return {k: getattr(self, k) for k in SUMQLS_SCHEMA}


def gate_estimate(n: int, j_terms: int, d_max: int, d_b: int, kappa_tilde: float, gamma: float, eps: float) -> float:
    """
    Gate count of the whole pipeline: U_L queries at n J d_max^2 gates each
    plus U_v queries at n d_b J d_max gates each.
    """
    costs = pseudo_inverse_costs(j_terms * d_max, kappa_tilde, gamma, eps)
    return n * j_terms * d_max ** 2 * costs["QUL"] + n * d_b * j_terms * d_max * costs["QUv"]


def sumqls_solve(
    spec: SumHamiltonianSpec,
    b: Union[SparseVector, Dict[str, Any], np.ndarray, StateVector],
    eps: float = 0.01,
    ledger: Optional[QueryLedger] = None,
    workers: int = 1,
):
    """
    Factor, build b', certify gamma and solve.

    Returns:
        (x, SumQlsReport)
    """
    blocks = cholesky_blocks(spec, workers=workers)
    art = build_factorization(spec, b, blocks)
    a = spec.assemble()
    gamma, diag = gamma_overlap(art, a)
    x, cost = pseudo_solve(art, gamma, eps)

    ledger = ledger if ledger is not None else QueryLedger()
    ledger.charge("U_L", int(math.ceil(cost["QUL"])))
    ledger.charge("U_v", int(math.ceil(cost["QUv"])))

    lam = np.linalg.eigvalsh(a)
    report = SumQlsReport(
        n=spec.n,
        J=spec.J,
        s=spec.s,
        d_b=art.d_b,
        kappa_A=art.kappa_A,
        kappa_true=float(lam[-1] / lam[0]),
        gamma=gamma,
        d_bprime=art.d_bprime,
        QUL=cost["QUL"],
        QUv=cost["QUv"],
        gate_estimate=gate_estimate(
            spec.n, spec.J, spec.max_local_dim, art.d_b, cost["kappa_tilde"], gamma, eps
        ),
        trace_error=cost["trace_error"],
        queries=ledger.snapshot(),
        diagnostics={**art.checks, **diag},
    )
    log_event("sumqls_solve", **report.csv_row())
    return x, report
