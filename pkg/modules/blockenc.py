"""
PDQLS SKILL MODULE: BLOCK-ENCODINGS
===================================
This file is part of THE LAB - solver building blocks.

Normalized block-encodings of B = I - eta*A and the polynomial
transformations applied to them:

* gram_encoding: diagonally dominant A from sparse access, B = U_L^dag U_R
  with columns built from the states psi_i, phi_j on N + 1 dimensions;
* lcu_encoding: A as a sum of local PSD terms, B = I - A/J from one-ancilla
  dilations of w_j = I - h_j, a selector and a uniform state preparation;
* qsp_apply: matrix-level stand-in for quantum signal processing, charged
  one U_B access per polynomial degree;
* inverse_encoding: the (eta*K)-normalized encoding of A^{-1}.
"""

import math
import os
import sys
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import chebyshev as C

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from core import config
from core.errors import (
    DiagonalDominanceError,
    NormBoundError,
    NormalizationRequiredError,
    PolynomialBoundError,
    TermSpecError,
    ValidationError,
)
from core.linalg import (
    BlockEncoding,
    HermitianOperator,
    QueryLedger,
    dilate_unitary,
    extract_block,
)
from core.polyapprox import (
    apply_polynomial,
    approx_error_sup,
    build_inverse_approximant,
    least_degree,
)
from core.runlog import log_event


# ----------------------------------------------------------------------
# sparse access
# ----------------------------------------------------------------------
class SparseMatrixOracle:
    """
    Sparse access P_A = (P_A^pos, P_A^val) to a Hermitian matrix.

    position(i, nu) is the column of the nu-th declared entry of row i;
    rows with fewer than d non-zeros are padded with the diagonal index.
    """

    def __init__(self, matrix: np.ndarray, sparsity: Optional[int] = None):
        m = np.array(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValidationError("sparse oracle needs a square matrix")
        if np.max(np.abs(m - m.conj().T)) > config.HERMITIAN_TOL * max(1.0, np.max(np.abs(m))):
            raise ValidationError("sparse oracle matrix is not Hermitian")
        self.matrix = m
        self.dim = m.shape[0]
        rows = [np.flatnonzero(m[i]) for i in range(self.dim)]
        widest = max((len(r) for r in rows), default=0)
        self.sparsity = max(1, widest if sparsity is None else int(sparsity))
        if self.sparsity < widest:
            raise ValidationError(
                "declared sparsity below the densest row", {"declared": sparsity, "needed": widest}
            )
        self.positions = np.empty((self.dim, self.sparsity), dtype=int)
        for i, r in enumerate(rows):
            padded = list(r) + [i] * (self.sparsity - len(r))
            self.positions[i] = padded

    @classmethod
    def from_dense(cls, matrix: np.ndarray) -> "SparseMatrixOracle":
        return cls(matrix)

    @classmethod
    def from_coo(cls, triples: Iterable[Tuple[int, int, complex]], dim: int) -> "SparseMatrixOracle":
        m = np.zeros((dim, dim), dtype=complex)
        for i, j, v in triples:
            m[int(i), int(j)] += complex(v)
        return cls(m)

    def position(self, i: int, nu: int) -> int:
        return int(self.positions[i, nu])

    def value(self, i: int, j: int) -> complex:
        return complex(self.matrix[i, j])

    def dominance_margins(self) -> np.ndarray:
        """A_ii - sum_{j != i} |A_ij| per row."""
        off = np.sum(np.abs(self.matrix), axis=1) - np.abs(np.diag(self.matrix))
        return np.real(np.diag(self.matrix)) - off


def _complete_unitary(columns: np.ndarray) -> np.ndarray:
    """Extend orthonormal columns to a unitary, keeping them as the leading columns."""
    q, _ = np.linalg.qr(columns, mode="complete")
    q[:, : columns.shape[1]] = columns
    return q


def gram_encoding(p_a: SparseMatrixOracle, assert_diag_dominant: bool = True) -> BlockEncoding:
    """
    Normalized block-encoding of B = I - A for diagonally dominant A.

    Args:
        p_a: Sparse access to A (Hermitian, A_ii <= 1)
        assert_diag_dominant: Reject rows violating dominance up front;
            otherwise only negative residuals r_i and diagonals above 1
            are rejected

    Returns:
        (1, a, 0)-encoding U_L^dag U_R with a = ceil(log2((N+1)^2 / N))
    """
    a_mat = p_a.matrix
    n, d = p_a.dim, p_a.sparsity
    diag = np.diag(a_mat)
    if np.max(np.abs(diag.imag)) > config.HERMITIAN_TOL:
        raise DiagonalDominanceError("diagonal entries must be real")
    diag = diag.real
    over = int(np.argmax(diag))
    if diag[over] > 1.0 + 1e-12:
        # sqrt(1 - A_ii) would leave the psi columns off the unit sphere
        raise DiagonalDominanceError(
            "diagonal entries must not exceed 1",
            {"row": over, "diagonal": float(diag[over])},
        )
    margins = p_a.dominance_margins()
    if assert_diag_dominant:
        worst = int(np.argmin(np.minimum(margins, 1.0 - diag)))
        if margins[worst] < -1e-12 or diag[worst] > 1.0 + 1e-12:
            raise DiagonalDominanceError(
                "matrix is not diagonally dominant with A_ii <= 1",
                {"row": worst, "margin": float(margins[worst]), "diagonal": float(diag[worst])},
            )

    r = margins.copy()
    worst = int(np.argmin(r))
    if r[worst] < -1e-12:
        raise DiagonalDominanceError(
            "negative residual norm", {"row": worst, "margin": float(r[worst])}
        )
    r = np.clip(r, 0.0, None)

    # psi_i = sum_l sqrt(delta_il - A_il)|l> + sqrt(r_i)|N+1>, phi_j likewise with A*
    eye = np.eye(n)
    psi = np.zeros((n, n + 1), dtype=complex)
    psi[:, :n] = np.sqrt((eye - a_mat).astype(complex))
    psi[:, n] = np.sqrt(r)
    phi = np.zeros((n, n + 1), dtype=complex)
    phi[:, :n] = np.sqrt((eye - a_mat.conj()).astype(complex))
    phi[:, n] = np.sqrt(r)

    ancillas = int(math.ceil(math.log2((n + 1) ** 2 / n)))
    dim = (1 << ancillas) * n
    left = np.zeros((dim, n), dtype=complex)
    right = np.zeros((dim, n), dtype=complex)
    for i in range(n):
        # |i> (x) |psi_i^*>  and  |phi_i> (x) |i>, register index p(N+1) + q
        left[i * (n + 1): (i + 1) * (n + 1), i] = psi[i].conj()
        right[np.arange(n + 1) * (n + 1) + i, i] = phi[i]

    u_l = _complete_unitary(left)
    u_r = _complete_unitary(right)
    unitary = u_l.conj().T @ u_r

    per_column = 4 * d + 1
    enc = BlockEncoding(
        unitary=unitary,
        ancillas=ancillas,
        target_dim=n,
        alpha=1.0,
        eps=0.0,
        target=eye - a_mat,
        query_cost={"P_A": 2 * per_column},
        cost_model={"P_A_per_U_L": per_column, "P_A_per_U_R": per_column, "sparsity": d},
        components={"U_L": u_l, "U_R": u_r},
        label="gram",
    )
    log_event("gram_encoding", dim=n, sparsity=d, ancillas=ancillas, min_residual=float(np.min(r)))
    return enc


# ----------------------------------------------------------------------
# sums of local Hamiltonians
# ----------------------------------------------------------------------
@dataclass
class LocalTerm:
    matrix: np.ndarray
    sites: Tuple[int, ...]


def embed_local(matrix: np.ndarray, sites: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    """
    h (x) I on the complement of `sites`, with site 0 the most significant
    tensor factor and the factors of h ordered as listed in `sites`.
    """
    dims = [int(x) for x in dims]
    n_sites = len(dims)
    sites = [int(s) for s in sites]
    rest = [k for k in range(n_sites) if k not in sites]
    order = sites + rest
    total = int(np.prod(dims))
    rest_dim = int(np.prod([dims[k] for k in rest])) if rest else 1
    big = np.kron(matrix, np.eye(rest_dim))
    ordered = [dims[k] for k in order]
    perm = list(np.argsort(order))
    tensor = big.reshape(ordered + ordered)
    tensor = tensor.transpose(perm + [p + n_sites for p in perm])
    return tensor.reshape(total, total)


class SumHamiltonianSpec:
    """
    A = sum_j h_j (x) I on sites outside S_j.

    Sites default to qubits; `dims` lets a site carry any local dimension
    (the Feynman-Kitaev clock is a 3T-level site).
    """

    def __init__(self, n: int, terms: Sequence[LocalTerm], dims: Optional[Sequence[int]] = None):
        self.n = int(n)
        self.dims = tuple(int(x) for x in (dims if dims is not None else [2] * self.n))
        if len(self.dims) != self.n or any(x < 2 for x in self.dims):
            raise TermSpecError("site dimensions must be n integers >= 2", {"dims": list(self.dims)})
        if not terms:
            raise TermSpecError("at least one term is required")
        if int(np.prod(self.dims)) > config.MAX_DIM:
            raise TermSpecError("system dimension above the dense cap", {"dims": list(self.dims)})
        self.terms: List[LocalTerm] = []
        for j, term in enumerate(terms):
            sites = tuple(int(s) for s in term.sites)
            if not sites or len(set(sites)) != len(sites):
                raise TermSpecError(f"term {j} has empty or repeated sites", {"sites": list(sites)})
            if min(sites) < 0 or max(sites) >= self.n:
                raise TermSpecError(f"term {j} addresses a site outside [0, {self.n})", {"sites": list(sites)})
            local = int(np.prod([self.dims[s] for s in sites]))
            h = np.array(term.matrix, dtype=complex)
            if h.shape != (local, local):
                raise TermSpecError(
                    f"term {j} matrix shape does not match its sites",
                    {"shape": list(h.shape), "expected": local},
                )
            if np.max(np.abs(h - h.conj().T)) > config.HERMITIAN_TOL * max(1.0, np.max(np.abs(h))):
                raise TermSpecError(f"term {j} is not Hermitian")
            h = 0.5 * (h + h.conj().T)
            lam_min = float(np.linalg.eigvalsh(h)[0])
            if lam_min < -config.HERMITIAN_TOL:
                raise TermSpecError(f"term {j} is not positive semi-definite", {"term": j, "lambda_min": lam_min})
            self.terms.append(LocalTerm(matrix=h, sites=sites))

    @property
    def J(self) -> int:
        return len(self.terms)

    @property
    def N(self) -> int:
        return int(np.prod(self.dims))

    def local_dim(self, j: int) -> int:
        return self.terms[j].matrix.shape[0]

    @property
    def max_local_dim(self) -> int:
        """2^s: the largest local dimension over the terms."""
        return max(self.local_dim(j) for j in range(self.J))

    @property
    def s(self) -> int:
        return max(len(t.sites) for t in self.terms)

    def term_operator(self, j: int) -> np.ndarray:
        t = self.terms[j]
        return embed_local(t.matrix, t.sites, self.dims)

    def assemble(self) -> np.ndarray:
        return sum(self.term_operator(j) for j in range(self.J))

    def term_norms(self) -> np.ndarray:
        return np.array([float(np.max(np.abs(np.linalg.eigvalsh(t.matrix)))) for t in self.terms])

    def check_norm_bound(self, bound: float = 2.0) -> None:
        norms = self.term_norms()
        worst = int(np.argmax(norms))
        if norms[worst] > bound + config.NORM_TOL:
            raise NormBoundError(
                f"term {worst} exceeds the norm bound", {"term": worst, "norm": float(norms[worst]), "bound": bound}
            )

    def to_json(self) -> Dict[str, Any]:
        terms = []
        for t in self.terms:
            flat = t.matrix.reshape(-1)
            terms.append({
                "qubits": list(t.sites),
                "re": [float(v) for v in flat.real],
                "im": [float(v) for v in flat.imag],
            })
        doc: Dict[str, Any] = {"n": self.n, "terms": terms}
        if any(x != 2 for x in self.dims):
            doc["dims"] = list(self.dims)
        return doc

    @classmethod
    def from_json(cls, doc: Dict[str, Any]) -> "SumHamiltonianSpec":
        try:
            n = int(doc["n"])
            dims = doc.get("dims")
            dims_t = tuple(int(x) for x in dims) if dims is not None else tuple([2] * n)
            terms = []
            for entry in doc["terms"]:
                sites = tuple(int(q) for q in entry["qubits"])
                local = int(np.prod([dims_t[s] for s in sites]))
                values = np.asarray(entry["re"], dtype=float) + 1j * np.asarray(
                    entry.get("im", [0.0] * len(entry["re"])), dtype=float
                )
                terms.append(LocalTerm(matrix=values.reshape(local, local), sites=sites))
        except (KeyError, TypeError, ValueError, IndexError) as e:
            raise TermSpecError(f"malformed Hamiltonian spec: {e}")
        return cls(n, terms, dims=dims)


def _uniform_preparation(j_terms: int, width: int) -> np.ndarray:
    """Unitary on 2^width levels with first column sum_{j<J} J^{-1/2}|j>."""
    first = np.zeros((1 << width, 1), dtype=complex)
    first[:j_terms, 0] = 1.0 / math.sqrt(j_terms)
    return _complete_unitary(first)


def lcu_encoding(spec: SumHamiltonianSpec) -> BlockEncoding:
    """
    Normalized block-encoding of B = I - A/J.

    Register order (most significant first): selector (ceil(log2 J) qubits),
    shared dilation ancilla, system.

    Args:
        spec: Sum of PSD local terms with norm at most 2

    Returns:
        (1, ceil(log2 J) + 1, 0)-encoding (Had^dag x I) U_Select (Had x I)
    """
    spec.check_norm_bound(2.0)
    n_sys = spec.N
    j_terms = spec.J
    width = int(math.ceil(math.log2(j_terms))) if j_terms > 1 else 0
    branches = 1 << width
    block_dim = 2 * n_sys

    select = np.zeros((branches * block_dim, branches * block_dim), dtype=complex)
    for j in range(branches):
        if j < j_terms:
            t = spec.terms[j]
            w = np.eye(t.matrix.shape[0]) - t.matrix
            u_local = dilate_unitary(w).unitary
            d_loc = t.matrix.shape[0]
            # u_j acts on (ancilla, local sites); lift it onto the ancilla and whole system
            lifted = np.zeros((block_dim, block_dim), dtype=complex)
            for a_out in range(2):
                for a_in in range(2):
                    piece = u_local[a_out * d_loc:(a_out + 1) * d_loc, a_in * d_loc:(a_in + 1) * d_loc]
                    lifted[a_out * n_sys:(a_out + 1) * n_sys, a_in * n_sys:(a_in + 1) * n_sys] = embed_local(
                        piece, t.sites, spec.dims
                    )
        else:
            lifted = np.eye(block_dim, dtype=complex)
        select[j * block_dim:(j + 1) * block_dim, j * block_dim:(j + 1) * block_dim] = lifted

    had = _uniform_preparation(j_terms, width)
    had_full = np.kron(had, np.eye(block_dim))
    unitary = had_full.conj().T @ select @ had_full

    a_mat = spec.assemble()
    d_max = spec.max_local_dim
    enc = BlockEncoding(
        unitary=unitary,
        ancillas=width + 1,
        target_dim=n_sys,
        alpha=1.0,
        eps=0.0,
        target=np.eye(n_sys) - a_mat / j_terms,
        query_cost={},
        cost_model={
            "gate_estimate": j_terms * d_max ** 2,
            "gate_estimate_stated": j_terms * d_max,
            "note": "derivation gives O(J 2^{2s}); the proposition statement reads O(J 2^s)",
        },
        components={"Had": had, "U_Select": select},
        label="lcu",
    )
    log_event("lcu_encoding", dim=n_sys, terms=j_terms, selector_qubits=width, max_local_dim=d_max)
    return enc


# ----------------------------------------------------------------------
# polynomial transformations
# ----------------------------------------------------------------------
def _definite_parity(coeffs: np.ndarray) -> bool:
    scale = max(1e-300, float(np.max(np.abs(coeffs))))
    even = np.all(np.abs(coeffs[1::2]) <= 1e-14 * scale)
    odd = np.all(np.abs(coeffs[0::2]) <= 1e-14 * scale)
    return bool(even or odd)


def _poly_degree(coeffs: np.ndarray) -> int:
    nz = np.flatnonzero(coeffs)
    return int(nz[-1]) if nz.size else 0


def qsp_apply(
    e_b: BlockEncoding,
    poly: Any,
    ledger: Optional[QueryLedger] = None,
    label: str = "qsp",
) -> BlockEncoding:
    """
    Encoding of poly(B) from a normalized encoding of B.

    Args:
        e_b: (1, b, eps) encoding of B
        poly: Chebyshev-T coefficients, or an object with `cheb_coeffs`;
            must satisfy |p| <= 1/2 on [-1, 1], or |p| <= 1 with definite parity
        ledger: Charged once with the construction's oracle accesses

    Returns:
        (1, b + 2, 4 l sqrt(eps)) encoding of poly(B), l = degree
    """
    if not e_b.normalized:
        raise NormalizationRequiredError(
            "signal processing needs a normalized encoding (alpha = 1)", {"alpha": e_b.alpha}
        )
    coeffs = np.asarray(getattr(poly, "cheb_coeffs", poly), dtype=float)
    grid = np.concatenate([np.linspace(-1.0, 1.0, config.GRID_POINTS), np.cos(np.linspace(0.0, np.pi, 4 * len(coeffs) + 1))])
    vals = np.abs(C.chebval(grid, coeffs))
    worst = int(np.argmax(vals))
    limit = 1.0 if _definite_parity(coeffs) else 0.5
    if vals[worst] > limit + 1e-12:
        raise PolynomialBoundError(
            "polynomial exceeds the signal-processing magnitude bound",
            {"x": float(grid[worst]), "value": float(vals[worst]), "limit": limit},
        )

    degree = _poly_degree(coeffs)
    b_block = HermitianOperator(extract_block(e_b))
    transformed = apply_polynomial(coeffs, b_block)
    target = None
    if e_b.target is not None:
        target = apply_polynomial(coeffs, HermitianOperator(np.asarray(e_b.target)))

    query_cost = {"U_B": degree}
    for oracle, n_calls in e_b.query_cost.items():
        if oracle != "U_B":
            query_cost[oracle] = query_cost.get(oracle, 0) + degree * n_calls
    if ledger is not None:
        ledger.charge_all(query_cost)

    dilation = dilate_unitary(transformed)
    enc = BlockEncoding(
        unitary=dilation.unitary,
        ancillas=e_b.ancillas + 2,
        target_dim=e_b.target_dim,
        alpha=1.0,
        eps=4.0 * degree * math.sqrt(e_b.eps),
        target=target if target is not None else transformed,
        query_cost=query_cost,
        cost_model={"degree": degree, "source": e_b.label},
        label=label,
    )
    return enc


def inverse_encoding(
    e_b: BlockEncoding,
    kappa: float,
    eta: float,
    eps_target: float,
    ledger: Optional[QueryLedger] = None,
) -> BlockEncoding:
    """
    (eta*K, b+2, eps) encoding of A^{-1} from a normalized encoding of B = I - eta*A.

    The degree is the least l whose grid-certified error satisfies
    eta * sup|P - 1/(1-x)| <= eps_target, i.e. the error of alpha * block
    against A^{-1} is at most eps_target.

    Args:
        e_b: Normalized encoding of B with spectrum in [-1, 1 - eta/kappa]
        kappa: Condition-number bound of A
        eta: Rescaling constant in (0, 1]
        eps_target: Allowed operator-norm error of the A^{-1} encoding
        ledger: Charged with Q[U_B] = 2l - 1

    Returns:
        BlockEncoding whose block is P(B)/K
    """
    if not 0.0 < eta <= 1.0:
        raise ValidationError("eta must lie in (0, 1]", {"eta": eta})
    if eps_target <= 0.0:
        raise ValidationError("target precision must be positive", {"eps": eps_target})
    kappa_eff = max(float(kappa) / eta, config.KAPPA_FLOOR)
    ell = least_degree(kappa_eff, eps_target / eta)
    approximant = build_inverse_approximant(ell, kappa_eff)
    sup_error = approx_error_sup(approximant)

    inner = qsp_apply(e_b, approximant.normalized_coeffs, ledger, label="inverse")
    b_ideal = np.asarray(e_b.target if e_b.target is not None else extract_block(e_b))
    a_op = HermitianOperator((np.eye(e_b.target_dim) - b_ideal) / eta)
    a_inv = a_op.apply_function(lambda lam: 1.0 / lam)

    alpha = eta * approximant.K
    enc = BlockEncoding(
        unitary=inner.unitary,
        ancillas=inner.ancillas,
        target_dim=inner.target_dim,
        alpha=alpha,
        eps=eta * sup_error + alpha * inner.eps,
        target=a_inv,
        query_cost=dict(inner.query_cost),
        cost_model={
            "ell": ell,
            "degree": approximant.degree,
            "K": approximant.K,
            "kappa_eff": kappa_eff,
            "sup_error": sup_error,
        },
        label="inverse",
    )
    log_event(
        "inverse_encoding",
        kappa=kappa, eta=eta, kappa_eff=kappa_eff, eps_target=eps_target,
        ell=ell, K=approximant.K, sup_error=sup_error,
    )
    return enc
