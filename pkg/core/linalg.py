"""
PDQLS CORE MODULE: LINEAR ALGEBRA SUBSTRATE
===========================================
This file is part of THE VAULT - shared substrate for every pipeline.
Status: PROTECTED - every other module builds on these types.

Dense Hermitian operators with cached spectra, matrix-block-encodings,
state vectors, oracle query accounting, and the handful of primitives
that everything else is written in terms of: spectral decomposition,
unitary dilation, block extraction, post-selection and trace distance.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, NamedTuple, Optional, Union

import numpy as np
import scipy.linalg

from core import config
from core.codec import matrix_from_json, matrix_to_json
from core.errors import (
    NormBoundError,
    NotHermitianError,
    NullPostselectionError,
    NumericalCheckError,
    SpectrumPromiseError,
    ValidationError,
)

ORACLES = ("U_b", "U_B", "U_A", "P_A", "U_L", "U_v")


class Spectrum(NamedTuple):
    """Eigenvalues ascending, eigenvectors as orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def _max_asymmetry(m: np.ndarray) -> float:
    return float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0


def _check_square(m: np.ndarray, what: str) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{what} must be square", {"shape": list(m.shape)})
    if m.shape[0] < 1 or m.shape[0] > config.MAX_DIM:
        raise ValidationError(
            f"{what} dimension outside [1, {config.MAX_DIM}]", {"dim": m.shape[0]}
        )


class HermitianOperator:
    """
    Dense N x N Hermitian matrix with a lazily cached eigendecomposition.

    Carries the metadata the solvers need: the promised condition-number
    bound kappa_bound and the rescaling constant eta of B = I - eta*A.
    """

    def __init__(
        self,
        entries: np.ndarray,
        kappa_bound: Optional[float] = None,
        eta: float = 1.0,
        positive_definite: bool = False,
        b_operator: bool = False,
        spectrum: Optional[Spectrum] = None,
    ):
        """
        Args:
            entries: Complex square matrix, Hermitian within 1e-12 (relative)
            kappa_bound: Promised upper bound on the condition number
            eta: Rescaling constant in (0, 1]
            positive_definite: Validate all eigenvalues > 0
            b_operator: Validate spectrum in [-1, 1 - eta/kappa_bound]
            spectrum: Precomputed eigenpairs (skips the decomposition)
        """
        m = np.array(entries, dtype=complex)
        _check_square(m, "operator")
        fro = float(np.linalg.norm(m))
        asym = float(np.linalg.norm(m - m.conj().T))
        if asym > config.HERMITIAN_TOL * max(1.0, fro):
            raise NotHermitianError(
                "operator is not Hermitian",
                {"max_asymmetry": _max_asymmetry(m), "relative_frobenius": asym / max(1.0, fro)},
            )
        if not 0.0 < eta <= 1.0:
            raise ValidationError("eta must lie in (0, 1]", {"eta": eta})
        if kappa_bound is not None and kappa_bound < 1.0:
            raise ValidationError("kappa bound must be at least 1", {"kappa_bound": kappa_bound})

        self.entries = 0.5 * (m + m.conj().T)
        self.dim = self.entries.shape[0]
        self.kappa_bound = None if kappa_bound is None else float(kappa_bound)
        self.eta = float(eta)
        self._spectrum = spectrum

        if positive_definite:
            self.check_positive_definite()
        if b_operator:
            self.check_b_domain()

    # ------------------------------------------------------------------
    # constructors
    # ------------------------------------------------------------------
    @classmethod
    def from_spectrum(
        cls, eigenvalues: np.ndarray, eigenvectors: np.ndarray, **kwargs: Any
    ) -> "HermitianOperator":
        """Build V diag(lambda) V^dagger and keep the eigenpairs cached."""
        lam = np.asarray(eigenvalues, dtype=float)
        vec = np.asarray(eigenvectors, dtype=complex)
        order = np.argsort(lam, kind="stable")
        lam, vec = lam[order], vec[:, order]
        entries = (vec * lam) @ vec.conj().T
        return cls(entries, spectrum=Spectrum(lam, vec), **kwargs)

    @classmethod
    def identity(cls, n: int, **kwargs: Any) -> "HermitianOperator":
        return cls.from_spectrum(np.ones(n), np.eye(n, dtype=complex), **kwargs)

    @classmethod
    def from_json(cls, doc: Dict[str, Any], **kwargs: Any) -> "HermitianOperator":
        return cls(matrix_from_json(doc), **kwargs)

    def to_json(self) -> Dict[str, Any]:
        return matrix_to_json(self.entries)

    # ------------------------------------------------------------------
    # spectral data
    # ------------------------------------------------------------------
    @property
    def spectrum(self) -> Spectrum:
        if self._spectrum is None:
            self._spectrum = eigendecompose(self)
        return self._spectrum

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.spectrum.eigenvalues

    @property
    def eigenvectors(self) -> np.ndarray:
        return self.spectrum.eigenvectors

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def sigma_max(self) -> float:
        return float(np.max(np.abs(self.eigenvalues)))

    @property
    def sigma_min(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))

    @property
    def norm(self) -> float:
        """Operator norm, the largest singular value from the spectrum."""
        return self.sigma_max

    @property
    def kappa(self) -> float:
        """Measured condition number sigma_max / sigma_min."""
        smin = self.sigma_min
        return math.inf if smin == 0.0 else self.sigma_max / smin

    def apply_function(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """f(H) = V f(lambda) V^dagger."""
        lam, vec = self.spectrum
        vals = np.asarray(f(lam))
        return (vec * vals) @ vec.conj().T

    def solve(self, b: np.ndarray) -> np.ndarray:
        """H^{-1} b through the cached eigenpairs."""
        lam, vec = self.spectrum
        if np.any(lam == 0.0):
            raise SpectrumPromiseError("operator is singular")
        return vec @ ((vec.conj().T @ np.asarray(b, dtype=complex)) / lam)

    def check_positive_definite(self) -> None:
        if self.lambda_min <= 0.0:
            raise SpectrumPromiseError(
                "operator is not positive definite", {"lambda_min": self.lambda_min}
            )

    def check_b_domain(self) -> None:
        """Spectrum must lie in D_B = [-1, 1 - eta/kappa]."""
        if self.kappa_bound is None:
            raise ValidationError("B-domain check needs kappa_bound")
        upper = 1.0 - self.eta / self.kappa_bound
        lo, hi = self.lambda_min, self.lambda_max
        if lo < -1.0 - config.NORM_TOL or hi > upper + config.NORM_TOL:
            raise SpectrumPromiseError(
                "spectrum outside the B domain",
                {"lambda_min": lo, "lambda_max": hi, "upper": upper},
            )

    def __repr__(self) -> str:
        return f"HermitianOperator(dim={self.dim}, kappa_bound={self.kappa_bound}, eta={self.eta})"


OperatorLike = Union[HermitianOperator, np.ndarray]


def as_operator(m: OperatorLike, **kwargs: Any) -> HermitianOperator:
    return m if isinstance(m, HermitianOperator) else HermitianOperator(m, **kwargs)


def eigendecompose(h: OperatorLike) -> Spectrum:
    """
    Eigendecomposition of a Hermitian matrix.

    Args:
        h: HermitianOperator or raw matrix (validated)

    Returns:
        Spectrum with ascending eigenvalues and orthonormal eigenvectors
    """
    if isinstance(h, HermitianOperator):
        m = h.entries
    else:
        m = np.array(h, dtype=complex)
        _check_square(m, "operator")
        fro = float(np.linalg.norm(m))
        if float(np.linalg.norm(m - m.conj().T)) > config.HERMITIAN_TOL * max(1.0, fro):
            raise NotHermitianError(
                "operator is not Hermitian", {"max_asymmetry": _max_asymmetry(m)}
            )
        m = 0.5 * (m + m.conj().T)
    lam, vec = scipy.linalg.eigh(m)
    return Spectrum(np.asarray(lam, dtype=float), np.asarray(vec, dtype=complex))


# ----------------------------------------------------------------------
# block-encodings
# ----------------------------------------------------------------------
@dataclass
class BlockEncoding:
    """
    (alpha, a, eps) matrix-block-encoding.

    `unitary` acts on 2^k * N dimensions with the ancillas as the most
    significant index; `ancillas` may exceed k, the extra ancillas being
    idle wires (identity factors) declared by the construction.
    """

    unitary: np.ndarray
    ancillas: int
    target_dim: int
    alpha: float = 1.0
    eps: float = 0.0
    target: Optional[np.ndarray] = None
    query_cost: Dict[str, int] = field(default_factory=dict)
    cost_model: Dict[str, Any] = field(default_factory=dict)
    components: Dict[str, np.ndarray] = field(default_factory=dict)
    label: str = ""

    def __post_init__(self) -> None:
        u = np.asarray(self.unitary, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ValidationError("encoding unitary must be square")
        n = int(self.target_dim)
        if n < 1 or u.shape[0] % n:
            raise ValidationError(
                "unitary dimension is not a multiple of the target dimension",
                {"unitary_dim": u.shape[0], "target_dim": n},
            )
        ratio = u.shape[0] // n
        if ratio & (ratio - 1):
            raise ValidationError("ancilla register dimension must be a power of two", {"ratio": ratio})
        if ratio.bit_length() - 1 > self.ancillas:
            raise ValidationError(
                "declared ancillas fewer than the unitary uses",
                {"ancillas": self.ancillas, "used": ratio.bit_length() - 1},
            )
        if self.alpha < 1.0 - config.NORM_TOL:
            raise ValidationError("normalization alpha must be at least 1", {"alpha": self.alpha})
        for oracle, n_calls in self.query_cost.items():
            if oracle not in ORACLES or n_calls < 0:
                raise ValidationError(f"bad query cost entry {oracle}={n_calls}")
        self.unitary = u

    @property
    def dim(self) -> int:
        return self.unitary.shape[0]

    @property
    def core_ancillas(self) -> int:
        return (self.dim // self.target_dim).bit_length() - 1

    @property
    def normalized(self) -> bool:
        return abs(self.alpha - 1.0) <= config.NORM_TOL

    def block(self) -> np.ndarray:
        return extract_block(self)

    def unitarity_residual(self) -> float:
        u = self.unitary
        return float(np.max(np.abs(u @ u.conj().T - np.eye(self.dim))))

    def block_error(self) -> float:
        """Operator-norm distance between the target and alpha times the block."""
        if self.target is None:
            return 0.0
        return float(np.linalg.norm(np.asarray(self.target) - self.block(), 2))

    def verify(self, tol: float = config.UNITARY_TOL) -> Dict[str, float]:
        """Check unitarity and the block inequality with the declared eps."""
        residual = self.unitarity_residual()
        error = self.block_error()
        if residual > tol:
            raise NumericalCheckError(
                f"{self.label or 'encoding'} is not unitary", {"residual": residual}
            )
        if error > self.eps + tol * max(1.0, self.alpha):
            raise NumericalCheckError(
                f"{self.label or 'encoding'} block misses its target",
                {"block_error": error, "eps": self.eps},
            )
        return {"unitarity_residual": residual, "block_error": error}

    def summary(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "dim": self.dim,
            "target_dim": self.target_dim,
            "ancillas": self.ancillas,
            "alpha": self.alpha,
            "eps": self.eps,
            "query_cost": dict(self.query_cost),
            "cost_model": dict(self.cost_model),
        }


def _spectral_complement(lam: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """sqrt(I - M^2) with the eigenvalues of I - M^2 clamped to [0, 1]."""
    s = np.sqrt(np.clip(1.0 - lam ** 2, 0.0, 1.0))
    return (vec * s) @ vec.conj().T


def dilate_unitary(
    m: OperatorLike,
    query_cost: Optional[Dict[str, int]] = None,
    label: str = "dilation",
) -> BlockEncoding:
    """
    One-ancilla unitary dilation [[M, -S], [S, M]], S = sqrt(I - M^2).

    Args:
        m: Hermitian matrix with operator norm at most 1
        query_cost: Oracle accesses one application of the result stands for
        label: Name carried into logs and reports

    Returns:
        (1, 1, 0)-block-encoding of M
    """
    op = as_operator(m)
    lam, vec = op.spectrum
    radius = float(np.max(np.abs(lam)))
    if radius > 1.0 + config.NORM_TOL:
        raise NormBoundError("dilation needs norm at most 1", {"spectral_radius": radius})
    s = _spectral_complement(lam, vec)
    u = np.block([[op.entries, -s], [s, op.entries]])
    return BlockEncoding(
        unitary=u,
        ancillas=1,
        target_dim=op.dim,
        alpha=1.0,
        eps=0.0,
        target=op.entries,
        query_cost=dict(query_cost or {}),
        label=label,
    )


def extract_block(e: BlockEncoding) -> np.ndarray:
    """alpha * (<0^a| x I) U (|0^a> x I)."""
    n = e.target_dim
    return e.alpha * e.unitary[:n, :n]


# ----------------------------------------------------------------------
# states
# ----------------------------------------------------------------------
class StateVector:
    """Complex amplitude vector with a cached l2 norm."""

    def __init__(self, amplitudes: np.ndarray, label: str = ""):
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        if amps.size < 1 or amps.size > config.MAX_DIM * config.MAX_DIM:
            raise ValidationError("state dimension out of range", {"dim": int(amps.size)})
        self.amplitudes = amps
        self.label = label
        self.norm = float(np.linalg.norm(amps))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def normalized(self) -> bool:
        return abs(self.norm - 1.0) <= config.NORM_TOL

    def normalize(self) -> "StateVector":
        if self.norm == 0.0:
            raise ValidationError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / self.norm, label=self.label)

    @classmethod
    def basis(cls, dim: int, index: int) -> "StateVector":
        v = np.zeros(dim, dtype=complex)
        v[index] = 1.0
        return cls(v)

    @classmethod
    def uniform(cls, dim: int) -> "StateVector":
        return cls(np.full(dim, 1.0 / math.sqrt(dim), dtype=complex))

    @classmethod
    def from_json(cls, doc: Dict[str, Any]) -> "StateVector":
        return cls(matrix_from_json(doc))

    def to_json(self) -> Dict[str, Any]:
        return matrix_to_json(self.amplitudes)

    def __repr__(self) -> str:
        return f"StateVector(dim={self.dim}, norm={self.norm:.12g})"


def as_state(b: Union[StateVector, np.ndarray]) -> StateVector:
    return b if isinstance(b, StateVector) else StateVector(b)


# ----------------------------------------------------------------------
# query accounting
# ----------------------------------------------------------------------
class QueryLedger:
    """
    Oracle access counts for one solve. Counts only ever grow.
    """

    def __init__(self) -> None:
        self.counts: Dict[str, int] = {name: 0 for name in ORACLES}

    def charge(self, oracle: str, n: int = 1) -> None:
        if oracle not in self.counts:
            raise ValidationError(f"unknown oracle {oracle!r}", {"known": list(ORACLES)})
        n = int(n)
        if n < 0:
            raise ValidationError("query charges must be non-negative", {"oracle": oracle, "n": n})
        self.counts[oracle] += n

    def charge_all(self, costs: Dict[str, int], times: int = 1) -> None:
        for oracle, n in costs.items():
            self.charge(oracle, int(n) * int(times))

    def absorb(self, other: "QueryLedger", times: int = 1) -> None:
        """Add `times` copies of another ledger (composite operations)."""
        self.charge_all(other.counts, times)

    def snapshot(self) -> Dict[str, int]:
        return dict(self.counts)

    def total(self) -> int:
        return sum(self.counts.values())

    def __getitem__(self, oracle: str) -> int:
        return self.counts[oracle]

    def __repr__(self) -> str:
        used = {k: v for k, v in self.counts.items() if v}
        return f"QueryLedger({used})"


def apply_postselected(
    e: BlockEncoding,
    b: Union[StateVector, np.ndarray],
    ledger: Optional[QueryLedger] = None,
):
    """
    Apply an encoding to |0^a>|b> and post-select the ancillas on |0^a>.

    Args:
        e: Block-encoding
        b: Normalized input state of dimension e.target_dim
        ledger: Charged with e.query_cost when given

    Returns:
        (normalized output StateVector, success probability)
    """
    state = as_state(b)
    if not state.normalized:
        raise ValidationError("input state must be normalized", {"norm": state.norm})
    if state.dim != e.target_dim:
        raise ValidationError(
            "state and encoding dimensions differ", {"state": state.dim, "target": e.target_dim}
        )
    n = e.target_dim
    branch = e.unitary[:n, :n] @ state.amplitudes
    p_succ = float(np.vdot(branch, branch).real)
    if ledger is not None:
        ledger.charge_all(e.query_cost)
    if p_succ < config.NULL_POSTSELECT:
        raise NullPostselectionError("null post-selection", {"p_succ": p_succ})
    return StateVector(branch / math.sqrt(p_succ)), p_succ


def trace_distance(psi: Union[StateVector, np.ndarray], phi: Union[StateVector, np.ndarray]) -> float:
    """
    Trace distance sqrt(1 - |<psi|phi>|^2) between pure states.

    Evaluated as sin of the angle between the rays, with the angle taken
    from atan2 of the phase-aligned difference and sum; this keeps full
    relative accuracy for nearly equal states.
    """
    a = as_state(psi).amplitudes
    b = as_state(phi).amplitudes
    if a.size != b.size:
        raise ValidationError("states differ in dimension", {"left": a.size, "right": b.size})
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    overlap = np.vdot(b, a)
    phase = overlap / abs(overlap) if abs(overlap) > 0.0 else 1.0
    aligned = phase * b
    half = math.atan2(float(np.linalg.norm(a - aligned)), float(np.linalg.norm(a + aligned)))
    return float(min(1.0, max(0.0, math.sin(2.0 * half))))


# ----------------------------------------------------------------------
# random helpers shared by generators and tests
# ----------------------------------------------------------------------
def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_hermitian(n: int, rng: np.random.Generator, spectral_radius: Optional[float] = None) -> np.ndarray:
    """Seeded random Hermitian matrix, optionally rescaled to a spectral radius."""
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    h = 0.5 * (z + z.conj().T)
    if spectral_radius is not None:
        h *= spectral_radius / float(np.max(np.abs(np.linalg.eigvalsh(h))))
    return h


def porter_thomas(n: int, rng: np.random.Generator) -> np.ndarray:
    """Normalized complex Gaussian vector."""
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)
