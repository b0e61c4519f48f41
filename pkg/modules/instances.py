"""
PDQLS SKILL MODULE: INSTANCE FAMILIES
=====================================
This file is part of THE LAB - benchmark and adversarial inputs.

Generators for the positive-definite linear systems the solvers are
measured on:

* grover_diagonal: two-level diagonal A whose solution solves search;
* promise_majority_instance: rank-one perturbation of I with a phase reference;
* signed_majority_instance: the same with the hidden string in the matrix signs;
* expander_instance: the same with a random regular graph walk, optionally sign-conjugated;
* feynman_kitaev_sumqls: circuit-to-Hamiltonian clock system as a Sum-QLS;
* random_pd_instance: uniform spectrum, Haar basis, Porter-Thomas or eigenvector b.

Every generator is a pure function of (params, seed) and returns a
QlsInstance whose metadata carries the observables the family promises.
"""

import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from core import config
from core.codec import load, matrix_from_json, matrix_to_json, sparse_to_json
from core.errors import InstanceError, TermSpecError, ValidationError
from core.linalg import HermitianOperator, StateVector, haar_unitary, porter_thomas
from core.runlog import log_event
from modules.blockenc import LocalTerm, SumHamiltonianSpec, embed_local


@dataclass
class QlsInstance:
    """
    One linear system A x = b with its family tag and promised observables.

    Exactly one of `operator` (dense) and `spec` (sum of local terms) is
    the source of A; `kappa` is the declared condition-number bound.
    """

    family: str
    seed: Optional[int]
    params: Dict[str, Any]
    b: StateVector
    kappa: float
    operator: Optional[HermitianOperator] = None
    spec: Optional[SumHamiltonianSpec] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if (self.operator is None) == (self.spec is None):
            raise InstanceError("an instance carries exactly one of operator or spec")

    @property
    def matrix(self) -> np.ndarray:
        return self.operator.entries if self.operator is not None else self.spec.assemble()

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def direct_solution(self) -> np.ndarray:
        """Unnormalized A^{-1} b by a dense solve."""
        return np.linalg.solve(self.matrix, self.b.amplitudes)

    def measured_kappa(self) -> float:
        lam = np.linalg.eigvalsh(self.matrix)
        return float(lam[-1] / lam[0])

    def solver_operator(self) -> HermitianOperator:
        """A / lambda_max: spectrum inside [1/kappa, 1], same normalized solution."""
        lam = np.linalg.eigvalsh(self.matrix)
        if lam[0] <= 0.0:
            raise InstanceError("instance matrix is not positive definite", {"lambda_min": float(lam[0])})
        return HermitianOperator(self.matrix / lam[-1], kappa_bound=max(self.kappa, lam[-1] / lam[0]))

    def to_json(self) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "family": self.family,
            "seed": self.seed,
            "params": self.params,
            "kappa": self.kappa,
            "b": self.b.to_json(),
            "meta": self.meta,
        }
        if self.spec is not None:
            doc["spec"] = self.spec.to_json()
        else:
            doc["matrix"] = matrix_to_json(self.operator.entries)
        return doc

    @classmethod
    def from_json(cls, doc: Dict[str, Any]) -> "QlsInstance":
        try:
            spec = SumHamiltonianSpec.from_json(doc["spec"]) if "spec" in doc else None
            op = None if spec is not None else HermitianOperator(matrix_from_json(doc["matrix"]))
            b = StateVector(matrix_from_json(doc["b"]))
            return cls(
                family=str(doc["family"]),
                seed=doc.get("seed"),
                params=dict(doc.get("params", {})),
                b=b,
                kappa=float(doc["kappa"]),
                operator=op,
                spec=spec,
                meta=dict(doc.get("meta", {})),
            )
        except (KeyError, TypeError) as e:
            raise InstanceError(f"malformed instance file: {e}")


def load_instance(path: Union[str, Path]) -> QlsInstance:
    """Read an instance file written by the `instance` command."""
    try:
        doc = load(path)
    except (OSError, ValueError) as e:
        raise InstanceError(f"cannot read instance file {path}: {e}")
    return QlsInstance.from_json(doc)


# ----------------------------------------------------------------------
# search
# ----------------------------------------------------------------------
def grover_diagonal(n: int, m: int, marked: Optional[Sequence[int]] = None, seed: Optional[int] = None) -> QlsInstance:
    """
    Diagonal A with sqrt((N-M)/N) off the marked set and sqrt(M/N) on it.

    Args:
        n: Dimension N
        m: Number of marked items, 1 <= M <= N/2
        marked: Marked positions (drawn with `seed` when omitted)
        seed: Seed for drawing the marked set

    Returns:
        QlsInstance with b = u_N; solving it hits the marked set with probability 1/2
    """
    if not 1 <= m <= n // 2:
        raise InstanceError("need 1 <= M <= N/2", {"N": n, "M": m})
    if marked is None:
        rng = np.random.default_rng(config.resolve_seed(seed))
        marked = sorted(int(i) for i in rng.choice(n, size=m, replace=False))
    marked = sorted(int(i) for i in marked)
    if len(set(marked)) != m or min(marked) < 0 or max(marked) >= n:
        raise InstanceError("marked set must hold M distinct positions in [0, N)", {"marked": marked})

    alpha = math.sqrt((n - m) / n)
    beta = math.sqrt(m / n)
    diag = np.full(n, alpha)
    diag[marked] = beta
    kappa = alpha / beta
    op = HermitianOperator.from_spectrum(diag, np.eye(n, dtype=complex), kappa_bound=kappa)
    b = StateVector.uniform(n)

    # closed form: amplitudes 1/(sqrt(N) beta) on the marked set, 1/(sqrt(N) alpha) elsewhere
    x = np.where(np.isin(np.arange(n), marked), 1.0 / beta, 1.0 / alpha) / math.sqrt(n)
    x /= np.linalg.norm(x)
    meta = {
        "marked": marked,
        "alpha": alpha,
        "beta": beta,
        "marked_probability": float(np.sum(np.abs(x[marked]) ** 2)),
        "solution": [float(v) for v in x],
    }
    log_event("grover_diagonal", N=n, M=m, kappa=kappa)
    return QlsInstance("grover", seed, {"N": n, "M": m}, b, kappa, operator=op, meta=meta)


# ----------------------------------------------------------------------
# majority with a phase reference
# ----------------------------------------------------------------------
def majority_string(n: int, m: int, f: int, seed: Optional[int] = None) -> List[int]:
    """Bits with (N+M)/2 entries equal to f, in seeded random order."""
    if (n + m) % 2 or not 0 < m <= n:
        raise InstanceError("need 0 < M <= N with N + M even", {"N": n, "M": m})
    if f not in (0, 1):
        raise InstanceError("majority value must be 0 or 1", {"f": f})
    rng = np.random.default_rng(config.resolve_seed(seed))
    y = np.full(n, 1 - f)
    y[rng.permutation(n)[: (n + m) // 2]] = f
    return [int(v) for v in y]


def _check_majority(y: Sequence[int], m: int) -> int:
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise InstanceError("y must be a bit string")
    margin = int(np.sum(y == 0) - np.sum(y == 1))
    if abs(margin) != m:
        raise InstanceError("y does not have majority margin M", {"margin": margin, "M": m})
    return 0 if margin > 0 else 1


def plus_state(n: int) -> np.ndarray:
    """("+") = (|N+1> + u_N) / sqrt(2) on N + 1 dimensions."""
    v = np.zeros(n + 1, dtype=complex)
    v[:n] = 1.0 / math.sqrt(n)
    v[n] = 1.0
    return v / math.sqrt(2.0)


def _reference_vector(y: Sequence[int], tail: float) -> StateVector:
    b = np.concatenate([(-1.0) ** np.asarray(y, dtype=float), [tail]]).astype(complex)
    return StateVector(b).normalize()


def _sign_twist(y: Sequence[int]) -> np.ndarray:
    """Diagonal of D: (-1)^{y_i} on the string, +1 on the reference entry."""
    return np.concatenate([(-1.0) ** np.asarray(y, dtype=float), [1.0]])


def _conjugate(instance: QlsInstance, family: str, tail: float) -> QlsInstance:
    """A' = D A D with right-hand side u, so that A'^{-1} u = D A^{-1} b."""
    twist = _sign_twist(instance.meta["y"])
    a = twist[:, None] * instance.matrix * twist[None, :]
    u = np.ones(a.shape[0], dtype=complex)
    u[-1] = tail
    meta = {**instance.meta, "twist": [float(s) for s in twist]}
    return QlsInstance(
        family, instance.seed, instance.params, StateVector(u).normalize(), instance.kappa,
        operator=HermitianOperator(a, kappa_bound=instance.kappa), meta=meta,
    )


def promise_majority_instance(
    n: int, m: int, f: Optional[int] = None, y: Optional[Sequence[int]] = None, seed: Optional[int] = None
) -> QlsInstance:
    """
    A = I - (1 - eps) (u_N u_N^T (+) 0) with (1 - eps)/eps * M/N = 1.

    Args:
        n: Length N of the hidden string
        m: Majority margin M
        f: Majority value (required when y is drawn)
        y: Hidden string; checked against the margin when given
        seed: Seed for drawing y

    Returns:
        QlsInstance with kappa = (N + M)/M and the ("+") overlap in metadata
    """
    if y is None:
        if f is None:
            raise InstanceError("give either y or the majority value f")
        y = majority_string(n, m, f, seed)
    y = [int(v) for v in y]
    if len(y) != n:
        raise InstanceError("y has the wrong length", {"N": n, "len": len(y)})
    f_true = _check_majority(y, m)
    if f is not None and f != f_true:
        raise InstanceError("y is inconsistent with the declared majority", {"f": f, "majority": f_true})

    eps = m / (n + m)
    k_prime = np.zeros((n + 1, n + 1))
    k_prime[:n, :n] = 1.0 / n
    a = np.eye(n + 1) - (1.0 - eps) * k_prime
    kappa = (n + m) / m
    b = _reference_vector(y, math.sqrt(n + m))
    overlap = (1.0 + (-1.0) ** f_true * math.sqrt(1.0 + m / n)) / math.sqrt(6.0)
    meta = {"y": y, "f": f_true, "eps": eps, "plus_overlap": overlap}
    log_event("promise_majority_instance", N=n, M=m, f=f_true, kappa=kappa)
    return QlsInstance(
        "promise_majority", seed, {"N": n, "M": m, "f": f_true}, b, kappa,
        operator=HermitianOperator(a, kappa_bound=kappa), meta=meta,
    )


def signed_majority_instance(
    n: int, m: int, f: Optional[int] = None, y: Optional[Sequence[int]] = None, seed: Optional[int] = None
) -> QlsInstance:
    """
    The majority system with y moved into the matrix: A' = D A D, b = u.

    D = diag((-1)^{y_1}, ..., (-1)^{y_N}, 1) and u = (1, ..., 1, sqrt(N + M)),
    so b = D u is the phase-reference vector and A'^{-1} u = D A^{-1} b.
    Undoing D on the solution recovers the ("+") overlap; `plus_overlap`
    applies the stored twist.
    """
    base = promise_majority_instance(n, m, f, y, seed)
    inst = _conjugate(base, "signed_majority", math.sqrt(n + m))
    log_event("signed_majority_instance", N=n, M=m, f=inst.meta["f"], kappa=inst.kappa)
    return inst


# ----------------------------------------------------------------------
# expander walks
# ----------------------------------------------------------------------
def spectral_gap(walk: np.ndarray) -> float:
    """min over eigenvalues other than the top one of 1 - |lambda|."""
    lam = np.linalg.eigvalsh(walk)
    rest = np.delete(lam, int(np.argmax(lam)))
    return float(1.0 - np.max(np.abs(rest))) if rest.size else 1.0


def expander_instance(
    n: int,
    d: int,
    m: int,
    f: int,
    seed: Optional[int] = None,
    c0: Optional[float] = None,
    min_gap: float = 0.2,
    graph: Optional[nx.Graph] = None,
    max_tries: int = 100,
    dad: bool = False,
) -> QlsInstance:
    """
    A = I - (1 - eps)(B (+) 0) for the walk B of a d-regular graph.

    With dad=True the hidden string moves into the entry signs,
    A'_ij = (-1)^{y_i + y_j} A_ij, and b becomes u = (1, ..., 1, sqrt(N) c0);
    the sparsity pattern stays independent of y.

    Args:
        n: Number of vertices N
        d: Degree, >= 3 with N d even
        m: Majority margin M of the hidden string
        f: Majority value
        seed: Seeds the graph and the hidden string
        c0: Phase-reference constant (default 100 / gap)
        min_gap: Required spectral gap of B
        graph: Use this d-regular graph instead of sampling one
        max_tries: Resampling budget for the gap threshold
        dad: Conjugate by the sign matrix D of the hidden string

    Returns:
        QlsInstance with the two-sided overlap bands in metadata
    """
    if d < 3 or (n * d) % 2 or d >= n:
        raise InstanceError("need 3 <= d < N with N d even", {"N": n, "d": d})
    base = config.resolve_seed(seed)
    tries = 0
    if graph is not None:
        degrees = {deg for _, deg in graph.degree()}
        if graph.number_of_nodes() != n or degrees != {d}:
            raise InstanceError("supplied graph is not d-regular on N vertices", {"degrees": sorted(degrees)})
        walk = nx.to_numpy_array(graph, nodelist=sorted(graph.nodes())) / d
        gap = spectral_gap(walk)
    else:
        gap = -1.0
        while gap < min_gap and tries < max_tries:
            g = nx.random_regular_graph(d, n, seed=base + tries)
            walk = nx.to_numpy_array(g, nodelist=range(n)) / d
            gap = spectral_gap(walk)
            tries += 1
    if gap < min_gap:
        raise InstanceError("spectral gap threshold not reached", {"gap": gap, "tries": tries, "min_gap": min_gap})

    c1 = 1.0 / gap
    c0 = 100.0 * c1 if c0 is None else float(c0)
    eps = m / (m + c0 * n)
    b_walk = np.zeros((n + 1, n + 1))
    b_walk[:n, :n] = walk
    a = np.eye(n + 1) - (1.0 - eps) * b_walk
    lam = np.linalg.eigvalsh(a)
    kappa = float(lam[-1] / lam[0])

    y = majority_string(n, m, f, base)
    b = _reference_vector(y, math.sqrt(n) * c0)
    meta = {
        "y": y,
        "f": f,
        "gap": gap,
        "c0": c0,
        "c1": c1,
        "eps": eps,
        "resamples": tries,
        "band": "high" if f == 0 else "low",
        "band_bounds": {"high": 0.92, "low": 0.06},
    }
    log_event("expander_instance", N=n, d=d, M=m, f=f, gap=gap, kappa=kappa, resamples=tries, dad=dad)
    params = {"N": n, "d": d, "M": m, "f": f, "c0": c0}
    inst = QlsInstance(
        "expander", seed, params, b, kappa,
        operator=HermitianOperator(a, kappa_bound=kappa), meta=meta,
    )
    if dad:
        inst = _conjugate(inst, "expander", math.sqrt(n) * c0)
        inst.params = {**params, "dad": True}
    return inst


def plus_overlap(instance: QlsInstance) -> float:
    """
    <"+"|A^{-1} b> with A^{-1} b normalized; signed, the states are real.

    For sign-conjugated instances the stored twist D is applied to the
    solution first, turning D A^{-1} b back into A^{-1} b.
    """
    x = instance.direct_solution()
    if "twist" in instance.meta:
        x = np.asarray(instance.meta["twist"]) * x
    x = x / np.linalg.norm(x)
    return float(np.vdot(plus_state(instance.dim - 1), x).real)


# ----------------------------------------------------------------------
# circuits and the clock construction
# ----------------------------------------------------------------------
@dataclass
class Gate:
    matrix: np.ndarray
    qubits: Tuple[int, ...]

    def __post_init__(self) -> None:
        u = np.asarray(self.matrix, dtype=complex)
        q = tuple(int(x) for x in self.qubits)
        if u.shape != (1 << len(q), 1 << len(q)) or len(q) not in (1, 2):
            raise TermSpecError("gates act on one or two qubits with a matching matrix", {"qubits": list(q)})
        if len(set(q)) != len(q):
            raise TermSpecError("gate qubits must differ", {"qubits": list(q)})
        if np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) > config.UNITARY_TOL:
            raise TermSpecError("gate matrix is not unitary", {"qubits": list(q)})
        self.matrix = u
        self.qubits = q

    def to_json(self) -> Dict[str, Any]:
        return {"qubits": list(self.qubits), **matrix_to_json(self.matrix)}

    @classmethod
    def from_json(cls, doc: Dict[str, Any]) -> "Gate":
        return cls(matrix_from_json(doc), tuple(doc["qubits"]))


CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
GATE_SETS = ("cnot", "haar")


def random_circuit(
    n: int,
    t: int,
    seed: Optional[int] = None,
    two_qubit_fraction: float = 0.5,
    gate_set: str = "cnot",
) -> List[Gate]:
    """
    T random gates, two-qubit with the given probability when n >= 2.

    Single-qubit gates are Haar-random. Two-qubit gates are CNOTs (control
    first) for gate_set "cnot", which keeps b = M^dag e_1 at most 3-sparse,
    or Haar-random for "haar".
    """
    if n < 1 or t < 1:
        raise InstanceError("need n >= 1 qubits and T >= 1 gates", {"n": n, "T": t})
    if gate_set not in GATE_SETS:
        raise InstanceError(f"unknown gate set {gate_set!r}", {"gate_sets": list(GATE_SETS)})
    rng = np.random.default_rng(config.resolve_seed(seed))
    gates = []
    for _ in range(t):
        if n >= 2 and rng.random() < two_qubit_fraction:
            qubits = tuple(int(q) for q in rng.choice(n, size=2, replace=False))
            matrix = CNOT if gate_set == "cnot" else haar_unitary(4, rng)
        else:
            qubits = (int(rng.integers(n)),)
            matrix = haar_unitary(2, rng)
        gates.append(Gate(matrix, qubits))
    return gates


def circuit_output(circuit: Sequence[Gate], n: int) -> np.ndarray:
    """U_{T-1} ... U_0 |0^n>."""
    state = np.zeros(1 << n, dtype=complex)
    state[0] = 1.0
    for gate in circuit:
        state = embed_local(gate.matrix, gate.qubits, [2] * n) @ state
    return state


def _clock_schedule(circuit: Sequence[Gate]) -> List[Optional[Gate]]:
    """Gate applied on the step t -> t + 1 over the 3T clock values; None means identity."""
    t = len(circuit)
    forward = list(circuit)
    idle: List[Optional[Gate]] = [None] * t
    backward = [Gate(circuit[t - k - 1].matrix.conj().T, circuit[t - k - 1].qubits) for k in range(t)]
    return forward + idle + backward


def fk_clock_unitary(circuit: Sequence[Gate], n: int) -> np.ndarray:
    """U = sum_t |t+1><t| (x) U_t, clock mod 3T as the most significant factor."""
    steps = _clock_schedule(circuit)
    clock = len(steps)
    dim = 1 << n
    u = np.zeros((clock * dim, clock * dim), dtype=complex)
    for t, gate in enumerate(steps):
        block = np.eye(dim) if gate is None else embed_local(gate.matrix, gate.qubits, [2] * n)
        nxt = (t + 1) % clock
        u[nxt * dim:(nxt + 1) * dim, t * dim:(t + 1) * dim] = block
    return u


def fk_m_matrix(circuit: Sequence[Gate], n: int) -> np.ndarray:
    """M = I - e^{-1/T} U."""
    u = fk_clock_unitary(circuit, n)
    return np.eye(u.shape[0]) - math.exp(-1.0 / len(circuit)) * u


def fk_inverse_series(circuit: Sequence[Gate], n: int) -> np.ndarray:
    """e^3/(e^3 - 1) sum_{t' < 3T} U^{t'} e^{-t'/T}, equal to M^{-1}."""
    u = fk_clock_unitary(circuit, n)
    t = len(circuit)
    total = np.zeros_like(u)
    power = np.eye(u.shape[0], dtype=complex)
    for k in range(3 * t):
        total += math.exp(-k / t) * power
        power = u @ power
    return total * math.e ** 3 / (math.e ** 3 - 1.0)


def _clock_term(clock: int, t: int, gate: Optional[Gate], delta: float, decay: float) -> LocalTerm:
    """
    delta I + e^{-1/T} (|t><t| + |t+1><t+1|) (x) I - e^{-1/T}(|t+1><t| (x) u + h.c.)
    on the clock and the gate's qubits.
    """
    nxt = (t + 1) % clock
    local = 1 if gate is None else gate.matrix.shape[0]
    u = np.eye(1) if gate is None else gate.matrix
    step = np.zeros((clock, clock))
    step[nxt, t] = 1.0
    diag = np.zeros((clock, clock))
    diag[t, t] = diag[nxt, nxt] = 1.0
    h = delta * np.eye(clock * local) + decay * (
        np.kron(diag, np.eye(local)) - np.kron(step, u) - np.kron(step.T, u.conj().T)
    )
    sites = (0,) if gate is None else (0,) + tuple(q + 1 for q in gate.qubits)
    return LocalTerm(matrix=h, sites=sites)


def feynman_kitaev_sumqls(circuit: Sequence[Gate], n: int, seed: Optional[int] = None) -> QlsInstance:
    """
    A = M^dag M as a sum of 3T clock terms, b = M^dag e_1.

    Site 0 of the spec is the 3T-level clock, sites 1..n the circuit qubits.

    Args:
        circuit: Gates acting on one or two of the n qubits
        n: Qubit count, at most 6
        seed: Recorded only

    Returns:
        QlsInstance with a SumHamiltonianSpec and the clock-window metadata
    """
    t = len(circuit)
    if t < 1 or not 1 <= n <= 6:
        raise InstanceError("need T >= 1 gates on 1..6 qubits", {"T": t, "n": n})
    if 3 * t * (1 << n) > config.MAX_DIM:
        raise InstanceError("clock system above the dense cap", {"dim": 3 * t * (1 << n)})
    for gate in circuit:
        if max(gate.qubits) >= n:
            raise InstanceError("gate addresses a qubit outside the register", {"qubits": list(gate.qubits)})

    clock = 3 * t
    decay = math.exp(-1.0 / t)
    delta = (1.0 + math.exp(-2.0 / t) - 2.0 * decay) / clock
    steps = _clock_schedule(circuit)
    terms = [_clock_term(clock, k, gate, delta, decay) for k, gate in enumerate(steps)]
    spec = SumHamiltonianSpec(n + 1, terms, dims=[clock] + [2] * n)

    m_mat = fk_m_matrix(circuit, n)
    b_vec = m_mat.conj().T[:, 0]
    b = StateVector(b_vec).normalize()
    lam = np.linalg.eigvalsh(spec.assemble())
    kappa_bound = 4.0 * t ** 2 / (1.0 - math.exp(-1.0)) ** 2
    window = math.exp(-2.0) / (1.0 + math.exp(-2.0) + math.exp(-4.0))
    meta = {
        "T": t,
        "n": n,
        "delta": delta,
        "kappa_measured": float(lam[-1] / lam[0]),
        "kappa_bound": kappa_bound,
        "inverse_gamma_bound": 5.01 * t ** 2,
        "window_probability": window,
        "d_b": int(np.count_nonzero(b_vec)),
        "circuit": [g.to_json() for g in circuit],
        "output": matrix_to_json(circuit_output(circuit, n)),
    }
    log_event("feynman_kitaev_sumqls", T=t, n=n, J=spec.J, delta=delta, kappa=meta["kappa_measured"])
    return QlsInstance(
        "feynman_kitaev", seed, {"n": n, "T": t}, b, kappa_bound, spec=spec, meta=meta,
    )


def clock_window_output(x: Union[StateVector, np.ndarray], t: int, n: int, reference: np.ndarray) -> Tuple[float, float]:
    """
    Post-select the clock on [T, 2T - 1].

    Returns:
        (probability of the window, fidelity of the qubit state with `reference`)
    """
    amps = x.amplitudes if isinstance(x, StateVector) else np.asarray(x, dtype=complex)
    amps = amps / np.linalg.norm(amps)
    rows = amps.reshape(3 * t, 1 << n)[t:2 * t]
    prob = float(np.sum(np.abs(rows) ** 2))
    if prob == 0.0:
        return 0.0, 0.0
    ref = np.asarray(reference, dtype=complex)
    ref = ref / np.linalg.norm(ref)
    # reduced state sum_t |row_t><row_t| / prob
    fidelity = float(np.sum(np.abs(rows @ ref.conj()) ** 2) / prob)
    return prob, fidelity


# ----------------------------------------------------------------------
# random positive-definite systems
# ----------------------------------------------------------------------
def random_pd_instance(
    n: int,
    kappa: float,
    seed: Optional[int] = None,
    b_model: str = "porter_thomas",
    eigenvalue: Optional[float] = None,
) -> QlsInstance:
    """
    Eigenvalues uniform on [1/kappa, 1] with both ends pinned, Haar eigenbasis.

    Args:
        n: Dimension, >= 2
        kappa: Condition number, > 1
        seed: Generator seed
        b_model: "porter_thomas" or "fixed_eigvec"
        eigenvalue: For fixed_eigvec, the eigenvalue whose eigenvector is b

    Returns:
        QlsInstance with ||A^{-1} b|| in metadata
    """
    if not kappa > 1.0:
        raise InstanceError("kappa must exceed 1", {"kappa": kappa})
    if n < 2:
        raise InstanceError("need N >= 2", {"N": n})
    seed = config.resolve_seed(seed)
    rng = np.random.default_rng(seed)
    lam = rng.uniform(1.0 / kappa, 1.0, size=n)
    lam[0], lam[-1] = 1.0 / kappa, 1.0
    vec = haar_unitary(n, rng)

    if b_model == "porter_thomas":
        b = porter_thomas(n, rng)
        params: Dict[str, Any] = {"N": n, "kappa": kappa, "b_model": b_model}
    elif b_model == "fixed_eigvec":
        if eigenvalue is None or not 1.0 / kappa - 1e-12 <= eigenvalue <= 1.0 + 1e-12:
            raise InstanceError("fixed_eigvec needs an eigenvalue in [1/kappa, 1]", {"eigenvalue": eigenvalue})
        idx = int(np.argmin(np.abs(lam - eigenvalue)))
        if abs(lam[idx] - eigenvalue) > 1e-12:
            if n < 3:
                raise InstanceError("no free eigenvalue slot for fixed_eigvec", {"N": n})
            idx = 1
            lam[idx] = eigenvalue
        b = vec[:, idx].copy()
        params = {"N": n, "kappa": kappa, "b_model": b_model, "eigenvalue": eigenvalue}
    else:
        raise InstanceError(f"unknown b model {b_model!r}")

    op = HermitianOperator.from_spectrum(lam, vec, kappa_bound=kappa, positive_definite=True)
    state = StateVector(b)
    inverse_norm = float(np.linalg.norm(op.solve(state.amplitudes)))
    meta = {"inverse_norm": inverse_norm}
    return QlsInstance("random_pd", seed, params, state, float(kappa), operator=op, meta=meta)


def random_sum_instance(
    n: int,
    j_terms: int,
    s: int,
    seed: Optional[int] = None,
    d_b: int = 2,
    spectrum: Tuple[float, float] = (0.2, 1.0),
) -> QlsInstance:
    """
    J random strictly positive-definite terms on s random qubits each.

    Args:
        n: Qubit count
        j_terms: Number of terms J
        s: Locality of every term
        seed: Generator seed
        d_b: Non-zero entries of b
        spectrum: Range the local eigenvalues are drawn from

    Returns:
        QlsInstance with a SumHamiltonianSpec and a sparse b
    """
    if not 1 <= s <= n or j_terms < 1:
        raise InstanceError("need 1 <= s <= n and J >= 1", {"n": n, "s": s, "J": j_terms})
    seed = config.resolve_seed(seed)
    rng = np.random.default_rng(seed)
    lo, hi = spectrum
    terms = []
    for _ in range(j_terms):
        sites = tuple(sorted(int(q) for q in rng.choice(n, size=s, replace=False)))
        local = 1 << s
        h = HermitianOperator.from_spectrum(rng.uniform(lo, hi, size=local), haar_unitary(local, rng))
        terms.append(LocalTerm(matrix=h.entries, sites=sites))
    spec = SumHamiltonianSpec(n, terms)

    dim = 1 << n
    b = np.zeros(dim, dtype=complex)
    pos = rng.choice(dim, size=min(d_b, dim), replace=False)
    b[pos] = rng.standard_normal(pos.size) + 1j * rng.standard_normal(pos.size)
    lam_min = sum(float(np.linalg.eigvalsh(t.matrix)[0]) for t in spec.terms)
    lam_max = sum(float(np.linalg.eigvalsh(t.matrix)[-1]) for t in spec.terms)
    return QlsInstance(
        "random_sum", seed, {"n": n, "J": j_terms, "s": s, "d_b": d_b},
        StateVector(b).normalize(), lam_max / lam_min, spec=spec,
    )


def identity_instance(n: int, index: int = 0) -> QlsInstance:
    """A = I with b = e_index; the solution is b."""
    op = HermitianOperator.identity(n, kappa_bound=1.0)
    return QlsInstance("identity", None, {"N": n, "index": index}, StateVector.basis(n, index), 1.0, operator=op)


# ----------------------------------------------------------------------
# regeneration
# ----------------------------------------------------------------------
def _fk_from_params(seed: Optional[int], params: Dict[str, Any]) -> QlsInstance:
    n, t = int(params["n"]), int(params["T"])
    circuit = random_circuit(n, t, seed, gate_set=params.get("gate_set", "cnot"))
    return feynman_kitaev_sumqls(circuit, n, seed)


GENERATORS: Dict[str, Callable[[Optional[int], Dict[str, Any]], QlsInstance]] = {
    "grover": lambda seed, p: grover_diagonal(int(p["N"]), int(p["M"]), seed=seed),
    "promise_majority": lambda seed, p: promise_majority_instance(int(p["N"]), int(p["M"]), int(p["f"]), seed=seed),
    "signed_majority": lambda seed, p: signed_majority_instance(int(p["N"]), int(p["M"]), int(p["f"]), seed=seed),
    "expander": lambda seed, p: expander_instance(
        int(p["N"]), int(p.get("d", 6)), int(p["M"]), int(p["f"]), seed=seed, c0=p.get("c0"),
        dad=bool(p.get("dad", False)),
    ),
    "feynman_kitaev": _fk_from_params,
    "random_pd": lambda seed, p: random_pd_instance(
        int(p["N"]), float(p["kappa"]), seed, p.get("b_model", "porter_thomas"), p.get("eigenvalue")
    ),
    "random_sum": lambda seed, p: random_sum_instance(
        int(p["n"]), int(p["J"]), int(p["s"]), seed, int(p.get("d_b", 2))
    ),
    "identity": lambda seed, p: identity_instance(int(p["N"]), int(p.get("index", 0))),
}


def generate_instance(family: str, seed: Optional[int], params: Dict[str, Any]) -> QlsInstance:
    """Deterministic regeneration from (family, seed, params)."""
    try:
        gen = GENERATORS[family]
    except KeyError:
        raise InstanceError(f"unknown instance family {family!r}", {"families": sorted(GENERATORS)})
    try:
        return gen(seed, params)
    except KeyError as e:
        raise InstanceError(f"missing parameter {e} for family {family!r}")


def sparse_rhs(instance: QlsInstance) -> Dict[str, Any]:
    """b as the sparse JSON envelope."""
    amps = instance.b.amplitudes
    pos = np.flatnonzero(amps)
    return sparse_to_json(pos, amps[pos])
