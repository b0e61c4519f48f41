"""
PDQLS SKILL MODULE: VARIABLE-TIME AMPLITUDE AMPLIFICATION
=========================================================
This file is part of THE LAB - solver pipelines.

Variable-stopping-time solver for positive-definite systems. Stage j
checks, through a window W_j, whether the eigenvalue of B = I - eta*A is
far enough from 1; if so the branch stops and applies the stage
approximant P_j (accurate on [-1, 1 - delta_j]) into a flag qubit.
Amplitude amplification runs after every stage on the split between
"maybe good" (still running, or stopped with flag 1) and "bad" (stopped
with flag 0). A final uncompute of the clock maps the successful branch
back to |0>|A^{-1}b>.

Everything is diagonal in the eigenbasis of B, so the state is kept as
eigen-coefficients per clock branch and flag; the amplification acts in
closed form on the two-dimensional good/bad span.
"""

import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from numpy.polynomial import chebyshev as C

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from core import config
from core.errors import NumericalCheckError, SpectrumPromiseError, ValidationError
from core.linalg import (
    HermitianOperator,
    StateVector,
    as_operator,
    as_state,
    trace_distance,
)
from core.polyapprox import (
    InverseApproximant,
    WindowPolynomial,
    build_inverse_approximant,
    build_window,
    least_degree,
)
from core.runlog import log_event


# ----------------------------------------------------------------------
# schedule
# ----------------------------------------------------------------------
@dataclass
class VttStage:
    index: int
    delta: float
    window: WindowPolynomial
    approximant: InverseApproximant
    t: int = 0

    @property
    def deg_w(self) -> int:
        return self.window.degree

    @property
    def deg_p(self) -> int:
        return self.approximant.degree

    @property
    def cost(self) -> int:
        """U_B accesses of one application of the stage unitary."""
        return self.deg_w + self.deg_p


@dataclass
class VttSchedule:
    """Stage windows, stage approximants and stopping times for one (kappa, eta, eps)."""

    kappa: float
    eta: float
    eps: float
    eps_tilde: float
    stages: List[VttStage]
    K: float

    @property
    def m(self) -> int:
        return len(self.stages)

    @property
    def deltas(self) -> List[float]:
        return [s.delta for s in self.stages]

    @property
    def stopping_times(self) -> List[int]:
        return [s.t for s in self.stages]

    def to_json(self) -> Dict[str, Any]:
        return {
            "kappa": self.kappa,
            "eta": self.eta,
            "eps": self.eps,
            "eps_tilde": self.eps_tilde,
            "m": self.m,
            "K": self.K,
            "stages": [
                {"j": s.index, "delta": s.delta, "deg_P": s.deg_p, "deg_W": s.deg_w, "t": s.t, "ell": s.approximant.ell}
                for s in self.stages
            ],
        }


def eps_tilde_for(kappa: float, eps: float) -> float:
    """eps / (4 kappa sqrt(log2 kappa + 1))."""
    return eps / (4.0 * kappa * math.sqrt(math.log2(kappa) + 1.0))


def build_schedule(kappa: float, eta: float = 1.0, eps: float = 0.1) -> VttSchedule:
    """
    m = ceil(log2 kappa) + 1 stages with delta_j = eta 2^-j.

    Args:
        kappa: Condition-number bound, > 1
        eta: Rescaling constant in (0, 1]
        eps: Target precision in (0, 1)

    Returns:
        VttSchedule; the last window is the constant 1
    """
    if not kappa > 1.0:
        raise ValidationError("kappa must exceed 1", {"kappa": kappa})
    if not 0.0 < eta <= 1.0:
        raise ValidationError("eta must lie in (0, 1]", {"eta": eta})
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie in (0, 1)", {"eps": eps})

    m = int(math.ceil(math.log2(kappa))) + 1
    eps_t = eps_tilde_for(kappa, eps)
    stages: List[VttStage] = []
    t = 0
    for j in range(1, m + 1):
        delta = eta * 2.0 ** (-j)
        window = build_window(eps_t, delta) if j < m else WindowPolynomial.unit()
        # accurate on [-1, 1 - delta_j]: the domain of an approximant with kappa_j = 1/delta_j
        kappa_j = 1.0 / delta
        ell = least_degree(kappa_j, eps_t)
        approximant = build_inverse_approximant(ell, kappa_j)
        t += window.degree + approximant.degree
        stages.append(VttStage(index=j, delta=delta, window=window, approximant=approximant, t=t))

    K = max(s.approximant.K for s in stages)
    schedule = VttSchedule(kappa=float(kappa), eta=float(eta), eps=float(eps), eps_tilde=eps_t, stages=stages, K=K)
    log_event("vtaa_schedule", **schedule.to_json())
    return schedule


# ----------------------------------------------------------------------
# state
# ----------------------------------------------------------------------
@dataclass
class VtaaState:
    """
    Eigen-coefficients of the clock-zero branch and of every stopped
    branch (stage j, flag f). branches[j - 1, f] belongs to |1_j>|f>.
    """

    clock: np.ndarray
    branches: np.ndarray

    @classmethod
    def initial(cls, beta: np.ndarray, m: int) -> "VtaaState":
        return cls(clock=beta.astype(complex).copy(), branches=np.zeros((m, 2, beta.size), dtype=complex))

    def norm2(self) -> float:
        return float(np.sum(np.abs(self.clock) ** 2) + np.sum(np.abs(self.branches) ** 2))

    def maybe_good2(self, j: int) -> float:
        """Running branch plus flag-1 branches of stages <= j."""
        return float(np.sum(np.abs(self.clock) ** 2) + np.sum(np.abs(self.branches[:j, 1]) ** 2))

    def success2(self) -> float:
        return float(np.sum(np.abs(self.branches[:, 1]) ** 2))

    def rotate(self, j: int, theta: float, k: int) -> None:
        """Closed-form k-step amplification on the split at stage j."""
        if k == 0:
            return
        good = math.sin((2 * k + 1) * theta) / math.sin(theta)
        cos_t = math.cos(theta)
        bad = math.cos((2 * k + 1) * theta) / cos_t if cos_t > 1e-15 else 0.0
        self.clock *= good
        self.branches[:j, 1] *= good
        self.branches[:j, 0] *= bad


def choose_rounds(theta: float) -> int:
    """
    Least k >= 0 with pi/(8 theta) - 1/2 <= k; when that k exceeds
    pi/(4 theta) - 1/2 the interval holds no integer and floor of the
    upper end is used instead.
    """
    lower = math.pi / (8.0 * theta) - 0.5
    upper = math.pi / (4.0 * theta) - 0.5
    k = max(0, int(math.ceil(lower)))
    if k > upper:
        k = max(0, int(math.floor(upper)))
    return k


@dataclass
class VtaaReport:
    p_succ: float
    p_succ_unamplified: float
    trace_error: float
    ideal_distance: float
    uncompute_leakage: float
    stopping_probabilities: List[float]
    final_unstopped: float
    t_avg: float
    queries: Dict[str, int]
    stages: List[Dict[str, Any]]
    norm_drift: float
    diagnostics: List[str] = field(default_factory=list)
    state: Optional[VtaaState] = None

    def to_json(self) -> Dict[str, Any]:
        return {k: v for k, v in self.__dict__.items() if k != "state"}


def _stage_scalars(schedule: VttSchedule, mu: np.ndarray):
    x = np.clip(mu, -1.0, 1.0)
    w = np.array([C.chebval(x, s.window.cheb_coeffs) for s in schedule.stages])
    p = np.array([C.chebval(x, s.approximant.cheb_coeffs) for s in schedule.stages]) / schedule.K
    sw = np.sqrt(np.clip(1.0 - w ** 2, 0.0, None))
    sp = np.sqrt(np.clip(1.0 - p ** 2, 0.0, None))
    # M_j = prod_{i <= j} sqrt(1 - W_i^2), with M_0 = 1
    m_prev = np.vstack([np.ones_like(x), np.cumprod(sw, axis=0)[:-1]])
    return w, p, sw, sp, m_prev


def simulate_vst(
    a: Union[HermitianOperator, np.ndarray],
    b: Union[StateVector, np.ndarray],
    schedule: VttSchedule,
    amplify: Union[str, Sequence[int]] = "auto",
):
    """
    Run the staged algorithm with amplification after every stage.

    Args:
        a: Positive-definite A with spectrum in [1/kappa, 1]
        b: Normalized right-hand side
        schedule: From build_schedule
        amplify: "auto" or an explicit list of k_j (zeros = unamplified)

    Returns:
        (output StateVector after uncompute and flag-1 post-selection, VtaaReport)
    """
    op = as_operator(a)
    state_b = as_state(b)
    if not state_b.normalized:
        raise ValidationError("right-hand side must be normalized", {"norm": state_b.norm})
    op.check_positive_definite()
    if op.lambda_min < 1.0 / schedule.kappa - 1e-12 or op.lambda_max > 1.0 + 1e-12:
        raise SpectrumPromiseError(
            "spectrum outside [1/kappa, 1]",
            {"lambda_min": op.lambda_min, "lambda_max": op.lambda_max, "kappa": schedule.kappa},
        )
    m = schedule.m
    if amplify != "auto":
        rounds = [int(k) for k in amplify]
        if len(rounds) != m or min(rounds) < 0:
            raise ValidationError("explicit rounds need one non-negative k per stage", {"m": m})

    lam, vec = op.spectrum
    mu = 1.0 - schedule.eta * lam
    beta = vec.conj().T @ state_b.amplitudes
    w, p, sw, sp, m_prev = _stage_scalars(schedule, mu)

    state = VtaaState.initial(beta, m)
    stages: List[Dict[str, Any]] = []
    diagnostics: List[str] = []
    drift = 0.0
    q_b, q_big = 1, 0
    for j in range(1, m + 1):
        stage = schedule.stages[j - 1]
        stop = w[j - 1] * state.clock
        state.branches[j - 1, 0] = sp[j - 1] * stop
        state.branches[j - 1, 1] = p[j - 1] * stop
        state.clock = sw[j - 1] * state.clock

        mg2 = min(1.0, state.maybe_good2(j))
        theta = math.asin(math.sqrt(mg2))
        if theta < config.THETA_SKIP:
            k = 0
            diagnostics.append(f"stage {j}: no maybe-good mass, amplification skipped")
        elif amplify == "auto":
            k = choose_rounds(theta)
        else:
            k = rounds[j - 1]
        state.rotate(j, theta, k)
        drift = max(drift, abs(state.norm2() - 1.0))

        q_big = (2 * k + 1) * (stage.cost + q_big)
        q_b = (2 * k + 1) * q_b
        stages.append({
            "j": j,
            "delta": stage.delta,
            "deg_P": stage.deg_p,
            "deg_W": stage.deg_w,
            "theta": theta,
            "k": k,
            "t": stage.t,
            "maybe_good": mg2,
            "maybe_good_after": state.maybe_good2(j),
        })

    # clock uncompute: only the clock-zero component of B^dag survives post-selection
    success = state.branches[:, 1]
    phi_out = np.sum(m_prev * w * success, axis=0)
    p_succ = state.success2()
    leakage = max(0.0, p_succ - float(np.sum(np.abs(phi_out) ** 2)))
    q_big += sum(s.deg_w for s in schedule.stages)

    # unamplified bookkeeping
    weights = m_prev * w
    p_stop = [float(np.sum(np.abs(weights[j] * beta) ** 2)) for j in range(m)]
    unstopped = float(np.sum(np.abs(np.prod(sw, axis=0) * beta) ** 2))
    p_unamp = float(np.sum(np.abs(weights * p * beta) ** 2))
    times = np.array(schedule.stopping_times, dtype=float)
    t_avg = float(math.sqrt(np.sum(np.array(p_stop) * times ** 2)))

    x_eigen = beta / lam
    exact = vec @ x_eigen
    if np.linalg.norm(phi_out) == 0.0:
        raise NumericalCheckError("uncomputed success branch vanished")
    x = StateVector(vec @ phi_out).normalize()
    trace_error = trace_distance(x, exact)
    ideal = weights * x_eigen
    ideal_distance = trace_distance(success.reshape(-1), ideal.reshape(-1)) if p_succ > 0.0 else 1.0

    report = VtaaReport(
        p_succ=p_succ,
        p_succ_unamplified=p_unamp,
        trace_error=trace_error,
        ideal_distance=ideal_distance,
        uncompute_leakage=leakage,
        stopping_probabilities=p_stop,
        final_unstopped=unstopped,
        t_avg=t_avg,
        queries={"U_b": q_b, "U_B": q_big},
        stages=stages,
        norm_drift=drift,
        diagnostics=diagnostics,
        state=state,
    )
    log_event(
        "simulate_vst",
        N=op.dim, kappa=schedule.kappa, m=m, p_succ=p_succ, trace_error=trace_error,
        QUb=q_b, QUB=q_big, rounds=[s["k"] for s in stages],
    )
    return x, report


def gamma_factor(
    a: Union[HermitianOperator, np.ndarray],
    b: Union[StateVector, np.ndarray],
    kappa: Optional[float] = None,
) -> float:
    """Gamma = sqrt(kappa) ||A^{-1/2} b|| / ||A^{-1} b||, between 1 and sqrt(kappa)."""
    op = as_operator(a)
    op.check_positive_definite()
    lam, vec = op.spectrum
    beta = vec.conj().T @ as_state(b).amplitudes
    k = kappa or op.kappa_bound or op.kappa
    half = float(np.linalg.norm(beta / np.sqrt(lam)))
    full = float(np.linalg.norm(beta / lam))
    return math.sqrt(k) * half / full


def vtaa_cost_report(
    schedule: VttSchedule,
    report: VtaaReport,
    inverse_norm: Optional[float] = None,
    constant: float = config.VTAA_COST_CONSTANT,
    strict: bool = True,
) -> Dict[str, Any]:
    """
    Measured oracle counts against the variable-time bound
    t_max sqrt(m) + (t_avg / sqrt(p)) sqrt(m log(t_max / t_min)).

    Args:
        schedule: The schedule the report was produced with
        report: simulate_vst report
        inverse_norm: ||A^{-1} b||, enables the U_b comparison
        constant: Allowed ratio measured / bound
        strict: Raise NumericalCheckError when the ratio exceeds `constant`

    Returns:
        Dict of measured counts, bound values and ratios
    """
    m = schedule.m
    times = schedule.stopping_times
    t_max, t_min = float(times[-1]), float(times[0])
    p = report.p_succ_unamplified
    bound = t_max * math.sqrt(m) + (report.t_avg / math.sqrt(p)) * math.sqrt(m * math.log(t_max / t_min))
    measured = report.queries["U_B"]
    ratio = measured / bound
    thetas = [s["theta"] for s in report.stages if s["theta"] >= config.THETA_SKIP]
    preprocessing = sum(1.0 / th for th in thetas) * math.log(1.0 / config.PHASE_ESTIMATION_FAIL)

    out: Dict[str, Any] = {
        "m": m,
        "t_max": t_max,
        "t_min": t_min,
        "t_avg": report.t_avg,
        "p_succ_unamplified": p,
        "QUB": measured,
        "QUb": report.queries["U_b"],
        "bound": bound,
        "ratio": ratio,
        "constant": constant,
        "within_bound": ratio <= constant,
        "preprocessing_cost": preprocessing,
    }
    if inverse_norm is not None:
        ub_scale = math.sqrt(math.log(schedule.kappa)) + schedule.kappa / inverse_norm
        out["QUb_scale"] = ub_scale
        out["QUb_ratio"] = (report.queries["U_b"] - 1) / ub_scale
    log_event("vtaa_cost_report", **out)
    if strict and not out["within_bound"]:
        raise NumericalCheckError("measured U_B count exceeds the variable-time bound", out)
    return out
