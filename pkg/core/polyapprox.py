"""
PDQLS CORE MODULE: POLYNOMIAL APPROXIMANTS
==========================================
This file is part of THE VAULT - shared substrate for every pipeline.

Chebyshev-basis polynomials used by the solvers:

* the shifted and rescaled Chebyshev polynomial T_hat(x) = T_l(y(x)) / T_l(1 + delta),
  with y(x) = (x + 1/(2 kappa)) / (1 - 1/(2 kappa)) and delta = 1/(kappa - 1/2);
* the inverse approximant P(x) = (1 - T_hat(x))^2 / (1 - x) of degree 2l - 1,
  which approximates 1/(1 - x) on D_B = [-1, 1 - 1/kappa] and vanishes at x = 1;
* even windowing polynomials close to 1 on [0, 1 - 2 delta] and close to 0
  on [1 - delta, 1], built from a product of two Gaussian CDFs.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import scipy.fft
from numpy.polynomial import chebyshev as C
from scipy.optimize import minimize_scalar
from scipy.special import erfc, ndtri

from core import config
from core.errors import ValidationError, WindowConstructionError
from core.linalg import HermitianOperator
from core.runlog import log_event


# ----------------------------------------------------------------------
# Chebyshev plumbing
# ----------------------------------------------------------------------
def clenshaw_eval(coeffs, x):
    """
    Evaluate sum_k c_k T_k(x) by Clenshaw's backward recurrence.

    Args:
        coeffs: Chebyshev-T coefficients, lowest degree first
        x: Scalar or array inside [-1, 1]

    Returns:
        Series value(s), same shape as x
    """
    xa = np.asarray(x, dtype=float)
    if xa.size and (np.min(xa) < -1.0 - 1e-12 or np.max(xa) > 1.0 + 1e-12):
        raise ValidationError(
            "Chebyshev series evaluated outside [-1, 1]",
            {"min": float(np.min(xa)), "max": float(np.max(xa))},
        )
    out = C.chebval(xa, np.asarray(coeffs, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def chebyshev_coefficients(f, degree: int) -> np.ndarray:
    """
    Coefficients of the degree-`degree` interpolant of f at the first-kind
    Chebyshev nodes (all interior), computed with a type-II DCT.
    """
    n = degree + 1
    nodes = np.cos(np.pi * (np.arange(n) + 0.5) / n)
    values = np.asarray(f(nodes), dtype=float)
    coeffs = scipy.fft.dct(values, type=2) / n
    coeffs[0] *= 0.5
    return coeffs


def chebyshev_t(ell: int, y) -> np.ndarray:
    """
    T_ell(y) on the real line: three-term recurrence inside [-1, 1],
    cosh closed form outside it.
    """
    ya = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty_like(ya)
    inside = np.abs(ya) <= 1.0
    unit = np.zeros(ell + 1)
    unit[ell] = 1.0
    out[inside] = C.chebval(ya[inside], unit)
    outside = ~inside
    if np.any(outside):
        sign = np.where(ya[outside] < 0.0, (-1.0) ** ell, 1.0)
        with np.errstate(over="ignore"):
            out[outside] = sign * np.cosh(ell * np.arccosh(np.abs(ya[outside])))
    return out


def _log_cosh(t: np.ndarray) -> np.ndarray:
    t = np.abs(t)
    return t + np.log1p(np.exp(-2.0 * t)) - math.log(2.0)


# ----------------------------------------------------------------------
# shifted Chebyshev polynomial
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ShiftedChebyshev:
    """T_hat_{ell,kappa}: equals 1 at x = 1, exponentially small on D_B."""

    ell: int
    kappa: float

    def __post_init__(self) -> None:
        if self.ell < 1:
            raise ValidationError("degree must be at least 1", {"ell": self.ell})
        if not self.kappa > 1.0:
            raise ValidationError("kappa must exceed 1", {"kappa": self.kappa})

    @property
    def delta(self) -> float:
        return 1.0 / (self.kappa - 0.5)

    @property
    def a(self) -> float:
        """arccosh(1 + delta), the growth rate of T_ell beyond 1."""
        # taken through y(1) so that T_hat(1) == 1 to the last bit
        return float(np.arccosh(self.y(1.0)))

    @property
    def tau(self) -> float:
        """1 / T_ell(1 + delta), the value of T_hat at x = 1 - 1/kappa."""
        return math.exp(-float(_log_cosh(np.array(self.ell * self.a))))

    def y(self, x):
        h = 1.0 / (2.0 * self.kappa)
        return (np.asarray(x, dtype=float) + h) / (1.0 - h)

    def values(self, x) -> np.ndarray:
        """Vectorized T_hat(x)."""
        y = np.atleast_1d(self.y(x))
        out = np.empty_like(y)
        log_den = float(_log_cosh(np.array(self.ell * self.a)))
        inside = np.abs(y) <= 1.0
        unit = np.zeros(self.ell + 1)
        unit[self.ell] = 1.0
        out[inside] = C.chebval(y[inside], unit) * math.exp(-log_den)
        outside = ~inside
        if np.any(outside):
            yo = y[outside]
            sign = np.where(yo < 0.0, (-1.0) ** self.ell, 1.0)
            out[outside] = sign * np.exp(_log_cosh(self.ell * np.arccosh(np.abs(yo))) - log_den)
        return out

    def __call__(self, x):
        return shifted_cheb_eval(self, x)


def shifted_cheb_eval(c: ShiftedChebyshev, x):
    """T_ell(y(x)) / T_ell(1 + delta) for scalar or array x."""
    out = c.values(x)
    return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))


# ----------------------------------------------------------------------
# inverse approximant
# ----------------------------------------------------------------------
@dataclass
class InverseApproximant:
    """
    P_{2l-1,kappa}(x) = (1 - T_hat(x))^2 / (1 - x) in the Chebyshev-T basis.
    K = 2 max_{[-1,1]} |P| so that P/K is bounded by 1/2.
    """

    ell: int
    kappa: float
    cheb_coeffs: np.ndarray
    K: float
    meta: Dict[str, Any] = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return 2 * self.ell - 1

    @property
    def normalized_coeffs(self) -> np.ndarray:
        return self.cheb_coeffs / self.K

    def __call__(self, x):
        return clenshaw_eval(self.cheb_coeffs, x)

    def to_json(self) -> Dict[str, Any]:
        return {
            "basis": "chebyshev-T",
            "coeffs": [float(c) for c in self.cheb_coeffs],
            "meta": {"ell": self.ell, "kappa": self.kappa, "K": self.K, **self.meta},
        }


def _inverse_coefficients(ell: int, kappa: float) -> np.ndarray:
    t_hat = ShiftedChebyshev(ell, kappa)

    def p(x: np.ndarray) -> np.ndarray:
        return (1.0 - t_hat.values(x)) ** 2 / (1.0 - x)

    coeffs = chebyshev_coefficients(p, 2 * ell - 1)
    # double root at x = 1: T_k(1) = 1 for every k
    coeffs[0] -= float(np.sum(coeffs))
    return coeffs


def max_abs_on_interval(coeffs: np.ndarray, lo: float = -1.0, hi: float = 1.0, points: Optional[int] = None) -> float:
    """
    max |p| on [lo, hi]: dense grid scan, then bounded Brent refinement
    (golden-section with parabolic steps) around the best grid points.
    """
    degree = max(1, len(coeffs) - 1)
    n = points or max(config.K_GRID_FACTOR * degree, config.K_GRID_MIN)
    grid = np.linspace(lo, hi, n)
    vals = np.abs(C.chebval(grid, coeffs))
    best = float(np.max(vals))
    step = grid[1] - grid[0]
    for i in np.argsort(vals)[-3:]:
        a = max(lo, grid[i] - step)
        b = min(hi, grid[i] + step)
        res = minimize_scalar(
            lambda t: -abs(C.chebval(t, coeffs)),
            bounds=(a, b),
            method="bounded",
            options={"xatol": 1e-13},
        )
        best = max(best, float(-res.fun))
    return best


def build_inverse_approximant(ell: int, kappa: float) -> InverseApproximant:
    """
    Interpolate P at 2l interior Chebyshev nodes and compute K.

    Args:
        ell: Degree parameter of T_hat (P has degree 2l - 1)
        kappa: Condition-number parameter, > 1

    Returns:
        InverseApproximant with P(1) = 0 and K = 2 max |P|
    """
    if not kappa > 1.0:
        raise ValidationError("kappa must exceed 1", {"kappa": kappa})
    if int(ell) < 1:
        raise ValidationError("degree must be at least 1", {"ell": ell})
    ell = int(ell)
    coeffs = _inverse_coefficients(ell, kappa)
    K = 2.0 * max_abs_on_interval(coeffs)
    return InverseApproximant(ell=ell, kappa=float(kappa), cheb_coeffs=coeffs, K=K)


def _sup_error(coeffs: np.ndarray, kappa: float, points: int = config.GRID_POINTS) -> float:
    grid = np.linspace(-1.0, 1.0 - 1.0 / kappa, points)
    return float(np.max(np.abs(C.chebval(grid, coeffs) - 1.0 / (1.0 - grid))))


def approx_error_sup(p: InverseApproximant) -> float:
    """max |P(x) - 1/(1 - x)| over a 10^4-point grid of D_B = [-1, 1 - 1/kappa]."""
    return _sup_error(p.cheb_coeffs, p.kappa)


def degree_for_precision(kappa: float, eps: float) -> int:
    """
    Smallest l with |T_hat| <= eps/(3 kappa) on D_B, the sufficient
    condition for sup error <= eps.
    """
    c = ShiftedChebyshev(1, kappa)
    target = max(1.0, 3.0 * kappa / eps)
    return max(1, int(math.ceil(math.acosh(target) / c.a)))


def reference_degree(kappa: float) -> int:
    """l = ceil(13.1 + 9.27 sqrt(kappa - 1/2))."""
    return int(math.ceil(13.1 + 9.27 * math.sqrt(kappa - 0.5)))


def least_degree(kappa: float, eps: float, ell_cap: int = 1 << 16) -> int:
    """
    Least l whose grid-certified sup error is at most eps: doubling,
    then bisection between the last failing and first passing degree.
    """
    if eps <= 0.0:
        raise ValidationError("target precision must be positive", {"eps": eps})

    def passes(ell: int) -> bool:
        return _sup_error(_inverse_coefficients(ell, kappa), kappa) <= eps

    lo, hi = 0, 1
    while not passes(hi):
        lo, hi = hi, hi * 2
        if hi > ell_cap:
            raise ValidationError(
                "no approximant degree reaches the target precision",
                {"kappa": kappa, "eps": eps, "ell_cap": ell_cap},
            )
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi


def normalization_bounds(ell: int, kappa: float) -> Dict[str, float]:
    """
    Rigorous bracket on K:
    2 kappa (1 - tau)^2 <= K <= 2 (1 + tau) l tanh(l a) / (sinh(a) (1 - 1/(2 kappa))).
    """
    c = ShiftedChebyshev(ell, kappa)
    a, tau = c.a, c.tau
    upper = 2.0 * (1.0 + tau) * ell * math.tanh(ell * a) / (math.sinh(a) * (1.0 - 0.5 / kappa))
    return {"lower": 2.0 * kappa * (1.0 - tau) ** 2, "upper": upper, "tau": tau}


def normalization_report(kappas: Iterable[float]) -> List[Dict[str, Any]]:
    """K / kappa at l = ceil(13.1 + 9.27 sqrt(kappa - 1/2)) with its bracket."""
    rows = []
    for kappa in kappas:
        ell = reference_degree(kappa)
        p = build_inverse_approximant(ell, kappa)
        bounds = normalization_bounds(ell, kappa)
        rows.append({
            "kappa": float(kappa),
            "ell": ell,
            "K": p.K,
            "K_over_kappa": p.K / kappa,
            "lower": bounds["lower"],
            "upper": bounds["upper"],
            "meets_constant": p.K <= config.NORMALIZATION_CONSTANT * kappa,
            "sup_error": approx_error_sup(p),
        })
    log_event("normalization_report", rows=rows)
    return rows


def curve_samples(p: InverseApproximant, grid: int = 2000) -> List[Dict[str, float]]:
    """(x, P(x), 1/(1 - x)) rows on [-1, 1), for plotting the approximant."""
    xs = np.linspace(-1.0, 1.0, grid, endpoint=False)
    ps = C.chebval(xs, p.cheb_coeffs)
    return [{"x": float(x), "P": float(v), "inverse": float(1.0 / (1.0 - x))} for x, v in zip(xs, ps)]


def apply_polynomial(coeffs: np.ndarray, h: HermitianOperator) -> np.ndarray:
    """Chebyshev series evaluated at a Hermitian operator with spectrum in [-1, 1]."""
    lam = h.eigenvalues
    if lam[0] < -1.0 - 1e-12 or lam[-1] > 1.0 + 1e-12:
        raise ValidationError(
            "operator spectrum outside [-1, 1]", {"min": float(lam[0]), "max": float(lam[-1])}
        )
    return h.apply_function(lambda x: C.chebval(np.clip(x, -1.0, 1.0), coeffs))


# ----------------------------------------------------------------------
# windowing polynomials
# ----------------------------------------------------------------------
def normal_cdf(t):
    """Phi(t) through erfc, accurate in the far left tail."""
    return 0.5 * erfc(-np.asarray(t, dtype=float) / math.sqrt(2.0))


def window_sigma(eps: float, delta: float) -> float:
    """Largest sigma with Phi(-0.5 delta / sigma) <= eps / 4."""
    z = -float(ndtri(eps / 4.0))
    return 0.5 * delta / z


@dataclass
class WindowPolynomial:
    """Even polynomial near 1 on [0, 1-2 delta] and near 0 on [1-delta, 1]."""

    eps: float
    delta: float
    sigma: float
    degree: int
    cheb_coeffs: np.ndarray
    scale: float = 1.0
    bands: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def unit(cls) -> "WindowPolynomial":
        """W = 1, the last stage window."""
        return cls(eps=0.0, delta=0.0, sigma=0.0, degree=0, cheb_coeffs=np.array([1.0]))

    def __call__(self, x):
        return clenshaw_eval(self.cheb_coeffs, x)

    def to_json(self) -> Dict[str, Any]:
        return {
            "basis": "chebyshev-T",
            "coeffs": [float(c) for c in self.cheb_coeffs],
            "meta": {
                "eps": self.eps,
                "delta": self.delta,
                "sigma": self.sigma,
                "degree": self.degree,
                "scale": self.scale,
            },
        }


def window_target(eps: float, delta: float):
    sigma = window_sigma(eps, delta)
    shift = 1.0 - 1.5 * delta

    def w(x: np.ndarray) -> np.ndarray:
        return normal_cdf((x + shift) / sigma) * normal_cdf((-x + shift) / sigma)

    return w, sigma


def window_bands(coeffs: np.ndarray, eps: float, delta: float, points: int = config.GRID_POINTS) -> Dict[str, float]:
    """Measured band quantities of a window on a uniform grid of [-1, 1]."""
    grid = np.linspace(-1.0, 1.0, points)
    vals = C.chebval(grid, coeffs)
    center = (grid >= 0.0) & (grid <= 1.0 - 2.0 * delta)
    edge = (grid >= 1.0 - delta) & (grid <= 1.0)
    return {
        "max_abs": float(np.max(np.abs(vals))),
        "center_min": float(np.min(vals[center])) if np.any(center) else 1.0,
        "center_max": float(np.max(vals[center])) if np.any(center) else 1.0,
        "edge_max": float(np.max(np.abs(vals[edge]))) if np.any(edge) else 0.0,
    }


def _bands_hold(bands: Dict[str, float], eps: float) -> bool:
    return (
        bands["max_abs"] <= 1.0
        and bands["center_min"] >= 1.0 - eps
        and bands["center_max"] <= 1.0
        and bands["edge_max"] <= eps
    )


def _window_at_degree(f, degree: int, eps: float, delta: float):
    coeffs = chebyshev_coefficients(f, degree)
    coeffs[1::2] = 0.0
    peak = max_abs_on_interval(coeffs, points=max(config.GRID_POINTS, 4 * degree))
    scaled = coeffs / peak
    bands = window_bands(scaled, eps, delta)
    return scaled, peak, bands


def build_window(eps: float, delta: float, degree_cap: int = config.WINDOW_DEGREE_CAP) -> WindowPolynomial:
    """
    Even Chebyshev interpolant of Phi((x+1-1.5d)/s) Phi((-x+1-1.5d)/s).

    The degree doubles from ceil(sigma^-1/2) until the band checks pass,
    then bisection over even degrees finds the least passing degree.

    Args:
        eps: Band tolerance in (0, 1/2]
        delta: Edge width in (0, 1/2]
        degree_cap: Largest degree tried

    Returns:
        WindowPolynomial renormalized by its maximum on [-1, 1]
    """
    if not 0.0 < eps <= 0.5 or not 0.0 < delta <= 0.5:
        raise ValidationError("window needs eps, delta in (0, 1/2]", {"eps": eps, "delta": delta})
    f, sigma = window_target(eps, delta)

    def even(d: float) -> int:
        d = int(math.ceil(d))
        return max(2, d + (d % 2))

    degree = even(sigma ** -0.5)
    failed = 0
    attempt = None
    while True:
        coeffs, peak, bands = _window_at_degree(f, degree, eps, delta)
        if _bands_hold(bands, eps):
            attempt = (degree, coeffs, peak, bands)
            break
        failed = degree
        if degree >= degree_cap:
            raise WindowConstructionError(
                "window band constraints fail at the degree cap",
                {"eps": eps, "delta": delta, "sigma": sigma, "degree": degree, **bands},
            )
        degree = min(degree_cap, degree * 2)

    lo, hi = failed, attempt[0]
    while hi - lo > 2:
        mid = even((lo + hi) / 2.0)
        if mid >= hi:
            break
        coeffs, peak, bands = _window_at_degree(f, mid, eps, delta)
        if _bands_hold(bands, eps):
            hi = mid
            attempt = (mid, coeffs, peak, bands)
        else:
            lo = mid

    degree, coeffs, peak, bands = attempt
    log_event("window_built", eps=eps, delta=delta, sigma=sigma, degree=degree, **bands)
    return WindowPolynomial(
        eps=float(eps),
        delta=float(delta),
        sigma=sigma,
        degree=degree,
        cheb_coeffs=coeffs,
        scale=peak,
        bands=bands,
    )
