"""Growth functions g, scale functions f (solutions of Lf = 1, f(0) = 0) and
the good-lambda control function phi.

Functions are addressed by a tag and a parameter dict, e.g.
``g_eval("ou", {"alpha": 1.0}, t)``. Quadrature-backed scale functions (OU
and CIR) are evaluated by nested adaptive Gauss-Kronrod quadrature; the
closed forms involving error or incomplete gamma functions are only used by
the test oracles.

Growth tags
-----------
``ou``                     sqrt(log(1 + alpha t))
``bm_drift``               g_mu, the inverse of f_mu on [0, inf)
``reflected_bm_drift``     same as ``bm_drift``
``bm_drift_log``           log(mu sqrt(t) + 1), the closed-form bracket of g_mu
``cir``                    -(c^2 / 2b) log(1 - (2ab / c^2) t)
``besq``                   t
``bessel``                 sqrt(t)
``radial_ou``              sqrt(log(1 + alpha beta t))
``complex_ou``             sqrt(log(1 + 2a t))
``complex_bm``             sqrt(t)
``complex_bm_normalized``  sqrt(log(1 + log(1 + t)))
``sqrt``                   sqrt(t) (deliberately wrong growth for falsification)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .processes import (
    BESQ,
    CIR,
    OU,
    BMDrift,
    Bessel,
    ComplexBM,
    ComplexOU,
    ParameterError,
    ProcessSpec,
    RadialOU,
    ReflectedBMDrift,
)

QUAD_TOL = 1e-13
ROOT_RTOL = 1e-12
ROOT_MAXITER = 200

GROWTH_FORMULAS = {
    "ou": "log^{1/2}(1+αt)",
    "bm_drift": "g_μ(t) = f_μ^{-1}(t), bracketed by log(μ√t+1)",
    "reflected_bm_drift": "g_μ(t) = f_μ^{-1}(t), bracketed by log(μ√t+1)",
    "bm_drift_log": "log(μ√t+1)",
    "cir": "-(c²/2b)·log(1-(2ab/c²)t)",
    "besq": "t",
    "bessel": "√t",
    "radial_ou": "log^{1/2}(1+αβt)",
    "complex_ou": "log^{1/2}(1+2at)",
    "complex_bm": "√t",
    "complex_bm_normalized": "log^{1/2}(1+log(1+t))",
    "sqrt": "√t",
}

_GROWTH_PARAMS = {
    "ou": ("alpha",),
    "bm_drift": ("mu",),
    "reflected_bm_drift": ("mu",),
    "bm_drift_log": ("mu",),
    "cir": ("a", "b", "c"),
    "besq": (),
    "bessel": (),
    "radial_ou": ("alpha", "beta"),
    "complex_ou": ("a",),
    "complex_bm": (),
    "complex_bm_normalized": (),
    "sqrt": (),
}

SCALE_TAGS = ("ou", "bm_drift", "reflected_bm_drift", "besq", "cir")


def _params(tag: str, params: Optional[dict], table: dict) -> tuple:
    if tag not in table:
        raise ParameterError(f"unknown tag {tag!r}; expected one of {sorted(table)}")
    params = params or {}
    vals = []
    for name in table[tag]:
        if name not in params:
            raise ParameterError(f"{tag}: missing parameter {name!r}")
        vals.append(float(params[name]))
    if tag == "cir":
        a, b, c = vals
        if not (a > 0 and c > 0 and b < 0):
            raise ParameterError("cir: requires a, c > 0 and b < 0")
    elif any(not (v > 0) for v in vals):
        raise ParameterError(f"{tag}: parameters must be > 0, got {dict(zip(table[tag], vals))}")
    return tuple(vals)


def _log_expm1(z: float) -> float:
    """log(e^z - 1) for z > 0 without overflow."""
    if z > 30.0:
        return z + math.log1p(-math.exp(-z))
    return math.log(math.expm1(z))


# ---------------------------------------------------------------------------
# drifted Brownian motion: f_mu and its inverse


def _f_mu(mu: float, x: float) -> float:
    u = 2.0 * mu * x
    if abs(u) < 1e-2:
        # e^u - u - 1 by its Taylor series to avoid cancellation
        s = u * u / 2.0 * (1.0 + u / 3.0 * (1.0 + u / 4.0 * (1.0 + u / 5.0 * (1.0 + u / 6.0 * (1.0 + u / 7.0)))))
    else:
        s = math.expm1(u) - u
    return s / (2.0 * mu * mu)


def _log_f_mu(mu: float, x: float) -> float:
    u = 2.0 * mu * x
    if u > 30.0:
        return u + math.log1p(-(u + 1.0) * math.exp(-u)) - math.log(2.0 * mu * mu)
    return math.log(_f_mu(mu, x))


def _f_mu_prime(mu: float, x: float) -> float:
    return math.expm1(2.0 * mu * x) / mu


def _g_mu(mu: float, t: float) -> float:
    if t == 0.0:
        return 0.0
    if math.isinf(t):
        return math.inf
    hi = (2.0 / mu) * math.log(mu * math.sqrt(t) + 1.0) * 1.5 + 1e-300
    if t > 1.0:
        # root-find in log space; f_mu overflows before g_mu reaches its range limit
        log_t = math.log(t)
        while _log_f_mu(mu, hi) < log_t:
            hi *= 2.0
        return optimize.brentq(
            lambda y: _log_f_mu(mu, y) - log_t, _g_mu(mu, 1.0), hi, xtol=1e-300, rtol=ROOT_RTOL,
            maxiter=ROOT_MAXITER,
        )
    while _f_mu(mu, hi) < t:
        hi *= 2.0
    return optimize.brentq(
        lambda y: _f_mu(mu, y) - t, 0.0, hi, xtol=1e-300, rtol=ROOT_RTOL, maxiter=ROOT_MAXITER
    )


# ---------------------------------------------------------------------------
# growth functions


def _check_t(t, what="t"):
    if not (t >= 0):
        raise ParameterError(f"{what} must be >= 0, got {t!r}")


def _g_scalar(tag: str, p: tuple, t: float) -> float:
    if tag == "ou":
        return math.sqrt(math.log1p(p[0] * t))
    if tag in ("bm_drift", "reflected_bm_drift"):
        return _g_mu(p[0], t)
    if tag == "bm_drift_log":
        return math.log1p(p[0] * math.sqrt(t))
    if tag == "cir":
        a, b, c = p
        return -(c * c) / (2.0 * b) * math.log1p(-(2.0 * a * b / (c * c)) * t)
    if tag == "besq":
        return t
    if tag in ("bessel", "complex_bm", "sqrt"):
        return math.sqrt(t)
    if tag == "radial_ou":
        return math.sqrt(math.log1p(p[0] * p[1] * t))
    if tag == "complex_ou":
        return math.sqrt(math.log1p(2.0 * p[0] * t))
    if tag == "complex_bm_normalized":
        return math.sqrt(math.log1p(math.log1p(t)))
    raise ParameterError(f"unknown growth tag {tag!r}")


def _ginv_scalar(tag: str, p: tuple, y: float) -> float:
    if tag == "ou":
        return math.expm1(y * y) / p[0]
    if tag in ("bm_drift", "reflected_bm_drift"):
        return _f_mu(p[0], y)
    if tag == "bm_drift_log":
        return (math.expm1(y) / p[0]) ** 2
    if tag == "cir":
        a, b, c = p
        return -(c * c) / (2.0 * a * b) * math.expm1(-2.0 * b * y / (c * c))
    if tag == "besq":
        return y
    if tag in ("bessel", "complex_bm", "sqrt"):
        return y * y
    if tag == "radial_ou":
        return math.expm1(y * y) / (p[0] * p[1])
    if tag == "complex_ou":
        return math.expm1(y * y) / (2.0 * p[0])
    if tag == "complex_bm_normalized":
        return math.expm1(math.expm1(y * y))
    raise ParameterError(f"unknown growth tag {tag!r}")


def _log_ginv_scalar(tag: str, p: tuple, y: float) -> float:
    """log g^{-1}(y) for y > 0, finite even where g^{-1} overflows."""
    if tag == "ou":
        return _log_expm1(y * y) - math.log(p[0])
    if tag in ("bm_drift", "reflected_bm_drift"):
        return _log_f_mu(p[0], y)
    if tag == "bm_drift_log":
        return 2.0 * (_log_expm1(y) - math.log(p[0]))
    if tag == "cir":
        a, b, c = p
        return math.log(-(c * c) / (2.0 * a * b)) + _log_expm1(-2.0 * b * y / (c * c))
    if tag == "besq":
        return math.log(y)
    if tag in ("bessel", "complex_bm", "sqrt"):
        return 2.0 * math.log(y)
    if tag == "radial_ou":
        return _log_expm1(y * y) - math.log(p[0] * p[1])
    if tag == "complex_ou":
        return _log_expm1(y * y) - math.log(2.0 * p[0])
    if tag == "complex_bm_normalized":
        return _log_expm1(math.expm1(y * y)) if y * y < 700 else math.exp(y * y)
    raise ParameterError(f"unknown growth tag {tag!r}")


def _vectorize(fn, x):
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        return fn(float(arr))
    return np.array([fn(float(v)) for v in arr.ravel()]).reshape(arr.shape)


def g_eval(tag: str, params: Optional[dict], t):
    """Growth function g(t); scalar or array ``t >= 0``."""
    p = _params(tag, params, _GROWTH_PARAMS)
    if np.any(np.asarray(t) < 0) or np.any(np.isnan(np.asarray(t, dtype=float))):
        raise ParameterError(f"g_eval: t must be >= 0, got {t!r}")
    return _vectorize(lambda v: _g_scalar(tag, p, v), t)


def g_inverse(tag: str, params: Optional[dict], y):
    """Inverse growth function g^{-1}(y); scalar or array ``y >= 0``.

    Returns ``inf`` where the value exceeds the double range; use
    :func:`log_g_inverse` there.
    """
    p = _params(tag, params, _GROWTH_PARAMS)
    if np.any(np.asarray(y) < 0) or np.any(np.isnan(np.asarray(y, dtype=float))):
        raise ParameterError(f"g_inverse: y must be >= 0, got {y!r}")
    return _vectorize(lambda v: _overflow_to_inf(_ginv_scalar, tag, p, v), y)


def _overflow_to_inf(fn, *args):
    try:
        return fn(*args)
    except OverflowError:
        return math.inf


def log_g_inverse(tag: str, params: Optional[dict], y):
    """log g^{-1}(y) for ``y > 0``; ``inf`` only where even the logarithm overflows."""
    p = _params(tag, params, _GROWTH_PARAMS)
    if np.any(np.asarray(y) <= 0):
        raise ParameterError("log_g_inverse: y must be > 0")
    return _vectorize(lambda v: _overflow_to_inf(_log_ginv_scalar, tag, p, v), y)


@dataclass(frozen=True)
class GrowthFunction:
    """Evaluatable growth function with its inverse."""

    tag: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        _params(self.tag, self.params, _GROWTH_PARAMS)

    @property
    def closed_form(self) -> bool:
        return self.tag not in ("bm_drift", "reflected_bm_drift")

    @property
    def formula(self) -> str:
        return GROWTH_FORMULAS[self.tag]

    def __call__(self, t):
        return g_eval(self.tag, self.params, t)

    def inverse(self, y):
        return g_inverse(self.tag, self.params, y)

    def log_inverse(self, y):
        return log_g_inverse(self.tag, self.params, y)

    def to_dict(self) -> dict:
        return {"tag": self.tag, "params": dict(self.params)}


def growth_for(spec: ProcessSpec, normalized: bool = False, tag: Optional[str] = None) -> GrowthFunction:
    """Growth function attached to a process.

    ``normalized`` selects the normalized complex Brownian form; ``tag``
    overrides the catalog choice (used for falsification runs).
    """
    if normalized and not isinstance(spec, ComplexBM):
        raise ParameterError("the normalized growth is defined for complex_bm only")
    if isinstance(spec, OU):
        default, params = "ou", {"alpha": spec.alpha}
    elif isinstance(spec, (BMDrift, ReflectedBMDrift)):
        default, params = spec.kind, {"mu": spec.mu}
    elif isinstance(spec, CIR):
        default, params = "cir", {"a": spec.a, "b": spec.b, "c": spec.c}
    elif isinstance(spec, BESQ):
        default, params = "besq", {}
    elif isinstance(spec, Bessel):
        default, params = "bessel", {}
    elif isinstance(spec, RadialOU):
        default, params = "radial_ou", {"alpha": spec.alpha, "beta": spec.beta}
    elif isinstance(spec, ComplexOU):
        default, params = "complex_ou", {"a": spec.a}
    elif isinstance(spec, ComplexBM):
        default, params = ("complex_bm_normalized" if normalized else "complex_bm"), {}
    else:
        raise ParameterError(f"no growth function for {spec!r}")
    if tag is None:
        return GrowthFunction(default, params)
    needed = _GROWTH_PARAMS.get(tag)
    if needed is None:
        raise ParameterError(f"unknown growth tag {tag!r}")
    return GrowthFunction(tag, {k: params[k] for k in needed if k in params} if needed else {})


# ---------------------------------------------------------------------------
# scale functions


_SCALE_PARAMS = {
    "ou": ("alpha",),
    "bm_drift": ("mu",),
    "reflected_bm_drift": ("mu",),
    "besq": ("alpha",),
    "cir": ("a", "b", "c"),
}


def _quad(fn, a, b, points=None):
    val, err = integrate.quad(fn, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200, points=points)
    return val, err


# OU: f'(u) = 2 e^{alpha u^2} D(u), D(u) = int_0^u e^{-alpha v^2} dv


def _ou_inner(alpha: float, u: float) -> tuple[float, float]:
    if u == 0.0:
        return 0.0, 0.0
    return _quad(lambda v: math.exp(-alpha * v * v), 0.0, u)


def _ou_fprime(alpha: float, x: float) -> float:
    d, _ = _ou_inner(alpha, abs(x))
    return math.copysign(2.0 * math.exp(alpha * x * x) * d, x)


def _ou_log_f(alpha: float, x: float) -> tuple[float, float]:
    """(log f(x), relative error estimate) for x > 0."""
    ax2 = alpha * x * x
    # integrand 2 e^{alpha (u^2 - x^2)} D(u) is concentrated near u = x
    lo = max(0.0, x - 60.0 / (alpha * x)) if ax2 > 60.0 else 0.0
    errs = []

    def integrand(u):
        d, e = _ou_inner(alpha, u)
        errs.append(e)
        return 2.0 * math.exp(alpha * (u * u - x * x)) * d

    val, err = _quad(integrand, lo, x)
    inner_err = 2.0 * (x - lo) * max(errs, default=0.0)
    return ax2 + math.log(val), (err + inner_err) / val


# CIR: k = 2a/c^2, kappa = -2b/c^2 > 0
# f'(t) = (1/a) int_0^1 exp(kappa t (1 - v^{1/k})) dv after s = t v^{1/k}


def _cir_kk(a, b, c):
    return 2.0 * a / (c * c), -2.0 * b / (c * c)


def _cir_scaled_fprime(a, b, c, t, shift) -> float:
    """f'(t) e^{-shift}."""
    k, kappa = _cir_kk(a, b, c)
    if t == 0.0:
        return math.exp(-shift) / a
    kt = kappa * t
    # mass of exp(-kt v^{1/k}) sits in v <~ (j / kt)^k
    pts = [v for v in ((1.0 / kt) ** k, (10.0 / kt) ** k, (100.0 / kt) ** k) if 0.0 < v < 1.0]
    val, _ = _quad(lambda v: math.exp(kt - shift - kt * v ** (1.0 / k)), 0.0, 1.0, points=pts or None)
    return val / a


def _cir_fprime(a, b, c, t) -> float:
    return _cir_scaled_fprime(a, b, c, t, 0.0)


def _cir_log_f(a, b, c, x) -> tuple[float, float]:
    k, kappa = _cir_kk(a, b, c)
    shift = kappa * x
    lo = max(0.0, x - 60.0 / kappa)
    val, err = _quad(lambda t: _cir_scaled_fprime(a, b, c, t, shift), lo, x)
    return shift + math.log(val), err / val + 1e-13


def _scale_log(tag: str, p: tuple, x: float) -> tuple[float, float]:
    """(log f(x), relative error estimate); -inf at f = 0."""
    if tag in ("ou", "reflected_bm_drift"):
        x = abs(x)
    if tag in ("besq", "cir") and x < 0:
        raise ParameterError(f"{tag}: f is defined for x >= 0, got {x!r}")
    if x == 0.0:
        return -math.inf, 0.0
    if tag == "ou":
        return _ou_log_f(p[0], x)
    if tag in ("bm_drift", "reflected_bm_drift"):
        return _log_f_mu(p[0], x), 1e-15
    if tag == "besq":
        return math.log(x / p[0]), 0.0
    if tag == "cir":
        return _cir_log_f(*p, x)
    raise ParameterError(f"unknown scale tag {tag!r}")


@lru_cache(maxsize=65536)
def _scale_log_cached(tag: str, p: tuple, x: float) -> tuple[float, float]:
    return _scale_log(tag, p, x)


def log_f_eval(tag: str, params: dict, x):
    """log f(x); finite wherever f(x) > 0, including the overflow regime."""
    p = _params(tag, params, _SCALE_PARAMS)
    return _vectorize(lambda v: _scale_log_cached(tag, p, v)[0], x)


def f_eval(tag: str, params: dict, x):
    """Scale function f(x) with f(0) = 0 and Lf = 1.

    Returns ``inf`` once f overflows double precision (for OU beyond
    alpha x^2 ~ 700); use :func:`log_f_eval` there.
    """
    p = _params(tag, params, _SCALE_PARAMS)

    def one(v):
        if tag == "bm_drift":
            return _f_mu(p[0], v)
        if tag == "reflected_bm_drift":
            return _f_mu(p[0], abs(v))
        lf = _scale_log_cached(tag, p, v)[0]
        if lf > 709.0:
            return math.inf
        return math.exp(lf) if lf > -math.inf else 0.0

    return _vectorize(one, x)


def f_error(tag: str, params: dict, x):
    """Absolute quadrature error estimate accompanying :func:`f_eval`."""
    p = _params(tag, params, _SCALE_PARAMS)

    def one(v):
        lf, rel = _scale_log_cached(tag, p, v)
        return rel * math.exp(lf) if lf < 709.0 else math.inf

    return _vectorize(one, x)


def f_prime(tag: str, params: dict, x):
    """Derivative f'(x) (single quadrature for OU and CIR)."""
    p = _params(tag, params, _SCALE_PARAMS)

    def one(v):
        if tag == "ou":
            return _ou_fprime(p[0], v)
        if tag == "bm_drift":
            return _f_mu_prime(p[0], v)
        if tag == "reflected_bm_drift":
            return math.copysign(_f_mu_prime(p[0], abs(v)), v) if v != 0 else 0.0
        if tag == "besq":
            return 1.0 / p[0]
        if v < 0:
            raise ParameterError(f"cir: f is defined for x >= 0, got {v!r}")
        return _cir_fprime(*p, v)

    return _vectorize(one, x)


@dataclass(frozen=True)
class ScaleFunction:
    """Evaluatable scale-type function f (Lf = 1, f(0) = 0)."""

    tag: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        _params(self.tag, self.params, _SCALE_PARAMS)

    def __call__(self, x):
        return f_eval(self.tag, self.params, x)

    def log(self, x):
        return log_f_eval(self.tag, self.params, x)

    def derivative(self, x):
        return f_prime(self.tag, self.params, x)

    def error_estimate(self, x):
        return f_error(self.tag, self.params, x)

    @property
    def even(self) -> bool:
        return self.tag in ("ou", "reflected_bm_drift")

    @property
    def nonnegative_domain(self) -> bool:
        return self.tag in ("besq", "cir")


def generator_coefficients(tag: str, params: dict) -> tuple[Callable, Callable]:
    """Drift b(x) and diffusion sigma(x) of the process behind a scale tag."""
    p = _params(tag, params, _SCALE_PARAMS)
    if tag == "ou":
        return (lambda x: -p[0] * x), (lambda x: 1.0)
    if tag == "bm_drift":
        return (lambda x: -p[0]), (lambda x: 1.0)
    if tag == "reflected_bm_drift":
        return (lambda x: -p[0] * float(np.sign(x))), (lambda x: 1.0)
    if tag == "besq":
        return (lambda x: p[0]), (lambda x: 2.0 * math.sqrt(max(x, 0.0)))
    a, b, c = p
    return (lambda x: a + b * x), (lambda x: c * math.sqrt(max(x, 0.0)))


def check_generator_residual(tag: str, params: dict, x_grid, f: Optional[ScaleFunction] = None) -> float:
    """max |b f' + sigma^2 f'' / 2 - 1| over ``x_grid``.

    f' comes from the derivative evaluator and f'' from a five-point central
    difference of f' with step ``1e-4 (1 + |x|)``.
    """
    f = f or ScaleFunction(tag, dict(params))
    drift, sigma = generator_coefficients(f.tag, f.params)
    worst = 0.0
    for x in np.atleast_1d(np.asarray(x_grid, dtype=float)):
        h = 1e-4 * (1.0 + abs(x))
        d = lambda y: float(f.derivative(y))
        d1 = d(x)
        d2 = (-d(x + 2 * h) + 8 * d(x + h) - 8 * d(x - h) + d(x - 2 * h)) / (12.0 * h)
        r = drift(x) * d1 + 0.5 * sigma(x) ** 2 * d2 - 1.0
        worst = max(worst, abs(r))
    return worst


# ---------------------------------------------------------------------------
# phi(delta)


def default_lambda_grid(lo: float = 1e-4, hi: float = 1e4) -> np.ndarray:
    """Powers of 2^{1/10} covering [lo, hi] (33 points per decade).

    Base-2 spacing makes delta * lambda land on the grid for delta = 2^{-k},
    so scale-function values are shared across delta.
    """
    j0 = math.floor(10.0 * math.log2(lo))
    j1 = math.ceil(10.0 * math.log2(hi))
    return 2.0 ** (np.arange(j0, j1 + 1) / 10.0)


@dataclass
class PhiResult:
    value: float
    argmax: float
    grid_value: float


def _phi_log_ratio(tag, p, gtag, gp, beta, delta, lam):
    xs = [delta * lam]
    if tag in ("bm_drift",):
        xs.append(-delta * lam)
    num = max(_scale_log_cached(tag, p, x)[0] for x in xs)
    lo_ = _log_ginv_scalar(gtag, gp, lam)
    hi_ = _log_ginv_scalar(gtag, gp, beta * lam)
    den = hi_ + math.log(-math.expm1(lo_ - hi_))
    return num - den


def compute_phi(
    tag: str,
    params: dict,
    beta: float = 2.0,
    delta: float = 0.5,
    lambda_grid=None,
    growth: Optional[GrowthFunction] = None,
    detail: bool = False,
):
    """Numerical sup over lambda of (f(delta lam) v f(-delta lam)) / (g^{-1}(beta lam) - g^{-1}(lam)).

    Nonnegative processes (CIR, BESQ) use f(delta lam) only; for even f the
    two terms coincide. The sup is taken over ``lambda_grid`` (default 33
    points per decade on [1e-4, 1e4]) and refined by a bounded scalar search
    between the neighbours of the grid argmax. Evaluation is in log space.
    """
    if not beta > 1:
        raise ParameterError(f"compute_phi: beta must be > 1, got {beta!r}")
    if not (0 < delta < 1):
        raise ParameterError(f"compute_phi: delta must be in (0, 1), got {delta!r}")
    p = _params(tag, params, _SCALE_PARAMS)
    if growth is None:
        growth = GrowthFunction(tag, {k: params[k] for k in _GROWTH_PARAMS[tag]})
    gp = _params(growth.tag, growth.params, _GROWTH_PARAMS)
    grid = default_lambda_grid() if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if np.any(grid <= 0):
        raise ParameterError("lambda grid must be positive")
    grid = np.sort(grid)
    vals = np.array([_phi_log_ratio(tag, p, growth.tag, gp, beta, delta, lam) for lam in grid])
    i = int(np.argmax(vals))
    best, arg = vals[i], grid[i]
    if 0 < i < grid.size - 1:
        res = optimize.minimize_scalar(
            lambda s: -_phi_log_ratio(tag, p, growth.tag, gp, beta, delta, math.exp(s)),
            bounds=(math.log(grid[i - 1]), math.log(grid[i + 1])),
            method="bounded",
            options={"xatol": 1e-6},
        )
        if -res.fun > best:
            best, arg = -res.fun, math.exp(res.x)
    out = PhiResult(value=math.exp(best), argmax=float(arg), grid_value=math.exp(vals[i]))
    return out if detail else out.value


# ---------------------------------------------------------------------------
# sandwich bounds


@dataclass
class SandwichResult:
    worst_slack: float
    worst_point: float
    passed: bool
    slacks: np.ndarray


def _cir_log_f1(a, b, c, x):
    return math.log(c * c / (-a * b * 2.0 ** (2.0 * a / (c * c)))) + _log_expm1(-b * x / (c * c))


def _cir_log_f2(a, b, c, x):
    return math.log(-(c * c) / (2.0 * a * b)) + _log_expm1(-2.0 * b * x / (c * c))


def sandwich_check(tag: str, params: dict, grid=None, tol: float = 1e-10) -> SandwichResult:
    """Check a two-sided bracket pointwise and report the worst relative slack.

    ``tag = "bm_drift"``: log(mu sqrt(x) + 1) / (2 mu) <= g_mu(x) <= 2 log(mu sqrt(x) + 1) / mu.
    ``tag = "cir"``: f_1(x) <= f(x) <= f_2(x) with the closed-form exponential
    bounds f_1, f_2.

    Slack at a point is the smaller of ``1 - lower/middle`` and
    ``1 - middle/upper`` (computed in log space); the check passes when the
    minimum slack is >= -tol. At x = 0 all three vanish and the slack is 0.
    """
    grid = np.logspace(-6, 6, 64) if grid is None else np.asarray(grid, dtype=float)
    slacks = np.empty(grid.size)
    if tag == "bm_drift":
        (mu,) = _params(tag, params, _GROWTH_PARAMS)
        for i, x in enumerate(grid):
            if x == 0:
                slacks[i] = 0.0
                continue
            base = math.log1p(mu * math.sqrt(x))
            g = _g_mu(mu, x)
            slacks[i] = min(1.0 - base / (2.0 * mu) / g, 1.0 - g / (2.0 / mu * base))
    elif tag == "cir":
        a, b, c = _params(tag, params, _SCALE_PARAMS)
        for i, x in enumerate(grid):
            if x == 0:
                slacks[i] = 0.0
                continue
            lf = _scale_log_cached("cir", (a, b, c), float(x))[0]
            slacks[i] = min(-math.expm1(_cir_log_f1(a, b, c, x) - lf), -math.expm1(lf - _cir_log_f2(a, b, c, x)))
    else:
        raise ParameterError(f"sandwich_check: tag must be 'bm_drift' or 'cir', got {tag!r}")
    j = int(np.argmin(slacks))
    return SandwichResult(float(slacks[j]), float(grid[j]), bool(slacks[j] >= -tol), slacks)


def ou_inverse_growth_check(alpha: float, a: float, grid=None) -> float:
    """min over the grid of log g^{-1}(a x) - log(a^2 g^{-1}(x)) for OU (>= 0 expected)."""
    if not a > 1:
        raise ParameterError("a must be > 1")
    grid = np.logspace(-3, 1, 32) if grid is None else np.asarray(grid, dtype=float)
    p = (float(alpha),)
    return float(min(_log_ginv_scalar("ou", p, a * x) - 2.0 * math.log(a) - _log_ginv_scalar("ou", p, x) for x in grid))
