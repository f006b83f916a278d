"""Path generation for the process catalog.

Exact transition samplers are used wherever the law is known in closed form;
the reflected drifted Brownian motion has none and is simulated by
Euler-Maruyama. Square-root families (CIR, BESQ) use full truncation under
Euler. Heavy loops live in :mod:`maxineq._kernels`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import _kernels as K
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


class EulerFallbackWarning(UserWarning):
    """Emitted when an exact sampler was requested but the variant has none."""


# ---------------------------------------------------------------------------
# stopping rules and grids


@dataclass(frozen=True)
class FixedTime:
    T: float

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ParameterError(f"FixedTime: T must be finite and > 0, got {self.T!r}")

    @property
    def horizon(self) -> float:
        return self.T


@dataclass(frozen=True)
class HittingLevel:
    """tau = inf{t : |X_t| >= level}, stopped at ``cap`` (censored if it binds)."""

    level: float
    cap: float

    def __post_init__(self):
        if not (math.isfinite(self.level) and self.level > 0):
            raise ParameterError(f"HittingLevel: level must be > 0, got {self.level!r}")
        if not (math.isfinite(self.cap) and self.cap > 0):
            raise ParameterError(f"HittingLevel: cap must be finite and > 0, got {self.cap!r}")

    @property
    def horizon(self) -> float:
        return self.cap


@dataclass(frozen=True)
class FixedTimeMinHit:
    """tau = min(T, first time |X| >= level); never censored."""

    T: float
    level: float

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ParameterError(f"FixedTimeMinHit: T must be finite and > 0, got {self.T!r}")
        if not (math.isfinite(self.level) and self.level > 0):
            raise ParameterError(f"FixedTimeMinHit: level must be > 0, got {self.level!r}")

    @property
    def horizon(self) -> float:
        return self.T


StoppingRule = Union[FixedTime, HittingLevel, FixedTimeMinHit]


@dataclass(frozen=True)
class GridPolicy:
    """Time discretization.

    Exactly one sizing mode applies, in this order of precedence:

    - ``n_steps``: that many uniform steps over the horizon;
    - ``rel_step``: log-adaptive steps ``h(t) = min(rel_step * t, max_step)``
      after a uniform start of step ``rel_step * t_start`` on ``[0, t_start]``;
    - ``max_step``: uniform steps no longer than ``max_step``;
    - otherwise ``steps_per_unit`` uniform steps per unit time.

    The total is capped at ``max_total`` steps; the uniform modes stretch the
    step to respect the cap. ``bridge`` adds a Brownian-bridge sample of the
    within-step maximum for fixed-time maxima.
    """

    n_steps: Optional[int] = None
    max_step: Optional[float] = None
    rel_step: Optional[float] = None
    t_start: Optional[float] = None
    steps_per_unit: int = 4096
    max_total: int = 2**20
    bridge: bool = False

    @classmethod
    def uniform(cls, n_steps: int, **kw) -> "GridPolicy":
        return cls(n_steps=n_steps, **kw)

    @classmethod
    def log_adaptive(cls, rel_step: float = 0.02, t_start: float = 1e-2, max_step: float = 1.0, **kw):
        return cls(rel_step=rel_step, t_start=t_start, max_step=max_step, **kw)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def refined(self) -> "GridPolicy":
        """Same policy with every step halved."""
        return GridPolicy(
            n_steps=None if self.n_steps is None else 2 * self.n_steps,
            max_step=None if self.max_step is None else self.max_step / 2,
            rel_step=None if self.rel_step is None else self.rel_step / 2,
            t_start=self.t_start,
            steps_per_unit=2 * self.steps_per_unit,
            max_total=2 * self.max_total,
            bridge=self.bridge,
        )

    def build(self, horizon: float, checkpoints=None) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(times, idx)`` with ``times[idx[k]] == checkpoints[k]`` exactly."""
        if not horizon > 0:
            raise ParameterError(f"horizon must be > 0, got {horizon!r}")
        cps = np.atleast_1d(np.asarray([] if checkpoints is None else checkpoints, dtype=float))
        if cps.size and (np.any(cps < 0) or np.any(cps > horizon * (1 + 1e-12))):
            raise ParameterError("checkpoints must lie in [0, horizon]")
        if self.n_steps is not None:
            base = np.linspace(0.0, horizon, min(int(self.n_steps), self.max_total) + 1)
        elif self.rel_step is not None:
            base = _log_adaptive(horizon, self.rel_step, self.t_start or 1e-2, self.max_step or np.inf)
        else:
            if self.max_step is not None:
                n = math.ceil(horizon / self.max_step - 1e-9)
            else:
                n = math.ceil(horizon * self.steps_per_unit - 1e-9)
            base = np.linspace(0.0, horizon, max(1, min(n, self.max_total)) + 1)
        base[-1] = horizon
        times = np.union1d(base, cps)
        if cps.size:
            # drop grid points that nearly coincide with a checkpoint
            cp = np.unique(cps)
            j = np.clip(np.searchsorted(cp, times), 1, cp.size - 1) if cp.size > 1 else np.zeros(times.size, int)
            dist = np.minimum(np.abs(times - cp[j]), np.abs(times - cp[np.maximum(j - 1, 0)]))
            is_cp = np.isin(times, cp)
            drop = (dist <= 1e-9 * np.maximum(times, 1e-12)) & ~is_cp & (times > 0)
            times = times[~drop]
        idx = np.searchsorted(times, cps)
        return times, idx.astype(np.int64)


def _log_adaptive(horizon, rel, t_start, max_step):
    t_start = min(t_start, horizon)
    h0 = rel * t_start
    n0 = max(1, math.ceil(t_start / h0 - 1e-9))
    pts = [np.linspace(0.0, t_start, n0 + 1)]
    t = t_start
    # geometric part until the step reaches max_step
    if t < horizon:
        t_switch = min(horizon, max_step / rel if np.isfinite(max_step) else horizon)
        if t_switch > t:
            n = math.ceil(math.log(t_switch / t) / math.log1p(rel))
            geo = t * (1.0 + rel) ** np.arange(1, n + 1)
            geo = geo[geo < t_switch]
            pts.append(geo)
            pts.append([t_switch])
            t = t_switch
        if t < horizon:
            n = math.ceil((horizon - t) / max_step - 1e-9)
            pts.append(np.linspace(t, horizon, n + 1)[1:])
    return np.unique(np.concatenate([np.asarray(p, dtype=float) for p in pts]))


# ---------------------------------------------------------------------------
# kernel plumbing


def has_exact_sampler(spec: ProcessSpec) -> bool:
    return not isinstance(spec, ReflectedBMDrift)


def kernel_args(spec: ProcessSpec):
    """``(code, params, radial, x0, y0)`` for the compiled kernels."""
    p = np.zeros(3)
    radial = False
    x0, y0 = 0.0, 0.0
    if isinstance(spec, OU):
        code, p[0], x0 = K.OU, spec.alpha, spec.x0
    elif isinstance(spec, BMDrift):
        code, p[0], x0 = K.BMD, spec.mu, spec.x0
    elif isinstance(spec, ReflectedBMDrift):
        code, p[0], x0 = K.RBMD, spec.mu, spec.x0
    elif isinstance(spec, CIR):
        code, x0 = K.CIR, spec.x0
        p[:] = spec.a, spec.b, spec.c
    elif isinstance(spec, BESQ):
        code, p[0], x0 = K.BESQ, spec.alpha, spec.x0
    elif isinstance(spec, Bessel):
        code, p[0], x0, radial = K.BESQ, spec.alpha, spec.x0**2, True
    elif isinstance(spec, RadialOU):
        sq = spec.squared()
        code, x0, radial = K.CIR, sq.x0, True
        p[:] = sq.a, sq.b, sq.c
    elif isinstance(spec, ComplexOU):
        code, x0, y0 = K.COU, spec.x0.real, spec.x0.imag
        p[0], p[1] = spec.a, spec.b
    elif isinstance(spec, ComplexBM):
        code, x0, y0 = K.CBM, spec.x0.real, spec.x0.imag
    else:
        raise ParameterError(f"unsupported process {spec!r}")
    return int(code), p, radial, float(x0), float(y0)


def resolve_scheme(spec: ProcessSpec, scheme: str) -> bool:
    """Return True for exact sampling; warn when exact is unavailable."""
    if scheme not in ("exact", "euler"):
        raise ParameterError(f"scheme must be 'exact' or 'euler', got {scheme!r}")
    if scheme == "exact" and not has_exact_sampler(spec):
        warnings.warn(
            f"{spec.kind} has no exact sampler; using Euler-Maruyama", EulerFallbackWarning, stacklevel=3
        )
        return False
    return scheme == "exact"


# ---------------------------------------------------------------------------
# single transitions (vectorized numpy)


def _besq_draw(alpha, x, s, rng):
    x = np.asarray(x, dtype=float)
    k = rng.poisson(np.maximum(x, 0.0) / (2.0 * s))
    return 2.0 * s * rng.standard_gamma(0.5 * alpha + k)


def _cir_draw(a, b, c, x, dt, rng):
    rho = c * c * math.expm1(-b * dt) / (-4.0 * b)
    return math.exp(b * dt) * _besq_draw(4.0 * a / (c * c), x, rho, rng)


def sample_transition(spec: ProcessSpec, x, dt: float, rng: np.random.Generator):
    """Draw ``X_{t+dt}`` given ``X_t = x`` from the exact transition law.

    ``x`` may be a scalar or an array (complex for complex variants) and is
    expressed on the process's own scale (the radius for Bessel/RadialOU).
    The reflected drifted Brownian motion is routed to :func:`euler_step`
    with an :class:`EulerFallbackWarning`.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    if isinstance(spec, ReflectedBMDrift):
        warnings.warn("reflected_bm_drift has no exact sampler; using one Euler step", EulerFallbackWarning, stacklevel=2)
        return euler_step(spec, x, dt, rng)
    if isinstance(spec, OU):
        a = spec.alpha
        x = np.asarray(x, dtype=float)
        sd = math.sqrt(-math.expm1(-2.0 * a * dt) / (2.0 * a))
        return x * math.exp(-a * dt) + sd * rng.standard_normal(x.shape)
    if isinstance(spec, BMDrift):
        x = np.asarray(x, dtype=float)
        return x - spec.mu * dt + math.sqrt(dt) * rng.standard_normal(x.shape)
    if isinstance(spec, CIR):
        return _cir_draw(spec.a, spec.b, spec.c, _state(spec, x), dt, rng)
    if isinstance(spec, BESQ):
        return _besq_draw(spec.alpha, _state(spec, x), dt, rng)
    if isinstance(spec, Bessel):
        return np.sqrt(_besq_draw(spec.alpha, _state(spec, x) ** 2, dt, rng))
    if isinstance(spec, RadialOU):
        sq = spec.squared()
        return np.sqrt(_cir_draw(sq.a, sq.b, sq.c, _state(spec, x) ** 2, dt, rng))
    if isinstance(spec, ComplexOU):
        z = np.asarray(x, dtype=complex)
        sd = math.sqrt(-math.expm1(-2.0 * spec.a * dt) / (2.0 * spec.a))
        noise = rng.standard_normal(z.shape + (2,))
        return np.exp(-complex(spec.a, spec.b) * dt) * z + sd * (noise[..., 0] + 1j * noise[..., 1])
    if isinstance(spec, ComplexBM):
        z = np.asarray(x, dtype=complex)
        noise = rng.standard_normal(z.shape + (2,))
        return z + math.sqrt(dt) * (noise[..., 0] + 1j * noise[..., 1])
    raise ParameterError(f"unsupported process {spec!r}")


def _state(spec, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ParameterError(f"{spec.kind}: state must be >= 0")
    return x


def euler_step(spec: ProcessSpec, x, dt: float, rng: Optional[np.random.Generator] = None, z=None):
    """One Euler-Maruyama step.

    Pass either ``rng`` or the standard normal draw(s) ``z`` (complex ``z``
    for complex variants: real and imaginary parts are the two coordinates).
    CIR and BESQ use full truncation: the drift and the square root see
    ``max(x, 0)``, the returned value is not clamped. Bessel and RadialOU
    step their squared process and return the square root of its positive
    part.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt!r}")
    if spec.is_complex:
        zx = np.asarray(x, dtype=complex)
        if z is None:
            noise = rng.standard_normal(zx.shape + (2,))
            z = noise[..., 0] + 1j * noise[..., 1]
        z = np.asarray(z, dtype=complex)
        if isinstance(spec, ComplexOU):
            drift = -complex(spec.a, spec.b) * zx
        else:
            drift = 0.0
        return zx + drift * dt + math.sqrt(dt) * z
    x = np.asarray(x, dtype=float)
    if z is None:
        z = rng.standard_normal(x.shape)
    z = np.asarray(z, dtype=float)
    h = math.sqrt(dt)
    if isinstance(spec, OU):
        return x - spec.alpha * x * dt + h * z
    if isinstance(spec, BMDrift):
        return x - spec.mu * dt + h * z
    if isinstance(spec, ReflectedBMDrift):
        return x - spec.mu * np.sign(x) * dt + h * z
    if isinstance(spec, CIR):
        return _truncated(x, spec.a, spec.b, spec.c, dt, z)
    if isinstance(spec, BESQ):
        return _truncated(x, spec.alpha, 0.0, 2.0, dt, z)
    if isinstance(spec, Bessel):
        return np.sqrt(np.maximum(_truncated(x**2, spec.alpha, 0.0, 2.0, dt, z), 0.0))
    if isinstance(spec, RadialOU):
        sq = spec.squared()
        return np.sqrt(np.maximum(_truncated(x**2, sq.a, sq.b, sq.c, dt, z), 0.0))
    raise ParameterError(f"unsupported process {spec!r}")


def _truncated(x, a, b, c, dt, z):
    xp = np.maximum(x, 0.0)
    return x + (a + b * xp) * dt + c * np.sqrt(xp * dt) * z


def besq_additivity_pair(alpha: float, alpha2: float, t: float, rng: np.random.Generator, size: int = 1):
    """Draws of ``BESQ(alpha)_t + BESQ(alpha2)_t`` and, independently, ``BESQ(alpha + alpha2)_t``.

    All processes start at 0, so both sides are gamma(shape (alpha+alpha2)/2,
    scale 2t) in law.
    """
    for name, v in (("alpha", alpha), ("alpha2", alpha2), ("t", t)):
        if not (math.isfinite(v) and v > 0):
            raise ParameterError(f"besq_additivity_pair: {name} must be > 0, got {v!r}")
    zero = np.zeros(size)
    left = _besq_draw(alpha, zero, t, rng) + _besq_draw(alpha2, zero, t, rng)
    right = _besq_draw(alpha + alpha2, zero, t, rng)
    return left, right


# ---------------------------------------------------------------------------
# paths


@dataclass
class PathSkeleton:
    """Discretized path.

    ``values`` holds the process value (signed for OU/BMDrift, the modulus for
    complex variants, the radius for Bessel/RadialOU); ``states`` holds the
    simulated state (complex path, the reflected path's beta, the squared
    process of radial families). ``hit_index`` is the first index with
    ``|values| >= level`` when a level was queried.
    """

    times: np.ndarray
    values: np.ndarray
    running_max: np.ndarray
    states: np.ndarray
    hit_index: Optional[int] = None
    censored: bool = False
    level: Optional[float] = None
    meta: dict = field(default_factory=dict)

    @property
    def sup(self) -> float:
        return float(self.running_max[-1])


def _values_from_states(spec, code, radial, sx, sy):
    if spec.is_complex:
        return np.hypot(sx, sy), sx + 1j * sy
    if isinstance(spec, ReflectedBMDrift):
        return np.abs(sx), sx
    if code in (K.CIR, K.BESQ):
        pos = np.maximum(sx, 0.0)
        return (np.sqrt(pos) if radial else pos), sx
    return sx.copy(), sx


def simulate_path(
    spec: ProcessSpec,
    rule: StoppingRule,
    grid: GridPolicy,
    rng: np.random.Generator,
    scheme: str = "exact",
) -> PathSkeleton:
    """Simulate one path up to the resolution time of ``rule``.

    For level rules the path stops at the first grid step where
    ``|X| >= level``; that step is bisected once (Brownian-bridge midpoint in
    the unit-diffusion coordinate) and the midpoint replaces the step end when
    it already crosses.
    """
    exact = resolve_scheme(spec, scheme)
    code, p, radial, x0, y0 = kernel_args(spec)
    times, _ = grid.build(rule.horizon)
    level = getattr(rule, "level", 0.0)
    out_x = np.empty(times.size)
    out_y = np.empty(times.size)
    n, refined = K.full_path(code, p, radial, x0, y0, times, float(level), exact, rng, out_x, out_y)
    t = times[:n].copy()
    if refined:
        t[-1] = 0.5 * (times[n - 2] + times[n - 1])
    values, states = _values_from_states(spec, code, radial, out_x[:n], out_y[:n])
    running = np.maximum.accumulate(np.abs(values))
    hit_index = None
    censored = False
    if level > 0:
        hits = np.nonzero(np.abs(values) >= level)[0]
        if hits.size:
            hit_index = int(hits[0])
        elif isinstance(rule, HittingLevel):
            censored = True
    return PathSkeleton(
        times=t,
        values=values,
        running_max=running,
        states=states,
        hit_index=hit_index,
        censored=censored,
        level=float(level) if level > 0 else None,
        meta={"exact": exact, "kind": spec.kind},
    )


def simulate_maxima(
    spec: ProcessSpec,
    checkpoints,
    n_paths: int,
    rng: np.random.Generator,
    grid: GridPolicy,
    scheme: str = "exact",
    normalize: bool = False,
):
    """Running maximum of ``|X|`` and the value ``X`` at each checkpoint.

    Returns two arrays of shape ``(n_paths, len(checkpoints))``. ``normalize``
    divides by ``sqrt(1 + t)`` inside the maximum (complex Brownian motion
    only).
    """
    if normalize and not isinstance(spec, ComplexBM):
        raise ParameterError("normalized maxima are defined for complex_bm only")
    exact = resolve_scheme(spec, scheme)
    code, p, radial, x0, y0 = kernel_args(spec)
    cps = np.atleast_1d(np.asarray(checkpoints, dtype=float))
    if np.any(np.diff(cps) < 0):
        raise ParameterError("checkpoints must be nondecreasing")
    horizon = float(cps[-1])
    out_max = np.empty((n_paths, cps.size))
    out_val = np.empty((n_paths, cps.size))
    if horizon == 0.0:
        m0 = abs(complex(x0, y0)) if spec.is_complex else K.modulus(code, radial, x0, y0)
        out_max[:] = m0
        out_val[:] = K.value_of(code, radial, x0, y0)
        return out_max, out_val
    times, idx = grid.build(horizon, cps)
    bridge = bool(grid.bridge) and not isinstance(spec, ReflectedBMDrift)
    K.fixed_time(code, p, radial, normalize, x0, y0, times, idx, n_paths, exact, bridge, rng, out_max, out_val)
    return out_max, out_val


def simulate_hitting(
    spec: ProcessSpec,
    rule: StoppingRule,
    n_paths: int,
    rng: np.random.Generator,
    grid: GridPolicy,
    scheme: str = "exact",
):
    """Sample ``(tau, X*_tau, hit)`` for a level rule.

    For :class:`HittingLevel` unhit paths are censored at the cap
    (``hit = False``); for :class:`FixedTimeMinHit` they stop at ``T``.
    """
    if not isinstance(rule, (HittingLevel, FixedTimeMinHit)):
        raise ParameterError("simulate_hitting needs a level rule")
    exact = resolve_scheme(spec, scheme)
    code, p, radial, x0, y0 = kernel_args(spec)
    times, _ = grid.build(rule.horizon)
    tau = np.empty(n_paths)
    xstar = np.empty(n_paths)
    hit = np.empty(n_paths, dtype=np.bool_)
    K.hitting(code, p, radial, x0, y0, times, float(rule.level), n_paths, exact, rng, tau, xstar, hit)
    return tau, xstar, hit
