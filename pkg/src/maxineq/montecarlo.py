"""Monte Carlo estimators built on the engine.

Every sampler splits its paths into fixed blocks (:data:`maxineq.rng.BLOCK_SIZE`)
with one substream per block, so estimates are bit-identical for any number
of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from . import _kernels as K
from .analytic import GrowthFunction, growth_for
from .engine import (
    FixedTime,
    FixedTimeMinHit,
    GridPolicy,
    HittingLevel,
    resolve_scheme,
    sample_transition,
    simulate_hitting,
    simulate_maxima,
)
from .moderate import ModerateFunction
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
from .rng import BLOCK_SIZE, blocks, substream


class EstimationError(RuntimeError):
    """A Monte Carlo estimate could not be formed (e.g. non-finite F values)."""


# ---------------------------------------------------------------------------
# block runner


def _block_job(job):
    kind, spec, args, seed, namespace, block, size = job
    rng = substream(seed, *namespace, block)
    if kind == "maxima":
        checkpoints, grid, scheme, normalize = args
        return simulate_maxima(spec, checkpoints, size, rng, grid, scheme, normalize)
    if kind == "hitting":
        rule, grid, scheme = args
        return simulate_hitting(spec, rule, size, rng, grid, scheme)
    if kind == "terminal":
        (t,) = args
        x0 = np.full(size, spec.x0, dtype=complex if spec.is_complex else float)
        return (np.asarray(sample_transition(spec, x0, t, rng)),)
    if kind == "conformal":
        map_code, times, idx = args
        out = [np.empty((size, idx.size)) for _ in range(5)]
        K.conformal(map_code, times, idx, size, rng, *out)
        return tuple(out)
    raise ValueError(kind)


def run_blocks(kind, spec, args, n_paths: int, seed: int, namespace: Sequence, workers: int = 1):
    """Run ``n_paths`` paths in blocks and concatenate each output in block order."""
    if n_paths < 0:
        raise ParameterError("n_paths must be >= 0")
    jobs = [(kind, spec, args, seed, tuple(namespace), b, size) for b, size in blocks(n_paths, BLOCK_SIZE)]
    if workers is None or workers <= 1 or len(jobs) <= 1:
        parts = [_block_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            parts = list(ex.map(_block_job, jobs))
    if not parts:
        return None
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))


def sample_maxima(
    spec: ProcessSpec,
    checkpoints,
    n_paths: int,
    seed: int,
    grid: Optional[GridPolicy] = None,
    scheme: str = "exact",
    normalize: bool = False,
    namespace: Sequence = ("maxima",),
    workers: int = 1,
):
    """Running maxima and values at ``checkpoints``, shape ``(n_paths, k)``."""
    grid = grid or GridPolicy()
    resolve_scheme(spec, scheme)
    cps = tuple(float(c) for c in np.atleast_1d(checkpoints))
    return run_blocks("maxima", spec, (cps, grid, scheme, normalize), n_paths, seed, namespace, workers)


def sample_hitting(
    spec: ProcessSpec,
    rule,
    n_paths: int,
    seed: int,
    grid: Optional[GridPolicy] = None,
    scheme: str = "exact",
    namespace: Sequence = ("hitting",),
    workers: int = 1,
):
    """``(tau, X*_tau, hit)`` arrays for a level rule."""
    grid = grid or GridPolicy()
    resolve_scheme(spec, scheme)
    return run_blocks("hitting", spec, (rule, grid, scheme), n_paths, seed, namespace, workers)


def sample_terminal(spec: ProcessSpec, t: float, n: int, seed: int, namespace: Sequence = ("terminal",), workers: int = 1):
    """Exact draws of ``X_t`` from ``spec.x0``."""
    return run_blocks("terminal", spec, (float(t),), n, seed, namespace, workers)[0]


# ---------------------------------------------------------------------------
# grids


def relaxation_time(spec: ProcessSpec) -> float:
    """Time scale of mean reversion; ``inf`` for scale-invariant processes."""
    if isinstance(spec, OU):
        return 1.0 / spec.alpha
    if isinstance(spec, (BMDrift, ReflectedBMDrift)):
        return 1.0 / spec.mu**2
    if isinstance(spec, CIR):
        return 1.0 / abs(spec.b)
    if isinstance(spec, RadialOU):
        return 1.0 / (2.0 * spec.beta)
    if isinstance(spec, ComplexOU):
        return 1.0 / spec.a
    return math.inf


def envelope_grid(spec: ProcessSpec, t_min: float = 1e-2, rel_step: float = 0.03, relax_fraction: float = 0.25):
    """Log-adaptive grid with bridge correction for long-horizon envelopes.

    Steps grow like ``rel_step * t`` and are capped at ``relax_fraction``
    times the relaxation time.
    """
    tr = relaxation_time(spec)
    max_step = relax_fraction * tr if math.isfinite(tr) else None
    return GridPolicy(rel_step=rel_step, t_start=t_min, max_step=max_step, bridge=True)


# ---------------------------------------------------------------------------
# estimates


@dataclass
class MaximalEstimate:
    """Estimate of E F(X*_tau)."""

    n_paths: int
    mean: float
    stderr: float
    grid: dict
    scheme: str
    refinement_delta: Optional[float] = None
    censored_fraction: float = 0.0
    reference: Optional[float] = None  # E F(g(tau))

    @property
    def ratio(self) -> Optional[float]:
        if self.reference is None or self.reference == 0:
            return None
        return self.mean / self.reference

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    n = values.size
    m = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return m, se


def _finite_or_raise(vals, seed, namespace):
    bad = np.nonzero(~np.isfinite(vals))[0]
    if bad.size:
        i = int(bad[0])
        raise EstimationError(
            f"non-finite F value on path {i} (seed={seed}, stream={tuple(namespace)}, "
            f"block={i // BLOCK_SIZE}, index in block={i % BLOCK_SIZE})"
        )


def estimate_sup_expectation(
    spec: ProcessSpec,
    F: ModerateFunction,
    rule,
    n_paths: int = 100_000,
    grid: Optional[GridPolicy] = None,
    seed: int = 0,
    scheme: str = "exact",
    workers: int = 1,
    growth: Optional[GrowthFunction] = None,
    namespace: Sequence = ("sup",),
) -> MaximalEstimate:
    """Mean and CLT standard error of ``F(X*_tau)``.

    ``rule`` is a stopping rule or a plain time ``T >= 0`` (``T = 0`` returns
    ``F(|x0|)`` exactly). The reference ``E F(g(tau))`` is attached when a
    growth function applies. With Euler paths a 10% pilot at the given grid
    and at half the step size yields the refinement delta. Censored paths of
    a hitting rule contribute their maximum up to the cap.
    """
    if n_paths < 1000:
        raise ParameterError("estimate_sup_expectation needs n_paths >= 1000")
    grid = grid or GridPolicy()
    growth = growth if growth is not None else _maybe_growth(spec)
    if not isinstance(rule, (FixedTime, HittingLevel, FixedTimeMinHit)):
        T = float(rule)
        if T < 0:
            raise ParameterError("T must be >= 0")
        if T == 0:
            v = float(F(np.array([abs(spec.x0)]))[0])
            ref = float(F(np.array([float(growth(0.0))]))[0]) if growth else None
            return MaximalEstimate(n_paths, v, 0.0, grid.to_dict(), scheme, None, 0.0, ref)
        rule = FixedTime(T)
    exact = resolve_scheme(spec, scheme)
    used = "exact" if exact else "euler"

    def run(g, n, ns):
        if isinstance(rule, FixedTime):
            mx, _ = sample_maxima(spec, [rule.T], n, seed, g, used, namespace=ns, workers=workers)
            fx = F(mx[:, 0])
            ref = float(F(np.array([float(growth(rule.T))]))[0]) if growth else None
            return fx, ref, 0.0
        tau, xstar, hit = sample_hitting(spec, rule, n, seed, g, used, namespace=ns, workers=workers)
        fx = F(xstar)
        ref = float(np.mean(F(growth(tau)))) if growth else None
        cens = float(np.mean(~hit)) if isinstance(rule, HittingLevel) else 0.0
        return fx, ref, cens

    fx, ref, cens = run(grid, n_paths, tuple(namespace))
    _finite_or_raise(fx, seed, namespace)
    mean, se = _mean_se(fx)
    delta = None
    if not exact:
        n_pilot = max(100, n_paths // 10)
        a, _, _ = run(grid, n_pilot, tuple(namespace) + ("pilot",))
        b, _, _ = run(grid.refined(), n_pilot, tuple(namespace) + ("pilot",))
        delta = abs(float(np.mean(a)) - float(np.mean(b)))
    return MaximalEstimate(n_paths, mean, se, grid.to_dict(), used, delta, cens, ref)


def _maybe_growth(spec):
    try:
        return growth_for(spec)
    except ParameterError:
        return None


@dataclass
class TailEstimate:
    probability: float
    ci_low: float
    ci_high: float
    count: int
    n: int
    z: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def wilson(count: int, n: int, z: float = 1.96) -> TailEstimate:
    """Wilson score interval for a binomial proportion at normal multiplier ``z``."""
    level = float(2.0 * stats.norm.cdf(z) - 1.0)
    ci = stats.binomtest(int(count), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return TailEstimate(count / n, float(ci.low), float(ci.high), int(count), int(n), z)


def tail_counts(
    spec: ProcessSpec,
    times,
    levels,
    n_paths: int,
    seed: int,
    grid: Optional[GridPolicy] = None,
    scheme: str = "exact",
    namespace: Sequence = ("tail",),
    workers: int = 1,
) -> np.ndarray:
    """Counts of ``X*_t >= level`` for every (time, level), shape ``(len(times), len(levels))``."""
    mx, _ = sample_maxima(spec, times, n_paths, seed, grid, scheme, namespace=namespace, workers=workers)
    lv = np.atleast_1d(np.asarray(levels, dtype=float))
    return (mx[:, :, None] >= lv[None, None, :]).sum(axis=0)


def estimate_tail(
    spec: ProcessSpec,
    x0,
    t: float,
    level: float,
    n_paths: int = 100_000,
    seed: int = 0,
    grid: Optional[GridPolicy] = None,
    scheme: str = "exact",
    z: float = 1.96,
    namespace: Sequence = ("tail",),
    workers: int = 1,
) -> TailEstimate:
    """``P_{x0}(X*_t >= level)`` with a Wilson interval."""
    if not level > 0:
        raise ParameterError(f"level must be > 0, got {level!r}")
    start = spec.with_x0(x0) if x0 is not None else spec
    counts = tail_counts(start, [t], [level], n_paths, seed, grid, scheme, namespace, workers)
    return wilson(int(counts[0, 0]), n_paths, z)


# ---------------------------------------------------------------------------
# envelopes


@dataclass
class RatioEnvelope:
    """Per-time ratios E F(X*_t) / F(g(t)) with delta-method intervals."""

    times: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    reference: np.ndarray
    z: float = 1.96
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def ratios(self) -> np.ndarray:
        return self.means / self.reference

    @property
    def log_se(self) -> np.ndarray:
        return self.stderrs / self.means

    @property
    def ci_low(self) -> np.ndarray:
        return self.ratios * np.exp(-self.z * self.log_se)

    @property
    def ci_high(self) -> np.ndarray:
        return self.ratios * np.exp(self.z * self.log_se)

    @property
    def min(self) -> float:
        return float(np.min(self.ratios))

    @property
    def max(self) -> float:
        return float(np.max(self.ratios))

    @property
    def spread(self) -> float:
        return self.max / self.min

    def rows(self) -> list[dict]:
        return [
            {
                "t": float(t),
                "mean": float(m),
                "stderr": float(s),
                "reference": float(r),
                "ratio": float(q),
                "ci_low": float(lo),
                "ci_high": float(hi),
            }
            for t, m, s, r, q, lo, hi in zip(
                self.times, self.means, self.stderrs, self.reference, self.ratios, self.ci_low, self.ci_high
            )
        ]


def envelope_from_maxima(maxima: np.ndarray, times, F: ModerateFunction, growth: GrowthFunction, z: float = 1.96, label=""):
    """Ratio envelope from precomputed maxima of shape ``(n_paths, len(times))``."""
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise ParameterError("envelope times must be > 0 (F(g(0)) = 0)")
    fx = F(maxima)
    if not np.all(np.isfinite(fx)):
        raise EstimationError("non-finite F values in envelope")
    n = fx.shape[0]
    means = fx.mean(axis=0)
    ses = fx.std(axis=0, ddof=1) / math.sqrt(n)
    ref = np.asarray(F(np.asarray(growth(times), dtype=float)), dtype=float)
    return RatioEnvelope(times, means, ses, ref, z, label, {"n_paths": n, "F": F.descriptor, "g": growth.tag})


def ratio_envelope(
    spec: ProcessSpec,
    F: ModerateFunction,
    t_grid,
    n_paths: int = 100_000,
    seed: int = 0,
    grid: Optional[GridPolicy] = None,
    growth: Optional[GrowthFunction] = None,
    normalize: bool = False,
    scheme: str = "exact",
    z: float = 1.96,
    namespace: Sequence = ("envelope",),
    workers: int = 1,
) -> RatioEnvelope:
    """Simulate maxima on ``t_grid`` and form the ratio envelope for F."""
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    growth = growth or growth_for(spec, normalized=normalize)
    grid = grid or envelope_grid(spec, t_min=float(t_grid[0]))
    mx, _ = sample_maxima(spec, t_grid, n_paths, seed, grid, scheme, normalize, namespace, workers)
    return envelope_from_maxima(mx, t_grid, F, growth, z, label=spec.kind)
