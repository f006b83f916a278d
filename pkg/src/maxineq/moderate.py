"""Moderate functions and their numerical moderacy certificates.

A function F on [0, inf) is moderate when it is continuous, nondecreasing,
vanishes at 0 and ``sup_x F(beta x) / F(x)`` is finite for some beta > 1. The
certificate computed here is empirical: the sup is taken over a finite
log-spaced grid (default 32 points per decade on [1e-6, 1e6], beta = 2).

Descriptors
-----------
``pow:p``          x^p, p > 0
``powlog:p,q``     x^p log^q(1 + x), p > 0, q >= 0
``sqrt(<desc>)``   x -> F(sqrt(x)) for a descriptor F
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .processes import ParameterError

DEFAULT_BETA = 2.0
DEFAULT_RANGE = (1e-6, 1e6)
POINTS_PER_DECADE = 32


class NotModerateError(ParameterError):
    """F failed the numerical moderacy screen."""


@dataclass(frozen=True)
class Certificate:
    beta: float
    sup_ratio: float
    argmax: float
    grid_lo: float
    grid_hi: float
    points_per_decade: int
    empirical: bool = True

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def log_grid(lo: float = DEFAULT_RANGE[0], hi: float = DEFAULT_RANGE[1], per_decade: int = POINTS_PER_DECADE):
    n = int(round(math.log10(hi / lo) * per_decade)) + 1
    return np.logspace(math.log10(lo), math.log10(hi), n)


def _ratios(fn: Callable, beta: float, grid: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        fx = np.asarray(fn(grid), dtype=float)
        fbx = np.asarray(fn(beta * grid), dtype=float)
    if np.any(fx < 0) or np.any(fbx < 0):
        raise NotModerateError("F takes negative values on the grid")
    finite = np.isfinite(fx)
    seq = fx[finite]
    if np.any(np.diff(seq) < -1e-12 * np.abs(seq[1:])) or np.any(fbx[finite] < fx[finite] * (1 - 1e-12)):
        raise NotModerateError("F is decreasing on the grid")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        r = fbx / fx
    r = np.where((fx == 0) & (fbx == 0), 1.0, r)  # 0/0 = 1
    return r


def moderacy_ratio(F, beta: float = DEFAULT_BETA, grid=None, detail: bool = False):
    """Empirical ``sup F(beta x) / F(x)`` over ``grid``.

    Raises :class:`NotModerateError` when F is negative or decreasing on the
    grid, when the sup is not finite, or when the ratio still increases
    strictly over the last decade of the grid (divergence).
    """
    if not beta > 1:
        raise ParameterError(f"beta must be > 1, got {beta!r}")
    fn = F.fn if isinstance(F, ModerateFunction) else F
    grid = log_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.size < 2 or np.any(grid <= 0):
        raise ParameterError("grid must hold at least two positive points")
    if math.log10(grid.max() / grid.min()) < 8 - 1e-9:
        raise ParameterError("grid must span at least 8 decades")
    r = _ratios(fn, beta, grid)
    if not np.all(np.isfinite(r)):
        bad = grid[~np.isfinite(r)][0]
        raise NotModerateError(f"F(beta x)/F(x) is not finite at x = {bad:.6g}")
    tail = r[grid >= grid.max() / 10.0]
    if tail.size > 2 and np.all(np.diff(tail) > 0) and tail[-1] > tail[0] * 1.01:
        raise NotModerateError("F(beta x)/F(x) keeps increasing over the last grid decade")
    i = int(np.argmax(r))
    if detail:
        return float(r[i]), float(grid[i])
    return float(r[i])


@dataclass(frozen=True)
class ModerateFunction:
    """A moderate function with its descriptor and certificate."""

    name: str
    descriptor: str
    fn: Callable
    certificate: Certificate

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def to_dict(self) -> dict:
        return {"descriptor": self.descriptor, "name": self.name, "certificate": self.certificate.to_dict()}


def certify(name: str, descriptor: str, fn: Callable, beta: float = DEFAULT_BETA, grid=None) -> ModerateFunction:
    grid = log_grid() if grid is None else np.asarray(grid, dtype=float)
    if float(np.asarray(fn(np.array([0.0])))[0]) != 0.0:
        raise NotModerateError(f"{name}: F(0) must be 0")
    sup, arg = moderacy_ratio(fn, beta, grid, detail=True)
    cert = Certificate(beta, sup, arg, float(grid.min()), float(grid.max()), POINTS_PER_DECADE)
    return ModerateFunction(name, descriptor, fn, cert)


def power(p: float) -> ModerateFunction:
    """F(x) = x^p."""
    if not (math.isfinite(p) and p > 0):
        raise ParameterError(f"pow: exponent must be > 0, got {p!r}")
    return certify(f"x^{_fmt(p)}", f"pow:{_fmt(p)}", lambda x, p=p: np.power(x, p))


def power_log(p: float, q: float) -> ModerateFunction:
    """F(x) = x^p log^q(1 + x)."""
    if not (math.isfinite(p) and p > 0):
        raise ParameterError(f"powlog: p must be > 0, got {p!r}")
    if not (math.isfinite(q) and q >= 0):
        raise ParameterError(f"powlog: q must be >= 0, got {q!r}")
    return certify(
        f"x^{_fmt(p)} log^{_fmt(q)}(1+x)",
        f"powlog:{_fmt(p)},{_fmt(q)}",
        lambda x, p=p, q=q: np.power(x, p) * np.power(np.log1p(x), q),
    )


def compose_sqrt(F: ModerateFunction) -> ModerateFunction:
    """x -> F(sqrt(x)) with a freshly computed certificate."""
    inner = F.fn
    return certify(f"{F.name} ∘ √", f"sqrt({F.descriptor})", lambda x, inner=inner: inner(np.sqrt(x)))


_NUM = r"[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?"


def parse_descriptor(text: str) -> ModerateFunction:
    """Build a moderate function from ``pow:p``, ``powlog:p,q`` or ``sqrt(...)``."""
    s = text.strip()
    m = re.fullmatch(r"sqrt\((.+)\)", s)
    if m:
        return compose_sqrt(parse_descriptor(m.group(1)))
    m = re.fullmatch(rf"pow:({_NUM})", s)
    if m:
        return power(float(m.group(1)))
    m = re.fullmatch(rf"powlog:({_NUM}),\s*({_NUM})", s)
    if m:
        return power_log(float(m.group(1)), float(m.group(2)))
    raise ParameterError(f"unknown moderate-function descriptor {text!r}; expected pow:p, powlog:p,q or sqrt(...)")


CATALOG_DESCRIPTORS = ("pow:0.5", "pow:1", "pow:2", "pow:3", "powlog:1,1", "powlog:2,1")
DESCRIPTOR_SYNTAX = (
    ("pow:p", "x^p, p > 0"),
    ("powlog:p,q", "x^p·log^q(1+x), p > 0, q >= 0"),
    ("sqrt(<descriptor>)", "x ↦ F(√x)"),
)


def catalog() -> list[ModerateFunction]:
    return [parse_descriptor(d) for d in CATALOG_DESCRIPTORS]


def _fmt(v: float) -> str:
    return f"{v:g}"
