"""Process catalog: validated parameter records for every diffusion family.

Each variant is a frozen dataclass. Parameters are checked at construction and
a violation raises :class:`ParameterError`, so an invalid process can never
reach a sampler.

Square-root families are simulated on their squared scale: a Bessel process
is carried as the BESQ process of the same dimension and a radial OU process
as the CIR process ``CIR(alpha, -2 beta, 2)``. The ``x0`` field always holds
the value of the process itself (the radius for Bessel/RadialOU).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import ClassVar

import numpy as np


class ParameterError(ValueError):
    """Raised when a process or check is given parameters outside its domain."""


def _positive(name: str, value: float, family: str) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ParameterError(f"{family}: {name} must be > 0, got {value!r}")


@dataclass(frozen=True)
class ProcessSpec:
    """Base class of the catalog; use one of the concrete variants."""

    kind: ClassVar[str] = ""
    nonnegative: ClassVar[bool] = False
    is_complex: ClassVar[bool] = False
    one_dimensional: ClassVar[bool] = True

    def params(self) -> dict:
        """Parameters without the initial state."""
        d = asdict(self)
        d.pop("x0", None)
        return d

    def to_dict(self) -> dict:
        d = asdict(self)
        x0 = d.get("x0", 0.0)
        if isinstance(x0, complex):
            d["x0"] = [x0.real, x0.imag]
        return {"kind": self.kind, **d}

    def with_x0(self, x0) -> "ProcessSpec":
        d = asdict(self)
        d["x0"] = x0
        return type(self)(**d)

    # generator coefficients b(x), sigma(x); defined for one-dimensional variants
    def drift(self, x):
        raise NotImplementedError(f"{self.kind} has no scalar generator")

    def diffusion(self, x):
        raise NotImplementedError(f"{self.kind} has no scalar generator")


@dataclass(frozen=True)
class OU(ProcessSpec):
    """dX = -alpha X dt + dB."""

    alpha: float
    x0: float = 0.0
    kind: ClassVar[str] = "ou"

    def __post_init__(self):
        _positive("alpha", self.alpha, "OU")

    def drift(self, x):
        return -self.alpha * x

    def diffusion(self, x):
        return 1.0 + 0.0 * x


@dataclass(frozen=True)
class BMDrift(ProcessSpec):
    """V_t = x0 + B_t - mu t."""

    mu: float
    x0: float = 0.0
    kind: ClassVar[str] = "bm_drift"

    def __post_init__(self):
        _positive("mu", self.mu, "BMDrift")

    def drift(self, x):
        return -self.mu + 0.0 * x

    def diffusion(self, x):
        return 1.0 + 0.0 * x


@dataclass(frozen=True)
class ReflectedBMDrift(ProcessSpec):
    """|beta| where d beta = -mu sign(beta) dt + dB; x0 is the start of beta."""

    mu: float
    x0: float = 0.0
    kind: ClassVar[str] = "reflected_bm_drift"
    nonnegative: ClassVar[bool] = True

    def __post_init__(self):
        _positive("mu", self.mu, "ReflectedBMDrift")

    def drift(self, x):
        # sign(0) = 0
        return -self.mu * _sign(x)

    def diffusion(self, x):
        return 1.0 + 0.0 * x


@dataclass(frozen=True)
class CIR(ProcessSpec):
    """dC = (a + b C) dt + c sqrt(C) dB with a, c > 0 and b < 0."""

    a: float
    b: float
    c: float
    x0: float = 0.0
    kind: ClassVar[str] = "cir"
    nonnegative: ClassVar[bool] = True

    def __post_init__(self):
        _positive("a", self.a, "CIR")
        _positive("c", self.c, "CIR")
        if not (isinstance(self.b, (int, float)) and math.isfinite(self.b) and self.b < 0):
            raise ParameterError(
                f"CIR: b must be < 0 (the CIR maximal inequality requires a, c > 0 and b < 0), got {self.b!r}"
            )
        _nonnegative_start(self.x0, "CIR")

    @property
    def dimension(self) -> float:
        """Dimension 4a/c^2 of the squared Bessel process behind the time change."""
        return 4.0 * self.a / self.c**2

    def drift(self, x):
        return self.a + self.b * x

    def diffusion(self, x):
        return self.c * _sqrt_pos(x)


@dataclass(frozen=True)
class BESQ(ProcessSpec):
    """Squared Bessel process dY = alpha dt + 2 sqrt(Y) dB."""

    alpha: float
    x0: float = 0.0
    kind: ClassVar[str] = "besq"
    nonnegative: ClassVar[bool] = True

    def __post_init__(self):
        _positive("alpha", self.alpha, "BESQ")
        _nonnegative_start(self.x0, "BESQ")

    def drift(self, x):
        return self.alpha + 0.0 * x

    def diffusion(self, x):
        return 2.0 * _sqrt_pos(x)


@dataclass(frozen=True)
class Bessel(ProcessSpec):
    """Square root of BESQ(alpha, x0**2)."""

    alpha: float
    x0: float = 0.0
    kind: ClassVar[str] = "bessel"
    nonnegative: ClassVar[bool] = True

    def __post_init__(self):
        _positive("alpha", self.alpha, "Bessel")
        _nonnegative_start(self.x0, "Bessel")


@dataclass(frozen=True)
class RadialOU(ProcessSpec):
    """Square root of CIR(alpha, -2 beta, 2, x0**2)."""

    alpha: float
    beta: float
    x0: float = 0.0
    kind: ClassVar[str] = "radial_ou"
    nonnegative: ClassVar[bool] = True

    def __post_init__(self):
        _positive("alpha", self.alpha, "RadialOU")
        _positive("beta", self.beta, "RadialOU")
        _nonnegative_start(self.x0, "RadialOU")

    def squared(self) -> CIR:
        return CIR(a=self.alpha, b=-2.0 * self.beta, c=2.0, x0=self.x0**2)


@dataclass(frozen=True)
class ComplexOU(ProcessSpec):
    """dZ = -(a + i b) Z dt + dW with W a complex Brownian motion."""

    a: float
    b: float
    x0: complex = 0j
    kind: ClassVar[str] = "complex_ou"
    is_complex: ClassVar[bool] = True
    one_dimensional: ClassVar[bool] = False

    def __post_init__(self):
        _positive("a", self.a, "ComplexOU")
        if not math.isfinite(self.b):
            raise ParameterError(f"ComplexOU: b must be finite, got {self.b!r}")
        object.__setattr__(self, "x0", _as_complex(self.x0))


@dataclass(frozen=True)
class ComplexBM(ProcessSpec):
    """Complex standard Brownian motion."""

    x0: complex = 0j
    kind: ClassVar[str] = "complex_bm"
    is_complex: ClassVar[bool] = True
    one_dimensional: ClassVar[bool] = False

    def __post_init__(self):
        object.__setattr__(self, "x0", _as_complex(self.x0))


VARIANTS: dict[str, type[ProcessSpec]] = {
    cls.kind: cls
    for cls in (OU, BMDrift, ReflectedBMDrift, CIR, BESQ, Bessel, RadialOU, ComplexOU, ComplexBM)
}


def process_from_dict(d: dict) -> ProcessSpec:
    """Inverse of :meth:`ProcessSpec.to_dict`; unknown kinds or keys raise."""
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in VARIANTS:
        raise ParameterError(f"unknown process kind {kind!r}; expected one of {sorted(VARIANTS)}")
    cls = VARIANTS[kind]
    allowed = {f.name for f in fields(cls)}
    unknown = set(d) - allowed
    if unknown:
        raise ParameterError(f"{kind}: unknown parameter(s) {sorted(unknown)}; allowed {sorted(allowed)}")
    if "x0" in d and isinstance(d["x0"], (list, tuple)):
        d["x0"] = complex(*d["x0"])
    try:
        return cls(**d)
    except TypeError as exc:
        raise ParameterError(f"{kind}: {exc}") from None


def _nonnegative_start(x0, family):
    if not (isinstance(x0, (int, float)) and math.isfinite(x0) and x0 >= 0):
        raise ParameterError(f"{family}: initial state must be >= 0, got {x0!r}")


def _as_complex(z) -> complex:
    if isinstance(z, (list, tuple)):
        z = complex(*z)
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ParameterError(f"initial state must be finite, got {z!r}")
    return z


def _sign(x):
    return np.sign(x)


def _sqrt_pos(x):
    return np.sqrt(np.maximum(x, 0.0))
