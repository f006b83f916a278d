import math

import pytest
from hypothesis import given, strategies as st

from maxineq.processes import (
    BESQ,
    CIR,
    OU,
    VARIANTS,
    BMDrift,
    Bessel,
    ComplexBM,
    ComplexOU,
    ParameterError,
    RadialOU,
    ReflectedBMDrift,
    process_from_dict,
)

positive = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


@pytest.mark.parametrize(
    "factory",
    [
        lambda: OU(alpha=0.0),
        lambda: OU(alpha=-1.0),
        lambda: BMDrift(mu=0.0),
        lambda: ReflectedBMDrift(mu=-1.0),
        lambda: CIR(a=0.0, b=-1.0, c=1.0),
        lambda: CIR(a=1.0, b=0.0, c=1.0),
        lambda: CIR(a=1.0, b=-1.0, c=0.0),
        lambda: BESQ(alpha=0.0),
        lambda: BESQ(alpha=1.0, x0=-1.0),
        lambda: Bessel(alpha=-2.0),
        lambda: RadialOU(alpha=1.0, beta=0.0),
        lambda: ComplexOU(a=0.0, b=1.0),
        lambda: OU(alpha=math.nan),
    ],
)
def test_invalid_parameters_rejected(factory):
    with pytest.raises(ParameterError):
        factory()


@pytest.mark.parametrize("b", [0.0, 0.5, 1.0])
def test_cir_nonnegative_rate_names_requirement(b):
    with pytest.raises(ParameterError, match="b must be < 0"):
        CIR(a=1.0, b=b, c=1.0)


def test_radial_ou_squared_is_cir():
    sq = RadialOU(alpha=2.0, beta=0.5, x0=3.0).squared()
    assert sq == CIR(a=2.0, b=-1.0, c=2.0, x0=9.0)


@given(alpha=positive, mu=positive, a=positive, c=positive, b=positive)
def test_round_trip_dict(alpha, mu, a, c, b):
    for spec in (OU(alpha=alpha), BMDrift(mu=mu), CIR(a=a, b=-b, c=c), ComplexOU(a=a, b=-b), ComplexBM(x0=1 + 2j)):
        assert process_from_dict(spec.to_dict()) == spec


def test_unknown_kind_and_key():
    with pytest.raises(ParameterError):
        process_from_dict({"kind": "nope"})
    with pytest.raises(ParameterError):
        process_from_dict({"kind": "ou", "alpha": 1.0, "beta": 2.0})


def test_catalog_covers_all_variants():
    assert set(VARIANTS) == {
        "ou", "bm_drift", "reflected_bm_drift", "cir", "besq", "bessel", "radial_ou", "complex_ou", "complex_bm",
    }


def test_generator_coefficients():
    assert OU(alpha=2.0).drift(1.5) == -3.0
    assert BMDrift(mu=2.0).drift(5.0) == -2.0
    assert CIR(a=1.0, b=-1.0, c=2.0).diffusion(4.0) == pytest.approx(4.0)
    assert BESQ(alpha=3.0).diffusion(1.0) == pytest.approx(2.0)
