import math

import mpmath
import pytest
from hypothesis import given, strategies as st

from nsverify.constants import (
    USER_CERTIFIED, ConstantsTable, default_table, helmholtz_c0, helmholtz_c1, poincare_cp, riesz_cp,
)


def test_default_values():
    t = default_table()
    assert (t.c_e1, t.c_e2, t.c_Pi1, t.c_Pi2) == (24, 22, 14, 35)
    mpmath.mp.dps = 50
    exact = mpmath.sqrt(4 * mpmath.pi**2 + 1) / (2 * mpmath.pi)
    assert abs(t.c_P - float(exact)) < 1e-15
    assert t.c_P == pytest.approx(1.012586, abs=1e-6)


def test_c_tilde_identity():
    t = ConstantsTable(c_ell=2.0, c_i1=5.0, c_i2=1.0, c_i3=1.0, k_edges=4)
    assert t.c_tilde == 10.0
    assert default_table().c_tilde == 12.0


@pytest.mark.parametrize("p, expected", [(3, 4.0), (2, 2.0), (6, 10.0), (1.5, 4.0)])
def test_riesz_cp(p, expected):
    assert riesz_cp(p) == pytest.approx(expected)


@pytest.mark.parametrize("p", [1.0, 0.5, -2.0, math.inf])
def test_riesz_domain(p):
    with pytest.raises(ValueError):
        riesz_cp(p)


def test_helmholtz_examples():
    assert helmholtz_c0(3) <= 28.8
    assert helmholtz_c1(1.5) <= 34.3
    assert helmholtz_c0(2) == pytest.approx(1 + math.sqrt(3) * 4, rel=1e-15)
    assert helmholtz_c0(2) == pytest.approx(7.93, abs=5e-3)
    with pytest.raises(ValueError):
        helmholtz_c1(1.0)


@given(st.floats(min_value=1.0001, max_value=1e6))
def test_riesz_duality(p):
    assert riesz_cp(p) == pytest.approx(riesz_cp(p / (p - 1.0)), rel=1e-9)


@pytest.mark.parametrize("name", ["c_e1", "c_H1", "c_ell", "k_edges"])
@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
def test_positivity_validation(name, bad):
    with pytest.raises(ValueError):
        ConstantsTable(**{name: bad})


def test_overrides_and_serialisation():
    t = default_table().with_overrides(c_H1=2.5)
    assert t.c_H1 == 2.5 and default_table().c_H1 == 6.0
    d = t.to_dict()
    assert d["c_tilde"] == t.c_tilde
    assert d["user_certified"] == list(USER_CERTIFIED)
    with pytest.raises(ValueError):
        default_table().with_overrides(c_unknown=1.0)


def test_poincare_constant():
    assert poincare_cp() == default_table().c_P
