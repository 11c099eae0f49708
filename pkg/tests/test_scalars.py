from fractions import Fraction

import pytest
import sympy

from eqindex import scalars as S


def test_default_mode_is_exact():
    assert S.get_precision() == "exact"


def test_precision_context_restores():
    with S.precision("f64"):
        assert S.get_precision() == "f64"
        assert isinstance(S.coerce(3), complex)
        assert isinstance(S.add(S.coerce(1), S.coerce(2)), complex)
    assert S.get_precision() == "exact"


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        S.set_precision("quad")


def test_float_literal_read_as_decimal():
    assert S.public(S.coerce(0.1)) == sympy.Rational(1, 10)


def test_gaussian_rational_arithmetic():
    a = S.coerce(1 + 2j)
    b = S.coerce(Fraction(1, 3))
    assert S.public(S.mul(a, b)) == sympy.Rational(1, 3) + sympy.Rational(2, 3) * sympy.I
    assert S.public(S.div(S.one(), S.coerce(1j))) == -sympy.I


def test_irrational_falls_back_to_expression():
    v = S.public(S.sqrt(2))
    assert v == sympy.sqrt(2)
    assert S.public(S.mul(S.sqrt(2), S.sqrt(2))) == 2


def test_expi_of_rational_angle_is_algebraic():
    assert S.public(S.expi("pi/3")) == sympy.Rational(1, 2) + sympy.sqrt(3) / 2 * sympy.I


def test_log_of_zero_raises():
    with pytest.raises(S.DomainError):
        S.log(0)


def test_power_rational_exponent():
    assert S.public(S.power(S.rational(4), Fraction(-1, 2))) == sympy.Rational(1, 2)
