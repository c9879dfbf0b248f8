import math

import pytest

from tangent_forge.expr import DomainError, ParseError, evaluate, parse, variables, x, y


def test_grammar_precedence():
    assert parse("1+2*3^2").evaluate([]) == 19
    assert parse("-2^2").evaluate([]) == -4
    assert parse("2^3^2").evaluate([]) == 512
    assert math.isclose(parse("sin(pi/2)+sqrt(4)+log(exp(1))+cos(0)").evaluate([]), 5.0)


def test_variables_and_indexing():
    e = parse("x1*y2 + x2", 2)
    assert evaluate(e, [2, 3, 5, 7]) == 17
    assert {str(v) for v in variables(e)} == {"x1", "y2", "x2"}
    assert str(x(1) * y(1)) == str(parse("x1*y1"))


@pytest.mark.parametrize("text, col", [("1+*x1", 3), ("sin(x1", 7), ("x3", 1), ("foo(x1)", 1), ("", 1),
                                       ("x1 ^ y1", 4), ("1 $ 2", 3)])
def test_parse_errors_carry_position(text, col):
    with pytest.raises(ParseError) as err:
        parse(text, 2)
    assert err.value.line == 1
    assert err.value.column == col


def test_multiline_position():
    with pytest.raises(ParseError) as err:
        parse("x1 +\n  * y1", 1)
    assert (err.value.line, err.value.column) == (2, 3)


def test_domain_error():
    with pytest.raises(DomainError):
        evaluate(parse("log(x1)"), [-1.0, 0.0])
    with pytest.raises(DomainError):
        evaluate(parse("1/x1"), [0.0, 0.0])
