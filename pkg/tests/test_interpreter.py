"""Interpreter unit tests plus the generated-program oracle sweep."""
from __future__ import annotations

import random
from decimal import Decimal
from fractions import Fraction

import pytest

from tabreason.interpreter import (
    ExecError,
    ExecErrorKind,
    ExecLimits,
    LexError,
    ProgramSyntaxError,
    assigns_answer,
    parse_program,
    render_number,
    render_value,
    run_source,
)

from reference_eval import reference_eval

# Worked examples frozen from exact rational arithmetic.
BALANCE_PROGRAM = """\
balance_2005 = 663750000
balance_2004 = 595338000
ans = (balance_2005 - balance_2004) / balance_2004 * 100
"""
COINS_PROGRAM = """\
number_of_coins_for_different_person = [81, 84, 78, 81, 79, 77, 85, 83]
ans = sum(number_of_coins_for_different_person) / len(number_of_coins_for_different_person)
"""
EARNINGS_PROGRAM = """\
weighted_avg_common_shares = 13442871
basic_earning_per_share = 0.34
ans = basic_earning_per_share*weighted_avg_common_shares
"""
MEDIAN_PROGRAM = """\
cans = [18, 11, 24, 4, 22, 18, 6]
cans = sorted(cans)
middle1 = (len(cans) - 1) // 2
middle2 = len(cans) // 2
ans = (cans[middle1] + cans[middle2]) / 2
"""
RETURN_PROGRAM = """\
net_income = 261
total_assets = 6190
ans = net_income / total_assets * 100
"""
WEIGHTED_AVG_PROGRAM = (
    "ans = ((781 * 246,548) + (838 * 243,053)) / (781 + 838)\n"
)

WORKED_EXAMPLES = [
    (BALANCE_PROGRAM, Fraction(1140200, 99223)),  # ~= 11.4913
    (COINS_PROGRAM, Fraction(81)),
    (EARNINGS_PROGRAM, Fraction(228528807, 50)),  # 4570576.14 exactly
    (MEDIAN_PROGRAM, Fraction(18)),
    (RETURN_PROGRAM, Fraction(2610, 619)),  # ~= 4.2165
    (WEIGHTED_AVG_PROGRAM, Fraction(396232402, 1619)),  # ~= 244738.976
]


def close(got: object, want: Fraction, rel: float = 1e-9) -> bool:
    assert isinstance(got, Decimal)
    diff = abs(Fraction(got) - want)
    return diff <= Fraction(str(rel)) * max(Fraction(1), abs(want))


@pytest.mark.parametrize("source,expected", WORKED_EXAMPLES)
def test_worked_examples(source: str, expected: Fraction) -> None:
    assert close(run_source(source), expected)


def test_comma_grouping_at_top_level() -> None:
    assert run_source("ans = 246,548 + 1") == Decimal("246549")
    assert run_source("ans = 13,442,871") == Decimal("13442871")
    assert run_source("ans = 1,234.56 * 2") == Decimal("2469.12")


def test_comma_is_separator_inside_lists_and_calls() -> None:
    assert run_source("ans = [246,548]") == [Decimal(246), Decimal(548)]
    assert run_source("ans = max(246,548)") == Decimal(548)
    assert run_source("ans = len([1,2,3])") == Decimal(3)


def test_comma_grouping_inside_grouping_parens() -> None:
    # Parens used purely for grouping do not turn commas into separators.
    assert run_source("ans = (781 * 246,548)") == Decimal(781) * Decimal(246548)
    assert run_source("ans = sum([1, (2,500)])") == Decimal(2501)


def test_underscore_numeral_rejected() -> None:
    with pytest.raises(LexError):
        run_source("ans = 1_0")


def test_scientific_notation_rejected() -> None:
    with pytest.raises(LexError):
        run_source("ans = 1e5")


def test_loops_imports_attributes_rejected() -> None:
    with pytest.raises(ProgramSyntaxError):
        parse_program("for i in [1]:\n    ans = i\n")
    with pytest.raises(ProgramSyntaxError):
        parse_program("import math\nans = 1\n")
    with pytest.raises((ProgramSyntaxError, LexError)):
        parse_program("ans = x.y\n")
    with pytest.raises(ProgramSyntaxError):
        parse_program("def f():\n    ans = 1\n")


def test_string_literals_only_inside_lists() -> None:
    parse_program("ans = ['a', 'b']\n")
    with pytest.raises(ProgramSyntaxError):
        parse_program("ans = 'a'\n")
    with pytest.raises(ProgramSyntaxError):
        parse_program("ans = ['a'] if 'b' else [1]\n")


def test_unknown_callee_is_parse_error() -> None:
    with pytest.raises(ProgramSyntaxError):
        parse_program("ans = foo(1)\n")
    with pytest.raises(ProgramSyntaxError):
        parse_program("x = 1\nans = x(1)\n")


def test_if_blocks_and_ternary() -> None:
    source = """\
x = 10
if x > 5:
    ans = 1
elif x > 2:
    ans = 2
else:
    ans = 3
"""
    assert run_source(source) == Decimal(1)
    assert run_source("x = 1\nans = 5 if x == 1 else 6\n") == Decimal(5)
    assert run_source("x = 0\nans = 5 if x else 6\n") == Decimal(6)


def test_power_precedence_matches_python() -> None:
    assert run_source("ans = -2 ** 2") == Decimal(-4)  # -(2**2), like Python
    assert run_source("ans = 2 ** -2") == Decimal("0.25")
    assert run_source("ans = 2 ** 3 ** 2") == Decimal(512)


def test_slices_and_indexing() -> None:
    assert run_source("xs = [4, 5, 6, 7]\nans = xs[1]") == Decimal(5)
    assert run_source("xs = [4, 5, 6, 7]\nans = xs[-1]") == Decimal(7)
    assert run_source("xs = [4, 5, 6, 7]\nans = sum(xs[1:3])") == Decimal(11)
    assert run_source("xs = [4, 5, 6, 7]\nans = sum(xs[:2])") == Decimal(9)


def test_div_by_zero() -> None:
    for source in ("ans = 1 / 0", "ans = 1 // 0", "ans = 1 % 0", "ans = 0 ** -1"):
        with pytest.raises(ExecError) as err:
            run_source(source)
        assert err.value.kind is ExecErrorKind.DIV_BY_ZERO


def test_undefined_name() -> None:
    with pytest.raises(ExecError) as err:
        run_source("ans = mystery + 1")
    assert err.value.kind is ExecErrorKind.UNDEFINED_NAME
    with pytest.raises(ExecError) as err:
        run_source("x = 1\nif x > 2:\n    ans = 1\n")
    assert err.value.kind is ExecErrorKind.UNDEFINED_NAME


def test_type_mismatch() -> None:
    with pytest.raises(ExecError) as err:
        run_source("ans = [1] * [2]")
    assert err.value.kind is ExecErrorKind.TYPE_MISMATCH
    with pytest.raises(ExecError) as err:
        run_source("ans = [1, 2][0.5]")
    assert err.value.kind is ExecErrorKind.TYPE_MISMATCH
    with pytest.raises(ExecError) as err:
        run_source("ans = 2 ** 0.5")
    assert err.value.kind is ExecErrorKind.TYPE_MISMATCH


def test_limits() -> None:
    with pytest.raises(ExecError) as err:
        run_source("ans = 99 ** 999")
    assert err.value.kind is ExecErrorKind.LIMIT_EXCEEDED
    with pytest.raises(ExecError) as err:
        run_source("ans = [1, 2, 3, 4]", ExecLimits(max_list_len=3))
    assert err.value.kind is ExecErrorKind.LIMIT_EXCEEDED
    with pytest.raises(ExecError) as err:
        run_source("a = 1\nb = 2\nans = a + b\n", ExecLimits(max_steps=3))
    assert err.value.kind is ExecErrorKind.LIMIT_EXCEEDED


def test_default_limits() -> None:
    limits = ExecLimits()
    assert limits.max_steps == 100_000
    assert limits.max_list_len == 100_000


def test_assigns_answer() -> None:
    assert assigns_answer(parse_program("ans = 1\n"))
    assert assigns_answer(parse_program("x = 1\nif x > 0:\n    ans = 2\n"))
    assert not assigns_answer(parse_program("x = 1\n"))


def test_comments_are_ignored() -> None:
    assert run_source("#Python Code, return 'ans'.\nans = 2 # two\n") == Decimal(2)


def test_render_number() -> None:
    assert render_number(Decimal("81")) == "81"
    assert render_number(Decimal("81.00")) == "81"
    assert render_number(Decimal("0")) == "0"
    assert render_number(Decimal("-0.5")) == "-0.5"
    rendered = render_number(Decimal(396232402) / Decimal(1619))
    assert rendered.startswith("244738.975911")
    assert len(rendered.replace(".", "").lstrip("-")) <= 12


def test_render_value() -> None:
    assert render_value([Decimal(1), "a", True]) == "[1, 'a', True]"
    assert render_value(Decimal("2.50")) == "2.5"


# ---------------------------------------------------------------------------
# Generated-program sweep against the independent oracle.


class _Gen:
    """Type- and taint-aware random program generator.

    Taint marks values downstream of true division; tainted values stay out
    of flip-sensitive spots (comparisons, round, floor-div, mod) so exact
    and fixed-precision arithmetic cannot legitimately disagree there.
    """

    def __init__(self, rng: random.Random) -> None:
        self.rng = rng
        self.num_vars: dict[str, bool] = {}  # name -> tainted
        self.list_vars: list[str] = []

    def literal(self) -> str:
        if self.rng.random() < 0.35:
            whole = self.rng.randint(0, 999)
            frac = self.rng.randint(1, 999)
            return f"{whole}.{frac:03d}"
        return str(self.rng.randint(-9999, 9999))

    def nonzero_literal(self) -> str:
        while True:
            lit = self.literal()
            if Decimal(lit) != 0:
                return lit

    def clean_scalar(self, depth: int) -> str:
        """Division-free scalar expression."""
        expr, _ = self.scalar(depth, allow_div=False)
        return expr

    def scalar(self, depth: int, allow_div: bool = True) -> tuple[str, bool]:
        """Returns (expression, tainted)."""
        rng = self.rng
        clean_vars = [v for v, t in self.num_vars.items() if not t]
        usable = self.num_vars if allow_div else {v: False for v in clean_vars}
        if depth <= 0 or rng.random() < 0.2:
            if usable and rng.random() < 0.5:
                name = rng.choice(sorted(usable))
                return name, self.num_vars[name]
            return self.literal(), False
        choice = rng.random()
        if choice < 0.45:  # additive / multiplicative
            op = rng.choice(["+", "-", "*"])
            left, t1 = self.scalar(depth - 1, allow_div)
            # At most one variable factor per product keeps magnitudes exact.
            if op == "*":
                right, t2 = self.literal(), False
            else:
                right, t2 = self.scalar(depth - 1, allow_div)
            return f"({left} {op} {right})", t1 or t2
        if choice < 0.6 and allow_div:
            num, _ = self.scalar(depth - 1, allow_div)
            if rng.random() < 0.7:
                den = self.nonzero_literal()
            else:
                den, _ = self.scalar(depth - 1, allow_div=False)
            return f"({num} / {den})", True
        if choice < 0.68:
            op = rng.choice(["//", "%"])
            left = self.shallow_clean()
            right = self.nonzero_literal()
            return f"({left} {op} {right})", False
        if choice < 0.74:
            base = rng.randint(2, 30)
            exp = rng.randint(0, 4)
            return f"({base} ** {exp})", False
        if choice < 0.8:
            inner, t = self.scalar(depth - 1, allow_div)
            return f"(-{inner})", t
        if choice < 0.86:
            arg = self.clean_scalar(1)
            if rng.random() < 0.5:
                return f"round({arg})", False
            return f"round({arg}, {rng.randint(0, 3)})", False
        if choice < 0.92:
            inner, t = self.scalar(depth - 1, allow_div)
            return f"abs({inner})", t
        if choice < 0.97:
            fn = rng.choice(["sum", "min", "max"])
            items, t = self.list_expr(depth - 1, allow_div)
            return f"{fn}({items})", t
        cond_l = self.clean_scalar(1)
        cond_r = self.clean_scalar(1)
        cmp = rng.choice(["<", "<=", ">", ">=", "==", "!="])
        then, t1 = self.scalar(depth - 1, allow_div)
        other, t2 = self.scalar(depth - 1, allow_div)
        return f"({then} if {cond_l} {cmp} {cond_r} else {other})", t1 or t2

    def shallow_clean(self) -> str:
        if self.rng.random() < 0.5:
            return self.literal()
        return f"({self.literal()} + {self.literal()})"

    def list_expr(self, depth: int, allow_div: bool) -> tuple[str, bool]:
        rng = self.rng
        if self.list_vars and rng.random() < 0.3:
            return rng.choice(sorted(self.list_vars)), True
        n = rng.randint(2, 6)
        tainted = False
        items = []
        for _ in range(n):
            expr, t = self.scalar(max(depth - 1, 0), allow_div)
            tainted = tainted or t
            items.append(expr)
        text = "[" + ", ".join(items) + "]"
        if rng.random() < 0.3:
            text = f"sorted({text})"
        if rng.random() < 0.2:
            lo = rng.randint(0, n - 1)
            text = f"{text}[{lo}:{rng.randint(lo + 1, n)}]"
        return text, tainted

    def program(self) -> str:
        rng = self.rng
        self.num_vars.clear()
        self.list_vars = []
        lines = []
        for i in range(rng.randint(0, 4)):
            if rng.random() < 0.25:
                name = f"xs{i}"
                expr, _ = self.list_expr(2, allow_div=True)
                self.list_vars.append(name)
            else:
                name = f"v{i}"
                expr, tainted = self.scalar(rng.randint(1, 3))
                self.num_vars[name] = tainted
            lines.append(f"{name} = {expr}")
        kind = rng.random()
        if kind < 0.78:
            expr, _ = self.scalar(rng.randint(1, 3))
        elif kind < 0.9:
            expr, _ = self.list_expr(2, allow_div=True)
        else:
            expr = f"{self.clean_scalar(1)} {rng.choice(['<', '>=', '=='])} {self.clean_scalar(1)}"
        lines.append(f"ans = {expr}")
        return "\n".join(lines) + "\n"


def _agrees(got: object, want: object, rel: Fraction = Fraction(1, 10**9)) -> bool:
    if isinstance(want, bool):
        return got is want
    if isinstance(want, (int, Fraction)):
        if not isinstance(got, Decimal):
            return False
        diff = abs(Fraction(got) - Fraction(want))
        return diff <= rel * max(Fraction(1), abs(Fraction(want)))
    if isinstance(want, list):
        if not isinstance(got, list) or len(got) != len(want):
            return False
        return all(_agrees(g, w, rel) for g, w in zip(got, want))
    raise AssertionError(f"unexpected oracle value {want!r}")


def test_generated_programs_match_reference_oracle() -> None:
    rng = random.Random(20240817)
    gen = _Gen(rng)
    kept = 0
    attempts = 0
    while kept < 1000:
        attempts += 1
        assert attempts < 6000, "rejection rate too high"
        source = gen.program()
        try:
            expected = reference_eval(source)
        except (ZeroDivisionError, OverflowError, IndexError, ValueError):
            continue
        got = run_source(source)
        assert _agrees(got, expected), f"mismatch on:\n{source}\ngot {got!r} want {expected!r}"
        kept += 1
    assert kept == 1000
