"""Restricted arithmetic program dialect: lexer, parser, evaluator.

The dialect is a small Python subset used for generated answer programs:
assignments, if/elif/else blocks, ternaries, list literals, indexing and
slicing, a fixed builtin whitelist, and arbitrary-precision decimal
arithmetic. Numerals may contain digit-group commas ("246,548"); inside
list brackets or call argument lists a digit-comma-digit sequence is a
separator instead.

Loops, function definitions, imports, attribute access, and string
operations beyond literals in lists are rejected at parse time.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from decimal import ROUND_FLOOR, ROUND_HALF_EVEN, Decimal, localcontext
from typing import Union

BUILTINS = ("sum", "len", "sorted", "min", "max", "abs", "round")
KEYWORDS = ("if", "elif", "else")

RENDER_SIG_DIGITS = 12
_EVAL_PRECISION = 50


class LexError(ValueError):
    """Source text cannot be tokenized."""


class ProgramSyntaxError(ValueError):
    """Token stream violates the dialect grammar."""


class ExecErrorKind(enum.Enum):
    DIV_BY_ZERO = "div_by_zero"
    UNDEFINED_NAME = "undefined_name"
    TYPE_MISMATCH = "type_mismatch"
    LIMIT_EXCEEDED = "limit_exceeded"


class ExecError(RuntimeError):
    """Runtime failure while evaluating a parsed program."""

    def __init__(self, kind: ExecErrorKind, message: str) -> None:
        super().__init__(message)
        self.kind = kind


@dataclass(frozen=True, slots=True)
class ExecLimits:
    max_steps: int = 100_000
    max_list_len: int = 100_000
    max_abs_magnitude: Decimal = Decimal("1e100")


Value = Union[Decimal, bool, str, list]


# ---------------------------------------------------------------------------
# Lexer


class TokKind(enum.Enum):
    NUMBER = "number"
    NAME = "name"
    STRING = "string"
    OP = "op"
    NEWLINE = "newline"
    INDENT = "indent"
    DEDENT = "dedent"
    EOF = "eof"


@dataclass(frozen=True, slots=True)
class Token:
    kind: TokKind
    text: str
    line: int


_OPERATORS = (
    "**", "//", "<=", ">=", "==", "!=",
    "+", "-", "*", "/", "%", "<", ">", "=", "(", ")", "[", "]", ",", ":",
)


def tokenize(source: str) -> list[Token]:
    """Tokenize dialect source, handling indentation and grouping commas."""
    tokens: list[Token] = []
    indents = [0]
    # Delimiter context stack: "list" for [ ], "call"/"group" for ( ).
    delims: list[str] = []
    line_no = 0
    for raw_line in source.splitlines():
        line_no += 1
        if delims:
            # Inside brackets lines join implicitly; indentation is ignored.
            _lex_line(raw_line, line_no, tokens, delims)
            continue
        stripped = raw_line.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        indent = _indent_width(raw_line, line_no)
        if indent > indents[-1]:
            indents.append(indent)
            tokens.append(Token(TokKind.INDENT, "", line_no))
        else:
            while indent < indents[-1]:
                indents.pop()
                tokens.append(Token(TokKind.DEDENT, "", line_no))
            if indent != indents[-1]:
                raise LexError(f"line {line_no}: inconsistent dedent")
        _lex_line(raw_line, line_no, tokens, delims)
        if not delims:
            tokens.append(Token(TokKind.NEWLINE, "", line_no))
    if delims:
        raise LexError(f"unclosed delimiter {delims[-1]!r}")
    while len(indents) > 1:
        indents.pop()
        tokens.append(Token(TokKind.DEDENT, "", line_no))
    tokens.append(Token(TokKind.EOF, "", line_no))
    return tokens


def _indent_width(line: str, line_no: int) -> int:
    width = 0
    for ch in line:
        if ch == " ":
            width += 1
        elif ch == "\t":
            width += 8 - width % 8
        else:
            break
    return width


def _lex_line(line: str, line_no: int, tokens: list[Token], delims: list[str]) -> None:
    i = 0
    n = len(line)
    while i < n:
        ch = line[i]
        if ch in " \t":
            i += 1
            continue
        if ch == "#":
            return
        if ch.isdigit() or (ch == "." and i + 1 < n and line[i + 1].isdigit()):
            i = _lex_number(line, i, line_no, tokens, delims)
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (line[j].isalnum() or line[j] == "_"):
                j += 1
            tokens.append(Token(TokKind.NAME, line[i:j], line_no))
            i = j
            continue
        if ch in "'\"":
            i = _lex_string(line, i, line_no, tokens)
            continue
        for op in _OPERATORS:
            if line.startswith(op, i):
                if op == "(":
                    prev = tokens[-1] if tokens else None
                    is_call = (
                        prev is not None
                        and prev.kind is TokKind.NAME
                        and prev.text not in KEYWORDS
                    )
                    delims.append("call" if is_call else "group")
                elif op == "[":
                    delims.append("list")
                elif op in (")", "]"):
                    if not delims:
                        raise LexError(f"line {line_no}: unmatched {op!r}")
                    delims.pop()
                tokens.append(Token(TokKind.OP, op, line_no))
                i += len(op)
                break
        else:
            raise LexError(f"line {line_no}: unexpected character {ch!r}")


def _lex_number(
    line: str, start: int, line_no: int, tokens: list[Token], delims: list[str]
) -> int:
    # A digit-group comma merges into the numeral only when the innermost
    # delimiter is not a list bracket or call argument list; grouping parens
    # keep "(781 * 246,548)" working.
    grouping_ok = not delims or delims[-1] == "group"
    i = start
    n = len(line)
    digits: list[str] = []
    seen_dot = False
    while i < n:
        ch = line[i]
        if ch.isdigit():
            digits.append(ch)
            i += 1
        elif ch == "." and not seen_dot:
            seen_dot = True
            digits.append(ch)
            i += 1
        elif (
            ch == ","
            and grouping_ok
            and not seen_dot
            and digits
            and digits[-1].isdigit()
            and i + 1 < n
            and line[i + 1].isdigit()
        ):
            i += 1  # swallow the separator
        else:
            break
    if i < n and (line[i].isalnum() or line[i] == "_"):
        raise LexError(f"line {line_no}: malformed numeral at {line[start:i + 1]!r}")
    tokens.append(Token(TokKind.NUMBER, "".join(digits), line_no))
    return i


def _lex_string(line: str, start: int, line_no: int, tokens: list[Token]) -> int:
    quote = line[start]
    i = start + 1
    out: list[str] = []
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            out.append(line[i + 1])
            i += 2
            continue
        if ch == quote:
            tokens.append(Token(TokKind.STRING, "".join(out), line_no))
            return i + 1
        out.append(ch)
        i += 1
    raise LexError(f"line {line_no}: unterminated string literal")


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True, slots=True)
class Num:
    literal: str


@dataclass(frozen=True, slots=True)
class Str:
    value: str


@dataclass(frozen=True, slots=True)
class Name:
    ident: str


@dataclass(frozen=True, slots=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True, slots=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True, slots=True)
class Ternary:
    condition: "Expr"
    then: "Expr"
    otherwise: "Expr"


@dataclass(frozen=True, slots=True)
class ListExpr:
    items: tuple["Expr", ...]


@dataclass(frozen=True, slots=True)
class Index:
    obj: "Expr"
    index: "Expr"


@dataclass(frozen=True, slots=True)
class Slice:
    obj: "Expr"
    lower: "Expr | None"
    upper: "Expr | None"


@dataclass(frozen=True, slots=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Num, Str, Name, Unary, Binary, Compare, Ternary, ListExpr, Index, Slice, Call]


@dataclass(frozen=True, slots=True)
class Assign:
    target: str
    expr: Expr


@dataclass(frozen=True, slots=True)
class IfBlock:
    # (condition, body) per branch; the else branch has condition None.
    branches: tuple[tuple[Expr | None, tuple["Stmt", ...]], ...]


Stmt = Union[Assign, IfBlock]


@dataclass(frozen=True, slots=True)
class Program:
    statements: tuple[Stmt, ...]
    source: str = field(default="", compare=False)


# ---------------------------------------------------------------------------
# Parser

_COMPARE_OPS = ("<", "<=", ">", ">=", "==", "!=")


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: TokKind, text: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind is not kind or (text is not None and tok.text != text):
            want = text if text is not None else kind.value
            raise ProgramSyntaxError(
                f"line {tok.line}: expected {want!r}, got {tok.text or tok.kind.value!r}"
            )
        return self.advance()

    def at_op(self, *texts: str) -> bool:
        tok = self.peek()
        return tok.kind is TokKind.OP and tok.text in texts

    def at_keyword(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind is TokKind.NAME and tok.text in words

    # statements -----------------------------------------------------------

    def parse_program(self) -> Program:
        statements: list[Stmt] = []
        while self.peek().kind is not TokKind.EOF:
            statements.append(self.parse_statement())
        if not statements:
            raise ProgramSyntaxError("empty program")
        return Program(tuple(statements))

    def parse_statement(self) -> Stmt:
        if self.at_keyword("if"):
            return self.parse_if()
        tok = self.peek()
        if tok.kind is TokKind.NAME and tok.text not in KEYWORDS:
            if tok.text in BUILTINS:
                nxt = self.tokens[self.pos + 1]
                if nxt.kind is TokKind.OP and nxt.text == "=":
                    raise ProgramSyntaxError(
                        f"line {tok.line}: cannot assign to builtin {tok.text!r}"
                    )
            nxt = self.tokens[self.pos + 1]
            if nxt.kind is TokKind.OP and nxt.text == "=":
                self.advance()
                self.advance()
                expr = self.parse_expr()
                self.expect(TokKind.NEWLINE)
                return Assign(tok.text, expr)
        raise ProgramSyntaxError(
            f"line {tok.line}: expected assignment or if-block, got {tok.text or tok.kind.value!r}"
        )

    def parse_if(self) -> IfBlock:
        branches: list[tuple[Expr | None, tuple[Stmt, ...]]] = []
        self.expect(TokKind.NAME, "if")
        condition = self.parse_expr()
        branches.append((condition, self.parse_block()))
        while self.at_keyword("elif"):
            self.advance()
            condition = self.parse_expr()
            branches.append((condition, self.parse_block()))
        if self.at_keyword("else"):
            self.advance()
            branches.append((None, self.parse_block()))
        return IfBlock(tuple(branches))

    def parse_block(self) -> tuple[Stmt, ...]:
        self.expect(TokKind.OP, ":")
        self.expect(TokKind.NEWLINE)
        self.expect(TokKind.INDENT)
        body: list[Stmt] = []
        while self.peek().kind is not TokKind.DEDENT:
            body.append(self.parse_statement())
        self.expect(TokKind.DEDENT)
        if not body:
            raise ProgramSyntaxError("empty block")
        return tuple(body)

    # expressions ----------------------------------------------------------

    def parse_expr(self) -> Expr:
        value = self.parse_comparison()
        if self.at_keyword("if"):
            self.advance()
            condition = self.parse_comparison()
            self.expect(TokKind.NAME, "else")
            otherwise = self.parse_expr()
            return Ternary(condition, value, otherwise)
        return value

    def parse_comparison(self) -> Expr:
        left = self.parse_arith()
        if self.at_op(*_COMPARE_OPS):
            op = self.advance().text
            right = self.parse_arith()
            if self.at_op(*_COMPARE_OPS):
                tok = self.peek()
                raise ProgramSyntaxError(f"line {tok.line}: chained comparison")
            return Compare(op, left, right)
        return left

    def parse_arith(self) -> Expr:
        left = self.parse_term()
        while self.at_op("+", "-"):
            op = self.advance().text
            left = Binary(op, left, self.parse_term())
        return left

    def parse_term(self) -> Expr:
        left = self.parse_unary()
        while self.at_op("*", "/", "//", "%"):
            op = self.advance().text
            left = Binary(op, left, self.parse_unary())
        return left

    def parse_unary(self) -> Expr:
        if self.at_op("-", "+"):
            op = self.advance().text
            return Unary(op, self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_postfix()
        if self.at_op("**"):
            self.advance()
            # Right-associative; unary binds inside the exponent (2 ** -3).
            return Binary("**", base, self.parse_unary())
        return base

    def parse_postfix(self) -> Expr:
        node = self.parse_atom()
        while True:
            if self.at_op("("):
                if not isinstance(node, Name):
                    tok = self.peek()
                    raise ProgramSyntaxError(f"line {tok.line}: only builtins are callable")
                if node.ident not in BUILTINS:
                    tok = self.peek()
                    raise ProgramSyntaxError(
                        f"line {tok.line}: unknown function {node.ident!r}"
                    )
                self.advance()
                args: list[Expr] = []
                if not self.at_op(")"):
                    args.append(self.parse_expr())
                    while self.at_op(","):
                        self.advance()
                        args.append(self.parse_expr())
                self.expect(TokKind.OP, ")")
                node = Call(node.ident, tuple(args))
            elif self.at_op("["):
                self.advance()
                node = self.parse_subscript(node)
            else:
                return node

    def parse_subscript(self, obj: Expr) -> Expr:
        lower: Expr | None = None
        upper: Expr | None = None
        if not self.at_op(":"):
            lower = self.parse_expr()
            if self.at_op("]"):
                self.advance()
                return Index(obj, lower)
        self.expect(TokKind.OP, ":")
        if not self.at_op("]"):
            upper = self.parse_expr()
        self.expect(TokKind.OP, "]")
        return Slice(obj, lower, upper)

    def parse_atom(self) -> Expr:
        tok = self.peek()
        if tok.kind is TokKind.NUMBER:
            self.advance()
            return Num(tok.text)
        if tok.kind is TokKind.STRING:
            self.advance()
            return Str(tok.text)
        if tok.kind is TokKind.NAME and tok.text not in KEYWORDS:
            self.advance()
            return Name(tok.text)
        if self.at_op("("):
            self.advance()
            inner = self.parse_expr()
            self.expect(TokKind.OP, ")")
            return inner
        if self.at_op("["):
            self.advance()
            items: list[Expr] = []
            if not self.at_op("]"):
                items.append(self.parse_expr())
                while self.at_op(","):
                    self.advance()
                    items.append(self.parse_expr())
            self.expect(TokKind.OP, "]")
            return ListExpr(tuple(items))
        raise ProgramSyntaxError(
            f"line {tok.line}: unexpected {tok.text or tok.kind.value!r}"
        )


def parse_program(source: str) -> Program:
    """Parse dialect source into a Program. Raises LexError or ProgramSyntaxError."""
    program = _Parser(tokenize(source)).parse_program()
    program = Program(program.statements, source)
    _reject_loose_strings(program)
    return program


def _reject_loose_strings(program: Program) -> None:
    # String literals are legal only as immediate list elements.
    def walk_expr(node: Expr, in_list: bool) -> None:
        if isinstance(node, Str):
            if not in_list:
                raise ProgramSyntaxError("string literal outside a list")
            return
        if isinstance(node, ListExpr):
            for item in node.items:
                walk_expr(item, isinstance(item, Str))
            return
        for child in _children(node):
            walk_expr(child, False)

    def walk_stmt(stmt: Stmt) -> None:
        if isinstance(stmt, Assign):
            walk_expr(stmt.expr, False)
        else:
            for condition, body in stmt.branches:
                if condition is not None:
                    walk_expr(condition, False)
                for inner in body:
                    walk_stmt(inner)

    for stmt in program.statements:
        walk_stmt(stmt)


def _children(node: Expr) -> tuple[Expr, ...]:
    if isinstance(node, Unary):
        return (node.operand,)
    if isinstance(node, (Binary, Compare)):
        return (node.left, node.right)
    if isinstance(node, Ternary):
        return (node.condition, node.then, node.otherwise)
    if isinstance(node, Index):
        return (node.obj, node.index)
    if isinstance(node, Slice):
        return tuple(x for x in (node.obj, node.lower, node.upper) if x is not None)
    if isinstance(node, Call):
        return node.args
    if isinstance(node, ListExpr):
        return node.items
    return ()


def assigns_answer(program: Program) -> bool:
    """True when some reachable statement assigns to ``ans``."""

    def scan(statements: tuple[Stmt, ...]) -> bool:
        for stmt in statements:
            if isinstance(stmt, Assign) and stmt.target == "ans":
                return True
            if isinstance(stmt, IfBlock):
                if any(scan(body) for _, body in stmt.branches):
                    return True
        return False

    return scan(program.statements)


# ---------------------------------------------------------------------------
# Evaluator


class _Evaluator:
    def __init__(self, limits: ExecLimits) -> None:
        self.limits = limits
        self.env: dict[str, Value] = {}
        self.steps = 0

    def tick(self) -> None:
        self.steps += 1
        if self.steps > self.limits.max_steps:
            raise ExecError(ExecErrorKind.LIMIT_EXCEEDED, "step budget exhausted")

    def check_magnitude(self, value: Decimal) -> Decimal:
        if value.is_nan() or value.is_infinite() or abs(value) > self.limits.max_abs_magnitude:
            raise ExecError(ExecErrorKind.LIMIT_EXCEEDED, "value magnitude out of bounds")
        return value

    def check_list(self, items: list) -> list:
        if len(items) > self.limits.max_list_len:
            raise ExecError(ExecErrorKind.LIMIT_EXCEEDED, "list too long")
        return items

    def run(self, program: Program) -> Value:
        for stmt in program.statements:
            self.exec_stmt(stmt)
        if "ans" not in self.env:
            raise ExecError(ExecErrorKind.UNDEFINED_NAME, "program never assigned 'ans'")
        return self.env["ans"]

    def exec_stmt(self, stmt: Stmt) -> None:
        self.tick()
        if isinstance(stmt, Assign):
            self.env[stmt.target] = self.eval(stmt.expr)
            return
        for condition, body in stmt.branches:
            if condition is None or self.truthy(self.eval(condition)):
                for inner in body:
                    self.exec_stmt(inner)
                return

    def truthy(self, value: Value) -> bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, Decimal):
            return value != 0
        if isinstance(value, (list, str)):
            return len(value) > 0
        raise ExecError(ExecErrorKind.TYPE_MISMATCH, "untestable condition value")

    def eval(self, node: Expr) -> Value:
        self.tick()
        if isinstance(node, Num):
            return Decimal(node.literal)
        if isinstance(node, Str):
            return node.value
        if isinstance(node, Name):
            try:
                return self.env[node.ident]
            except KeyError:
                raise ExecError(
                    ExecErrorKind.UNDEFINED_NAME, f"undefined name {node.ident!r}"
                ) from None
        if isinstance(node, Unary):
            return self.eval_unary(node)
        if isinstance(node, Binary):
            return self.eval_binary(node)
        if isinstance(node, Compare):
            return self.eval_compare(node)
        if isinstance(node, Ternary):
            if self.truthy(self.eval(node.condition)):
                return self.eval(node.then)
            return self.eval(node.otherwise)
        if isinstance(node, ListExpr):
            return self.check_list([self.eval(item) for item in node.items])
        if isinstance(node, Index):
            return self.eval_index(node)
        if isinstance(node, Slice):
            return self.eval_slice(node)
        if isinstance(node, Call):
            return self.eval_call(node)
        raise AssertionError(f"unhandled node {node!r}")

    def eval_unary(self, node: Unary) -> Value:
        operand = self.number(self.eval(node.operand), node.op)
        return self.check_magnitude(-operand if node.op == "-" else +operand)

    def number(self, value: Value, op: str) -> Decimal:
        if isinstance(value, Decimal):
            return value
        if isinstance(value, bool):
            # Comparisons feed arithmetic in generated code; True is 1.
            return Decimal(1 if value else 0)
        raise ExecError(ExecErrorKind.TYPE_MISMATCH, f"{op!r} needs a number")

    def eval_binary(self, node: Binary) -> Value:
        left = self.eval(node.left)
        right = self.eval(node.right)
        if node.op == "+" and isinstance(left, list) and isinstance(right, list):
            return self.check_list(left + right)
        a = self.number(left, node.op)
        b = self.number(right, node.op)
        if node.op in ("/", "//", "%") and b == 0:
            raise ExecError(ExecErrorKind.DIV_BY_ZERO, "division by zero")
        if node.op == "+":
            result = a + b
        elif node.op == "-":
            result = a - b
        elif node.op == "*":
            result = a * b
        elif node.op == "/":
            result = a / b
        elif node.op == "//":
            result = (a / b).to_integral_value(rounding=ROUND_FLOOR)
        elif node.op == "%":
            # Python-style modulo: result takes the divisor's sign.
            result = a - b * (a / b).to_integral_value(rounding=ROUND_FLOOR)
        elif node.op == "**":
            result = self.power(a, b)
        else:
            raise AssertionError(node.op)
        return self.check_magnitude(result)

    def power(self, base: Decimal, exponent: Decimal) -> Decimal:
        if exponent != exponent.to_integral_value():
            raise ExecError(ExecErrorKind.TYPE_MISMATCH, "exponent must be an integer")
        if abs(exponent) > 9999:
            raise ExecError(ExecErrorKind.LIMIT_EXCEEDED, "exponent too large")
        if base == 0 and exponent < 0:
            raise ExecError(ExecErrorKind.DIV_BY_ZERO, "zero to a negative power")
        try:
            return base ** int(exponent)
        except ArithmeticError as exc:
            raise ExecError(ExecErrorKind.LIMIT_EXCEEDED, f"power overflow: {exc}") from None

    def eval_compare(self, node: Compare) -> Value:
        a = self.number(self.eval(node.left), node.op)
        b = self.number(self.eval(node.right), node.op)
        return {
            "<": a < b,
            "<=": a <= b,
            ">": a > b,
            ">=": a >= b,
            "==": a == b,
            "!=": a != b,
        }[node.op]

    def eval_index(self, node: Index) -> Value:
        obj = self.eval(node.obj)
        if not isinstance(obj, list):
            raise ExecError(ExecErrorKind.TYPE_MISMATCH, "only lists are indexable")
        index = self.int_index(self.eval(node.index))
        try:
            return obj[index]
        except IndexError:
            raise ExecError(ExecErrorKind.TYPE_MISMATCH, "list index out of range") from None

    def eval_slice(self, node: Slice) -> Value:
        obj = self.eval(node.obj)
        if not isinstance(obj, list):
            raise ExecError(ExecErrorKind.TYPE_MISMATCH, "only lists are sliceable")
        lower = self.int_index(self.eval(node.lower)) if node.lower is not None else None
        upper = self.int_index(self.eval(node.upper)) if node.upper is not None else None
        return obj[lower:upper]

    def int_index(self, value: Value) -> int:
        if isinstance(value, bool) or not isinstance(value, Decimal):
            raise ExecError(ExecErrorKind.TYPE_MISMATCH, "index must be a number")
        if value != value.to_integral_value():
            raise ExecError(ExecErrorKind.TYPE_MISMATCH, "index must be an integer")
        return int(value)

    def eval_call(self, node: Call) -> Value:
        args = [self.eval(arg) for arg in node.args]
        fn = node.func
        if fn == "len":
            return Decimal(len(self.one_list(fn, args)))
        if fn == "sum":
            total = Decimal(0)
            for item in self.number_list(fn, args):
                total = self.check_magnitude(total + item)
            return total
        if fn == "sorted":
            return self.check_list(sorted(self.number_list(fn, args)))
        if fn in ("min", "max"):
            if len(args) == 1:
                items = self.number_list(fn, args)
                if not items:
                    raise ExecError(ExecErrorKind.TYPE_MISMATCH, f"{fn}() of empty list")
            elif len(args) >= 2:
                items = [self.number(a, fn) for a in args]
            else:
                raise ExecError(ExecErrorKind.TYPE_MISMATCH, f"{fn}() needs arguments")
            return min(items) if fn == "min" else max(items)
        if fn == "abs":
            if len(args) != 1:
                raise ExecError(ExecErrorKind.TYPE_MISMATCH, "abs() takes one argument")
            return abs(self.number(args[0], fn))
        if fn == "round":
            return self.call_round(args)
        raise AssertionError(fn)

    def one_list(self, fn: str, args: list[Value]) -> list:
        if len(args) != 1 or not isinstance(args[0], list):
            raise ExecError(ExecErrorKind.TYPE_MISMATCH, f"{fn}() takes one list")
        return args[0]

    def number_list(self, fn: str, args: list[Value]) -> list[Decimal]:
        return [self.number(item, fn) for item in self.one_list(fn, args)]

    def call_round(self, args: list[Value]) -> Decimal:
        if not 1 <= len(args) <= 2:
            raise ExecError(ExecErrorKind.TYPE_MISMATCH, "round() takes one or two arguments")
        value = self.number(args[0], "round")
        if len(args) == 1:
            return value.to_integral_value(rounding=ROUND_HALF_EVEN)
        ndigits = self.int_index(args[1])
        try:
            return value.quantize(Decimal(1).scaleb(-ndigits), rounding=ROUND_HALF_EVEN)
        except ArithmeticError as exc:
            raise ExecError(ExecErrorKind.LIMIT_EXCEEDED, f"round overflow: {exc}") from None


def execute_program(program: Program, limits: ExecLimits | None = None) -> Value:
    """Evaluate a parsed program and return the final value of ``ans``."""
    with localcontext() as ctx:
        ctx.prec = _EVAL_PRECISION
        return _Evaluator(limits or ExecLimits()).run(program)


def run_source(source: str, limits: ExecLimits | None = None) -> Value:
    """Parse then execute in one step."""
    return execute_program(parse_program(source), limits)


# ---------------------------------------------------------------------------
# Rendering


def render_number(value: Decimal) -> str:
    """Positional text for a number, rounded to 12 significant digits."""
    if value == 0:
        return "0"
    with localcontext() as ctx:
        ctx.prec = RENDER_SIG_DIGITS
        rounded = +value
    if rounded == rounded.to_integral_value() and abs(rounded) < Decimal("1e16"):
        return str(rounded.quantize(Decimal(1)))
    return format(rounded.normalize(), "f")


def render_value(value: Value) -> str:
    """Human-readable text for any runtime value."""
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, Decimal):
        return render_number(value)
    if isinstance(value, str):
        return value
    if isinstance(value, list):
        parts = [
            f"'{item}'" if isinstance(item, str) else render_value(item)
            for item in value
        ]
        return "[" + ", ".join(parts) + "]"
    raise TypeError(f"unrenderable value {value!r}")
