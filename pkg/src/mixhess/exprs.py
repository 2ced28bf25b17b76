"""Arithmetic expressions in x, y and r = sqrt(x^2 + y^2).

Grammar, loosest binding first::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('-' | '+') unary | power
    power   := atom ('^' unary)?          # right-associative, -2^2 == -4
    atom    := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'

Evaluation accepts floats or numpy arrays for x and y and raises
ExprDomainError on square roots of negatives, division by zero and
non-integer powers of negatives.
"""
import math
import re
from dataclasses import dataclass

import numpy as np

VARIABLES = ("x", "y", "r")
FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "sqrt": 1, "abs": 1, "min": None, "max": None}


class ExprSyntaxError(ValueError):
    def __init__(self, message, pos):
        super().__init__(f"{message} at position {pos}")
        self.pos = pos


class ExprDomainError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
                    r"|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^(),]))")


def _tokenize(src):
    src = src.replace("−", "-")
    tokens, pos = [], 0
    while True:
        m = _TOKEN.match(src, pos)
        if m is None:
            rest = src[pos:]
            if rest.strip() == "":
                break
            bad = pos + len(rest) - len(rest.lstrip())
            raise ExprSyntaxError(f"unexpected character {src[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, pos = self.take()
        if text != value:
            found = "end of input" if kind == "end" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", pos)

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.take()
            return Neg(self.unary())
        if kind == "op" and text == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, pos = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[1] == "(":
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", pos)
                self.take()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.take()
                    args.append(self.expr())
                self.expect(")")
                arity = FUNCTIONS[text]
                if arity is not None and len(args) != arity:
                    raise ExprSyntaxError(f"{text} takes {arity} argument(s)", pos)
                return Call(text, tuple(args))
            if text not in VARIABLES:
                raise ExprSyntaxError(f"unknown variable {text!r}", pos)
            return Var(text)
        if text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExprSyntaxError(f"unexpected {found}", pos)


def parse(src):
    """Parse expression text into an immutable tree."""
    p = _Parser(src)
    node = p.expr()
    kind, text, pos = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"unexpected trailing {text!r}", pos)
    return node


def to_source(e):
    """Fully parenthesized text that parses back to the same tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


def _check(cond, message):
    if np.any(cond):
        raise ExprDomainError(message)


def _eval(e, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Neg):
        return -_eval(e.operand, env)
    if isinstance(e, BinOp):
        a, b = _eval(e.left, env), _eval(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            _check(np.asarray(b) == 0, "division by zero")
            return np.true_divide(a, b)
        _check((np.asarray(a) < 0) & (np.asarray(b) != np.round(b)),
               "non-integer power of a negative number")
        _check((np.asarray(a) == 0) & (np.asarray(b) < 0), "zero to a negative power")
        return np.power(np.asarray(a, dtype=float), b)
    if isinstance(e, Call):
        args = [_eval(a, env) for a in e.args]
        if e.name == "sqrt":
            _check(np.asarray(args[0]) < 0, "square root of a negative number")
            return np.sqrt(args[0])
        if e.name == "min":
            return _reduce(np.minimum, args)
        if e.name == "max":
            return _reduce(np.maximum, args)
        return {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}[e.name](args[0])
    raise TypeError(f"not an expression node: {e!r}")


def _reduce(f, args):
    out = args[0]
    for a in args[1:]:
        out = f(out, a)
    return out


def evaluate(e, x, y):
    """Evaluate at scalar or array coordinates; result has the broadcast shape."""
    if isinstance(e, str):
        e = parse(e)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    env = {"x": x, "y": y, "r": np.hypot(x, y)}
    with np.errstate(over="ignore"):
        out = np.broadcast_to(np.asarray(_eval(e, env), dtype=float), np.broadcast(x, y).shape)
    if out.ndim == 0:
        return float(out)
    return np.array(out)


def compile_expr(src):
    """A vectorized callable ``f(x, y)`` for expression text."""
    tree = parse(src)

    def f(x, y):
        return evaluate(tree, x, y)

    f.source = src
    f.tree = tree
    return f


def positivity_scan(e, grid, boundary_samples=2048):
    """Minimum of an expression over grid nodes and boundary samples.

    Returns ``(min_value, (x, y))``.
    """
    if isinstance(e, str):
        e = parse(e)
    sx, sy = grid.domain.boundary_samples(boundary_samples)
    xs = np.concatenate([grid.x, grid.bpoint[:, 0], sx])
    ys = np.concatenate([grid.y, grid.bpoint[:, 1], sy])
    vals = np.broadcast_to(evaluate(e, xs, ys), xs.shape)
    i = int(np.argmin(vals))
    return float(vals[i]), (float(xs[i]), float(ys[i]))


# math-module mirror used where scalar IEEE semantics are wanted
SCALAR_FUNCS = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "sqrt": math.sqrt,
                "abs": abs, "min": min, "max": max}
