"""A small recursive-descent evaluator for boundary-data expressions.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | atom
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

Only sin, cos, ln, exp, abs and the constants pi, e are known; every other
name must be a variable supplied at evaluation time.  Nothing is passed to
Python's ``eval``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, List, Tuple, Union

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "ln": np.log,
    "exp": np.exp,
    "abs": np.abs,
}
CONSTANTS = {"pi": np.pi, "e": np.e}

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(.))")


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    kind: str  # num, var, call, neg, bin
    value: Union[float, str, None] = None
    args: Tuple["Node", ...] = ()


def _tokenize(text: str) -> List[Tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character at {pos} in {text!r}")
        num, name, op = m.groups()
        if num is not None:
            tokens.append(("num", num))
        elif name is not None:
            tokens.append(("name", name))
        elif op.strip():
            if op not in "+-*/()":
                raise ExpressionError(f"operator {op!r} is not allowed")
            tokens.append(("op", op))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind or "token"
            raise ExpressionError(f"expected {want} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> Node:
        node = self.expr()
        if self.i != len(self.tokens):
            raise ExpressionError(f"trailing input in {self.text!r}")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = Node("bin", op, (node, self.term()))
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = Node("bin", op, (node, self.unary()))
        return node

    def unary(self) -> Node:
        if self.peek() == ("op", "-"):
            self.take()
            return Node("neg", None, (self.unary(),))
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.atom()

    def atom(self) -> Node:
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return Node("num", float(val))
        if kind == "name":
            self.take()
            if val in FUNCTIONS:
                self.take("op", "(")
                arg = self.expr()
                self.take("op", ")")
                return Node("call", val, (arg,))
            if val in CONSTANTS:
                return Node("num", CONSTANTS[val])
            return Node("var", val)
        if (kind, val) == ("op", "("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        raise ExpressionError(f"unexpected end of expression in {self.text!r}")


def parse(text: str) -> Node:
    return _Parser(text).parse()


def variables(node: Node) -> set:
    if node.kind == "var":
        return {node.value}
    out = set()
    for a in node.args:
        out |= variables(a)
    return out


def evaluate(node: Node, env: Dict[str, np.ndarray]):
    if node.kind == "num":
        return node.value
    if node.kind == "var":
        if node.value not in env:
            raise ExpressionError(f"unknown name {node.value!r}; available: {', '.join(sorted(env))}")
        return env[node.value]
    if node.kind == "neg":
        return -evaluate(node.args[0], env)
    if node.kind == "call":
        with np.errstate(all="ignore"):
            return FUNCTIONS[node.value](evaluate(node.args[0], env))
    a, b = (evaluate(x, env) for x in node.args)
    with np.errstate(all="ignore"):
        return {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.true_divide}[node.value](a, b)


def evaluate_text(text: str, env: Dict[str, np.ndarray]):
    return evaluate(parse(text), env)


def evaluate_constant(text: str) -> float:
    value = float(evaluate(parse(text), {}))
    if not np.isfinite(value):
        raise ExpressionError(f"{text!r} is not finite")
    return value
