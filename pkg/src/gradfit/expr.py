"""Scalar expressions as shared DAGs, with reverse-mode gradients and op counting.

Grammar (highest precedence first)::

    atom    := NUMBER | x<k> | FUNC '(' expr ')' | '(' expr ')'
    power   := atom [ '^' ['-'] INTEGER ]
    unary   := '-' unary | power
    term    := unary (('*' | '/') unary)*
    expr    := term (('+' | '-') term)*

``FUNC`` is one of exp, log, sin, cos, sqrt.  Variables are ``x1 .. xl``.
Identical sub-expressions are stored once.

Operation counts: every binary arithmetic operation and elementary
function costs 1; sign changes are free; ``x^k`` costs the number of
multiplications of binary exponentiation plus one division when ``k < 0``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, ExprSyntaxError, ParameterError

UNARY_FUNCS = ("exp", "log", "sin", "cos", "sqrt")
BINARY_OPS = {"+": "add", "-": "sub", "*": "mul", "/": "div"}

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(.))")


@dataclass(frozen=True)
class Node:
    op: str
    args: tuple = ()
    payload: object = None


@dataclass(frozen=True)
class EvalReport:
    value: float
    op_count: int


@dataclass(frozen=True)
class GradReport:
    value: float
    gradient: np.ndarray
    op_count: int


def pow_cost(k):
    """Multiplications used by binary exponentiation for ``x**k``."""
    a = abs(int(k))
    if a <= 1:
        mults = 0
    else:
        mults = a.bit_length() - 1 + bin(a).count("1") - 1
    return mults + (1 if k < 0 else 0)


_FORWARD_COST = {"const": 0, "var": 0, "neg": 0}


def _cost(node):
    if node.op in _FORWARD_COST:
        return _FORWARD_COST[node.op]
    if node.op == "pow":
        return pow_cost(node.payload)
    return 1


class ExprGraph:
    """Topologically ordered expression DAG; the last node is the output."""

    def __init__(self, nodes, n_vars, text=None):
        self.nodes = tuple(nodes)
        self.n_vars = int(n_vars)
        self.text = text
        for i, node in enumerate(self.nodes):
            if any(a >= i for a in node.args):
                raise ParameterError(f"node {i} references a later node")
        active = []
        for node in self.nodes:
            active.append(node.op == "var" or any(active[a] for a in node.args))
        self._active = tuple(active)

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return f"ExprGraph({self.text!r}, n_vars={self.n_vars}, nodes={len(self.nodes)})"

    @property
    def output(self):
        return len(self.nodes) - 1

    def eval_cost(self):
        return sum(_cost(n) for n in self.nodes)

    def __call__(self, x):
        return evaluate(self, x).value

    def gradient(self, x):
        return grad_reverse(self, x).gradient


class _Builder:
    def __init__(self):
        self.nodes = []
        self.index = {}

    def add(self, op, args=(), payload=None):
        key = (op, tuple(args), payload)
        if key not in self.index:
            self.index[key] = len(self.nodes)
            self.nodes.append(Node(op, tuple(args), payload))
        return self.index[key]


class _Parser:
    def __init__(self, text, n_vars):
        self.text = text
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None or m.end() == pos:
                break
            if m.group(0).strip() == "":
                break
            start = m.end() - len(m.group(m.lastindex))
            kind = ("num", "name", "sym")[m.lastindex - 1]
            self.tokens.append((kind, m.group(m.lastindex), start))
            pos = m.end()
        self.tokens.append(("end", "", len(text)))
        self.i = 0
        self.builder = _Builder()
        self.n_vars = n_vars
        self.max_var = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        raise ExprSyntaxError(message, tok[2])

    def expect(self, sym):
        tok = self.peek()
        if tok[0] != "sym" or tok[1] != sym:
            self.error(f"expected {sym!r}")
        return self.take()

    def parse(self):
        out = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected {self.peek()[1]!r}")
        return out

    def expr(self):
        left = self.term()
        while self.peek()[0] == "sym" and self.peek()[1] in "+-":
            op = BINARY_OPS[self.take()[1]]
            left = self.builder.add(op, (left, self.term()))
        return left

    def term(self):
        left = self.unary()
        while self.peek()[0] == "sym" and self.peek()[1] in "*/":
            op = BINARY_OPS[self.take()[1]]
            left = self.builder.add(op, (left, self.unary()))
        return left

    def unary(self):
        tok = self.peek()
        if tok[0] == "sym" and tok[1] == "-":
            self.take()
            return self.builder.add("neg", (self.unary(),))
        return self.power()

    def power(self):
        base = self.atom()
        tok = self.peek()
        if tok[0] == "sym" and tok[1] == "^":
            self.take()
            sign = 1
            wrapped = False
            if self.peek()[:2] == ("sym", "("):
                self.take()
                wrapped = True
            if self.peek()[:2] == ("sym", "-"):
                self.take()
                sign = -1
            num = self.peek()
            if num[0] != "num" or not num[1].isdigit():
                self.error("exponent must be an integer constant")
            self.take()
            if wrapped:
                self.expect(")")
            k = sign * int(num[1])
            nxt = self.peek()
            if nxt[0] == "sym" and nxt[1] == "^":
                self.error("chained exponents are not supported")
            if k == 0:
                return self.builder.add("const", (), 1.0)
            if k == 1:
                return base
            return self.builder.add("pow", (base,), k)
        return base

    def atom(self):
        tok = self.take()
        kind, val, pos = tok
        if kind == "num":
            return self.builder.add("const", (), float(val))
        if kind == "name":
            if val in UNARY_FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return self.builder.add(val, (arg,))
            m = re.fullmatch(r"x([1-9]\d*)", val)
            if m is None:
                raise ExprSyntaxError(f"unknown identifier {val!r}", pos)
            k = int(m.group(1))
            if self.n_vars is not None and k > self.n_vars:
                raise ExprSyntaxError(f"variable {val} exceeds declared arity {self.n_vars}", pos)
            self.max_var = max(self.max_var, k)
            return self.builder.add("var", (), k - 1)
        if kind == "sym" and val == "(":
            out = self.expr()
            self.expect(")")
            return out
        if kind == "end":
            raise ExprSyntaxError("unexpected end of expression", pos)
        raise ExprSyntaxError(f"unexpected {val!r}", pos)


def parse(text, n_vars=None):
    """Parse ``text`` into an :class:`ExprGraph`.

    ``n_vars`` fixes the arity; by default it is the largest variable
    index that occurs.
    """
    p = _Parser(text, n_vars)
    try:
        out = p.parse()
    except RecursionError:
        raise ExprSyntaxError("expression is nested too deeply", 0) from None
    nodes = _prune(p.builder.nodes, out)
    arity = n_vars if n_vars is not None else p.max_var
    return ExprGraph(nodes, arity, text)


def _prune(nodes, out):
    keep = set()
    stack = [out]
    while stack:
        i = stack.pop()
        if i not in keep:
            keep.add(i)
            stack.extend(nodes[i].args)
    order = sorted(keep)
    remap = {old: new for new, old in enumerate(order)}
    return [Node(nodes[i].op, tuple(remap[a] for a in nodes[i].args), nodes[i].payload) for i in order]


def _forward(g, x):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != g.n_vars:
        raise ParameterError(f"expected {g.n_vars} inputs, got {x.size}")
    vals = [0.0] * len(g.nodes)
    ops = 0
    for i, node in enumerate(g.nodes):
        op, args = node.op, node.args
        a = vals[args[0]] if args else None
        if op == "const":
            v = node.payload
        elif op == "var":
            v = float(x[node.payload])
        elif op == "neg":
            v = -a
        elif op == "add":
            v = a + vals[args[1]]
        elif op == "sub":
            v = a - vals[args[1]]
        elif op == "mul":
            v = a * vals[args[1]]
        elif op == "div":
            b = vals[args[1]]
            if b == 0.0:
                raise EvaluationError(f"division by zero at node {i}", node=i)
            v = a / b
        elif op == "pow":
            k = node.payload
            if k < 0 and a == 0.0:
                raise EvaluationError(f"zero raised to negative power at node {i}", node=i)
            v = a**k
        elif op == "exp":
            try:
                v = math.exp(a)
            except OverflowError:
                raise EvaluationError(f"exp overflow at node {i}", node=i) from None
        elif op == "log":
            if a <= 0.0:
                raise EvaluationError(f"log of non-positive value at node {i}", node=i)
            v = math.log(a)
        elif op == "sqrt":
            if a < 0.0:
                raise EvaluationError(f"sqrt of negative value at node {i}", node=i)
            v = math.sqrt(a)
        elif op == "sin":
            v = math.sin(a)
        elif op == "cos":
            v = math.cos(a)
        else:  # pragma: no cover - nodes are built by the parser
            raise ParameterError(f"unknown op {op!r}")
        vals[i] = v
        ops += _cost(node)
    return vals, ops


def evaluate(g, x):
    """Forward sweep; returns the output value and the operations executed."""
    vals, ops = _forward(g, x)
    return EvalReport(vals[-1], ops)


# ``eval`` is the name used in the public interface; keep the builtin reachable.
eval = evaluate  # noqa: A001


def grad_reverse(g, x):
    """Value and gradient by one forward and one adjoint sweep.

    The adjoint of each node is accumulated from its consumers in reverse
    topological order; the first contribution initializes it for free,
    later ones cost one addition each.  Constants and nodes that do not
    depend on any variable carry no adjoint.
    """
    vals, ops = _forward(g, x)
    nodes = g.nodes
    active = g._active
    adj = [None] * len(nodes)
    counter = [0]

    def acc(j, w, negate=False):
        if not active[j]:
            return
        if adj[j] is None:
            adj[j] = -w if negate else w
        else:
            adj[j] = adj[j] - w if negate else adj[j] + w
            counter[0] += 1

    def local(n, w):
        counter[0] += n
        return w

    out = len(nodes) - 1
    if active[out]:
        adj[out] = 1.0
    for i in range(out, -1, -1):
        a = adj[i]
        if a is None:
            continue
        node = nodes[i]
        op, args = node.op, node.args
        if op in ("const", "var"):
            continue
        c = args[0]
        vc = vals[c]
        if op == "neg":
            acc(c, a, negate=True)
        elif op == "add":
            acc(c, a)
            acc(args[1], a)
        elif op == "sub":
            acc(c, a)
            acc(args[1], a, negate=True)
        elif op == "mul":
            d = args[1]
            if active[c]:
                acc(c, local(1, a * vals[d]))
            if active[d]:
                acc(d, local(1, a * vc))
        elif op == "div":
            d = args[1]
            t = local(1, a / vals[d])
            acc(c, t)
            if active[d]:
                acc(d, local(1, t * vals[i]), negate=True)
        elif op == "pow":
            k = node.payload
            # k * x^(k-1) * a
            base = vc ** (k - 1)
            n_ops = pow_cost(k - 1) + (1 if k != 1 else 0) + 1
            acc(c, local(n_ops, k * base * a))
        elif op == "exp":
            acc(c, local(1, a * vals[i]))
        elif op == "log":
            acc(c, local(1, a / vc))
        elif op == "sin":
            acc(c, local(2, a * math.cos(vc)))
        elif op == "cos":
            acc(c, local(2, a * math.sin(vc)), negate=True)
        elif op == "sqrt":
            if vals[i] == 0.0:
                raise EvaluationError(f"sqrt not differentiable at 0 (node {i})", node=i)
            acc(c, local(2, 0.5 * a / vals[i]))
    grad = np.zeros(g.n_vars)
    for i, node in enumerate(nodes):
        if node.op == "var" and adj[i] is not None:
            grad[node.payload] = adj[i]
    return GradReport(vals[-1], grad, ops + counter[0])


_NP_UNARY = {"exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos, "sqrt": np.sqrt}


def evaluate_many(g, X):
    """Vectorized forward sweep over the rows of ``X`` (no domain checks beyond NumPy's)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != g.n_vars:
        raise ParameterError(f"expected {g.n_vars} columns, got {X.shape[1]}")
    vals = []
    for node in g.nodes:
        op, args = node.op, node.args
        if op == "const":
            v = np.full(X.shape[0], node.payload)
        elif op == "var":
            v = X[:, node.payload]
        elif op == "neg":
            v = -vals[args[0]]
        elif op in ("add", "sub", "mul", "div"):
            a, b = vals[args[0]], vals[args[1]]
            v = {"add": np.add, "sub": np.subtract, "mul": np.multiply, "div": np.divide}[op](a, b)
        elif op == "pow":
            v = vals[args[0]] ** float(node.payload)
        else:
            v = _NP_UNARY[op](vals[args[0]])
        vals.append(v)
    return vals[-1]
