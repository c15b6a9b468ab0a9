"""Closed-form scalar fields with partial derivatives to total order 2.

A ``ScalarField`` wraps a sympy expression in a fixed tuple of coordinate
symbols and lambdifies the expression together with every first and second
partial, so analytic charts, tubes and graph functions all expose exact
derivatives through one interface.  Also hosts the small arithmetic
expression grammar used by the surface/tube file formats.
"""

import ast

import numpy as np
import sympy as sp

from .errors import ConfigurationError


def _broadcast_eval(fn, args):
    shape = np.broadcast(*[np.asarray(a) for a in args]).shape
    out = np.empty(shape, dtype=float)
    out[...] = fn(*args)
    return out


class ScalarField:
    """A scalar function of n coordinates with exact partials to order 2."""

    def __init__(self, expr, symbols):
        self.expr = sp.sympify(expr)
        self.symbols = tuple(symbols)
        n = len(self.symbols)
        self._f = sp.lambdify(self.symbols, self.expr, modules="numpy")
        grads = [sp.diff(self.expr, s) for s in self.symbols]
        self._df = [sp.lambdify(self.symbols, g, modules="numpy") for g in grads]
        self._ddf = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                fn = sp.lambdify(self.symbols, sp.diff(grads[i], self.symbols[j]),
                                 modules="numpy")
                self._ddf[i][j] = fn
                self._ddf[j][i] = fn

    @property
    def nvars(self):
        return len(self.symbols)

    def value(self, *args):
        return _broadcast_eval(self._f, args)

    def grad(self, *args):
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape
        out = np.empty(shape + (self.nvars,), dtype=float)
        for i, fn in enumerate(self._df):
            out[..., i] = _broadcast_eval(fn, args)
        return out

    def hess(self, *args):
        shape = np.broadcast(*[np.asarray(a) for a in args]).shape
        n = self.nvars
        out = np.empty(shape + (n, n), dtype=float)
        for i in range(n):
            for j in range(i, n):
                v = _broadcast_eval(self._ddf[i][j], args)
                out[..., i, j] = v
                out[..., j, i] = v
        return out

    def __call__(self, *args):
        return self.value(*args)


_FUNCTIONS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}
_CONSTANTS = {"pi": sp.pi}


def parse_expression(text, var_names):
    """Parse the restricted arithmetic grammar into a sympy expression.

    Allowed: + - * / (and unary -), sin, cos, exp, numeric constants, pi,
    and the variables listed in ``var_names``.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError("cannot parse expression %r: %s" % (text, exc)) from exc
    symbols = {name: sp.Symbol(name) for name in var_names}

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.BinOp):
            left, right = build(node.left), build(node.right)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            if isinstance(node.op, ast.Div):
                return left / right
            raise ConfigurationError("operator not in the expression grammar: %s"
                                     % type(node.op).__name__)
        if isinstance(node, ast.UnaryOp):
            if isinstance(node.op, ast.USub):
                return -build(node.operand)
            if isinstance(node.op, ast.UAdd):
                return build(node.operand)
            raise ConfigurationError("unary operator not allowed")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ConfigurationError("function not in the expression grammar")
            if len(node.args) != 1 or node.keywords:
                raise ConfigurationError("functions take exactly one argument")
            return _FUNCTIONS[node.func.id](build(node.args[0]))
        if isinstance(node, ast.Name):
            if node.id in symbols:
                return symbols[node.id]
            if node.id in _CONSTANTS:
                return _CONSTANTS[node.id]
            raise ConfigurationError("unknown name %r (variables: %s)"
                                     % (node.id, ", ".join(var_names)))
        if isinstance(node, ast.Constant):
            if isinstance(node.value, (int, float)):
                return sp.Float(node.value) if isinstance(node.value, float) else sp.Integer(node.value)
            raise ConfigurationError("only numeric constants allowed")
        raise ConfigurationError("syntax not in the expression grammar: %s"
                                 % type(node).__name__)

    return build(tree), [symbols[name] for name in var_names]


def field_from_expression(text, var_names):
    expr, syms = parse_expression(text, var_names)
    return ScalarField(expr, syms)
