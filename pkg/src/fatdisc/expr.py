"""Arithmetic expressions over (x1, x2, y1, y2, z1, z2) with forward-mode derivatives.

The grammar is a subset of Python expression syntax: numbers, the six
coordinate names, ``pi``, ``+ - * /``, ``**`` with a constant exponent and the
functions ``exp``, ``sin``, ``cos``.  One-forms are written as sums of
``coefficient * dX`` terms, e.g. ``dz1 - y1*dx1 + y2*dx2``; vector fields as
bracketed lists of six component expressions.
"""

from __future__ import annotations

import ast
from typing import Optional

import numpy as np

from .errors import ParseError
from .geometry import COORDS, DifferentialOneForm, VectorField

_VARS = {name: i for i, name in enumerate(COORDS)}
_DIFFS = {"d" + name: i for i, name in enumerate(COORDS)}
_FUNCS = {
    "exp": (np.exp, np.exp),
    "sin": (np.sin, np.cos),
    "cos": (np.cos, lambda u: -np.sin(u)),
}
_CONSTS = {"pi": np.pi}


def _where(node: ast.AST, location: Optional[str]) -> str:
    col = getattr(node, "col_offset", None)
    pos = f"col {col + 1}" if col is not None else "?"
    return f"{location}, {pos}" if location else pos


def _parse(source: str, location: Optional[str]) -> ast.AST:
    try:
        return ast.parse(source.strip(), mode="eval").body
    except SyntaxError as exc:
        where = f"col {exc.offset}" if exc.offset else "end of expression"
        raise ParseError(f"syntax error in {source.strip()!r}", f"{location}, {where}" if location else where) from None


class Expression:
    """A scalar expression; ``value(x)`` and ``gradient(x)`` accept points of shape (..., 6)."""

    def __init__(self, source: str, location: Optional[str] = None):
        self.source = source.strip()
        self.location = location
        self._tree = _parse(source, location) if isinstance(source, str) else source
        self._check(self._tree)

    @classmethod
    def from_tree(cls, tree: ast.AST, source: str, location: Optional[str] = None) -> "Expression":
        obj = cls.__new__(cls)
        obj.source, obj.location, obj._tree = source, location, tree
        obj._check(tree)
        return obj

    def __repr__(self):
        return f"Expression({self.source!r})"

    def _fail(self, msg, node):
        raise ParseError(msg, _where(node, self.location))

    def _check(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                self._fail(f"unsupported constant {node.value!r}", node)
        elif isinstance(node, ast.Name):
            if node.id not in _VARS and node.id not in _CONSTS:
                self._fail(f"unknown name {node.id!r}", node)
        elif isinstance(node, ast.UnaryOp):
            if not isinstance(node.op, (ast.UAdd, ast.USub)):
                self._fail("unsupported unary operator", node)
            self._check(node.operand)
        elif isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                if not _is_constant(node.right):
                    self._fail("exponent must be a constant", node)
            elif not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div)):
                self._fail("unsupported operator", node)
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                self._fail("only exp, sin and cos may be called", node)
            if len(node.args) != 1 or node.keywords:
                self._fail(f"{node.func.id} takes one argument", node)
            self._check(node.args[0])
        else:
            self._fail(f"unsupported syntax {type(node).__name__}", node)

    def _eval(self, node, x):
        """Return ``(value, gradient)`` with gradient shape (..., 6)."""
        shape = x.shape[:-1]
        if isinstance(node, ast.Constant):
            return np.full(shape, float(node.value)), np.zeros(shape + (6,))
        if isinstance(node, ast.Name):
            if node.id in _CONSTS:
                return np.full(shape, _CONSTS[node.id]), np.zeros(shape + (6,))
            i = _VARS[node.id]
            g = np.zeros(shape + (6,))
            g[..., i] = 1.0
            return x[..., i].copy(), g
        if isinstance(node, ast.UnaryOp):
            v, g = self._eval(node.operand, x)
            return (-v, -g) if isinstance(node.op, ast.USub) else (v, g)
        if isinstance(node, ast.Call):
            fn, dfn = _FUNCS[node.func.id]
            v, g = self._eval(node.args[0], x)
            return fn(v), dfn(v)[..., None] * g
        lv, lg = self._eval(node.left, x)
        if isinstance(node.op, ast.Pow):
            n = _constant_value(node.right)
            with np.errstate(divide="ignore", invalid="ignore"):
                dv = np.where(lv == 0, 0.0, n * lv ** (n - 1)) if n != 1 else np.ones_like(lv)
            return lv ** n, dv[..., None] * lg
        rv, rg = self._eval(node.right, x)
        if isinstance(node.op, ast.Add):
            return lv + rv, lg + rg
        if isinstance(node.op, ast.Sub):
            return lv - rv, lg - rg
        if isinstance(node.op, ast.Mult):
            return lv * rv, lg * rv[..., None] + lv[..., None] * rg
        return lv / rv, (lg * rv[..., None] - lv[..., None] * rg) / (rv ** 2)[..., None]

    def value(self, x) -> np.ndarray:
        return self._eval(self._tree, np.asarray(x, dtype=float))[0]

    def gradient(self, x) -> np.ndarray:
        return self._eval(self._tree, np.asarray(x, dtype=float))[1]


def _is_constant(node) -> bool:
    if isinstance(node, ast.Constant):
        return isinstance(node.value, (int, float))
    if isinstance(node, ast.Name):
        return node.id in _CONSTS
    if isinstance(node, ast.UnaryOp):
        return _is_constant(node.operand)
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub, ast.Mult, ast.Div)):
        return _is_constant(node.left) and _is_constant(node.right)
    return False


def _constant_value(node) -> float:
    return float(Expression.from_tree(node, ast.unparse(node)).value(np.zeros(6)))


# ---------------------------------------------------------------------------
# one-forms and vector fields


def _signed_terms(node, sign=1.0):
    if isinstance(node, ast.BinOp) and isinstance(node.op, (ast.Add, ast.Sub)):
        yield from _signed_terms(node.left, sign)
        yield from _signed_terms(node.right, sign if isinstance(node.op, ast.Add) else -sign)
    elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        yield from _signed_terms(node.operand, -sign if isinstance(node.op, ast.USub) else sign)
    else:
        yield sign, node


def _factors(node):
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Mult):
        return _factors(node.left) + _factors(node.right)
    return [node]


def parse_one_form(source: str, location: Optional[str] = None) -> DifferentialOneForm:
    """Parse ``sum coefficient * dX`` into a form with analytic exterior derivative."""
    tree = _parse(source, location)
    coeffs = [[] for _ in range(6)]  # lists of (sign, Expression or None)
    for sign, term in _signed_terms(tree):
        factors = _factors(term)
        diffs = [k for k, fct in enumerate(factors) if isinstance(fct, ast.Name) and fct.id in _DIFFS]
        if len(diffs) != 1:
            raise ParseError("each term needs exactly one differential dx1 ... dz2", _where(term, location))
        d = factors.pop(diffs[0])
        if factors:
            sub = factors[0]
            for fct in factors[1:]:
                sub = ast.BinOp(left=sub, op=ast.Mult(), right=fct)
            ast.copy_location(sub, term)
            coeffs[_DIFFS[d.id]].append((sign, Expression.from_tree(sub, ast.unparse(sub), location)))
        else:
            coeffs[_DIFFS[d.id]].append((sign, None))

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        val = np.zeros(x.shape)
        grad = np.zeros(x.shape + (6,))  # grad[..., j, i] = d_i A_j
        for j, terms in enumerate(coeffs):
            for sign, e in terms:
                if e is None:
                    val[..., j] += sign
                else:
                    v, g = e._eval(e._tree, x)
                    val[..., j] += sign * v
                    grad[..., j, :] += sign * g
        return val, grad

    def coeff(x):
        return evaluate(x)[0]

    def dcoeff(x):
        g = evaluate(x)[1]
        dA = np.swapaxes(g, -1, -2)  # dA[..., i, j] = d_i A_j
        return dA - np.swapaxes(dA, -1, -2)

    return DifferentialOneForm(coeff, dcoeff)


def parse_vector_field(source: str, location: Optional[str] = None) -> VectorField:
    """Parse ``[e1, ..., e6]`` into a vector field with analytic jacobian."""
    tree = _parse(source, location)
    if not isinstance(tree, (ast.List, ast.Tuple)) or len(tree.elts) != 6:
        raise ParseError("a vector field is a list of six component expressions", _where(tree, location))
    comps = [Expression.from_tree(e, ast.unparse(e), location) for e in tree.elts]

    def value(x):
        x = np.asarray(x, dtype=float)
        return np.stack([c.value(x) for c in comps], axis=-1)

    def jac(x):
        x = np.asarray(x, dtype=float)
        return np.stack([c.gradient(x) for c in comps], axis=-2)  # jac[..., j, i] = d_i V_j

    return VectorField(value, jac)
