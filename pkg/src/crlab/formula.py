"""Quotient-compatible formula mini-language.

Grammar (Python expression syntax)::

    expr := number | "pi" | expr ("+" | "-" | "*") expr | "-" expr
          | expr "/" constant | "sin(" arg ")" | "cos(" arg ")"
    arg  := 2*pi*m*x + 2*pi*n*y + phase      (m, n integers, phase constant)

The coordinates x and y may only appear inside trigonometric arguments, and only
linearly with coefficients in 2*pi*Z.  Every accepted expression is therefore a
t-independent, 1-periodic function of (x, y), which descends to the quotient.
"""

from __future__ import annotations

import ast
import math
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import FormulaError

FieldFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

_TRIG = {"sin": np.sin, "cos": np.cos}
_INT_TOL = 1e-9


def _linear(node: ast.AST) -> tuple[float, float, float]:
    """Return (c0, cx, cy) with node == c0 + cx*x + cy*y, or raise."""
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value), 0.0, 0.0
    if isinstance(node, ast.Name):
        if node.id == "pi":
            return math.pi, 0.0, 0.0
        if node.id == "x":
            return 0.0, 1.0, 0.0
        if node.id == "y":
            return 0.0, 0.0, 1.0
        raise FormulaError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        c = _linear(node.operand)
        return tuple(-v for v in c) if isinstance(node.op, ast.USub) else c
    if isinstance(node, ast.BinOp):
        left, right = _linear(node.left), _linear(node.right)
        if isinstance(node.op, ast.Add):
            return tuple(a + b for a, b in zip(left, right))
        if isinstance(node.op, ast.Sub):
            return tuple(a - b for a, b in zip(left, right))
        if isinstance(node.op, ast.Mult):
            if left[1] == left[2] == 0.0:
                return tuple(left[0] * v for v in right)
            if right[1] == right[2] == 0.0:
                return tuple(right[0] * v for v in left)
            raise FormulaError("trigonometric argument must be linear in x and y")
        if isinstance(node.op, ast.Div):
            if right[1] != 0.0 or right[2] != 0.0 or right[0] == 0.0:
                raise FormulaError("division only by a nonzero constant")
            return tuple(v / right[0] for v in left)
    raise FormulaError(f"unsupported construct in trigonometric argument: {ast.dump(node)}")


def _check_frequency(coef: float, axis: str) -> None:
    m = coef / (2.0 * math.pi)
    if abs(m - round(m)) > _INT_TOL:
        raise FormulaError(
            f"frequency of {axis} is {coef:g} = 2*pi*{m:g}; must be 2*pi times an integer"
        )


def _compile(node: ast.AST) -> FieldFn:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        value = float(node.value)
        return lambda x, y: np.full(np.shape(x), value)
    if isinstance(node, ast.Name):
        if node.id == "pi":
            return lambda x, y: np.full(np.shape(x), math.pi)
        if node.id in ("x", "y"):
            raise FormulaError(
                f"bare coordinate {node.id!r} is not periodic; use it inside sin/cos only"
            )
        raise FormulaError(f"unknown name {node.id!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand)
        if isinstance(node.op, ast.USub):
            return lambda x, y: -inner(x, y)
        return inner
    if isinstance(node, ast.BinOp):
        left, right = _compile(node.left), _compile(node.right)
        if isinstance(node.op, ast.Add):
            return lambda x, y: left(x, y) + right(x, y)
        if isinstance(node.op, ast.Sub):
            return lambda x, y: left(x, y) - right(x, y)
        if isinstance(node.op, ast.Mult):
            return lambda x, y: left(x, y) * right(x, y)
        if isinstance(node.op, ast.Div):
            c0, cx, cy = _constant_or_none(node.right)
            if c0 is None or c0 == 0.0:
                raise FormulaError("division only by a nonzero constant")
            return lambda x, y: left(x, y) / c0
        raise FormulaError(f"unsupported operator {type(node.op).__name__}")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _TRIG:
            raise FormulaError("only sin(...) and cos(...) calls are allowed")
        if len(node.args) != 1 or node.keywords:
            raise FormulaError(f"{node.func.id} takes exactly one argument")
        c0, cx, cy = _linear(node.args[0])
        _check_frequency(cx, "x")
        _check_frequency(cy, "y")
        fn = _TRIG[node.func.id]
        return lambda x, y: fn(c0 + cx * x + cy * y)
    raise FormulaError(f"unsupported construct: {type(node).__name__}")


def _constant_or_none(node: ast.AST):
    try:
        c0, cx, cy = _linear(node)
    except FormulaError:
        return None, None, None
    if cx != 0.0 or cy != 0.0:
        return None, None, None
    return c0, cx, cy


@lru_cache(maxsize=256)
def compile_formula(expr: str) -> FieldFn:
    """Validate ``expr`` and return a vectorized evaluator ``f(x, y)``."""
    if not isinstance(expr, str) or not expr.strip():
        raise FormulaError("formula must be a non-empty string")
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise FormulaError(f"cannot parse formula {expr!r}: {exc.msg}") from None
    return _compile(tree.body)


def validate(expr: str) -> str:
    compile_formula(expr)
    return expr
