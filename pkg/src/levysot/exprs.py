"""Tiny arithmetic expression grammar used in JSON inputs.

Densities, family coefficients and cost functions arrive as strings.  Only a
small whitelist is evaluated: +, -, *, /, pow, exp, abs, numeric constants and
named variables.  Everything else is rejected at compile time.
"""

from __future__ import annotations

import ast
import math
from typing import Callable, Mapping, Sequence

import numpy as np

_ALLOWED_FUNCS = {
    "exp": np.exp,
    "abs": np.abs,
    "pow": lambda a, b: a ** b,
}

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_ALLOWED_UNARY = (ast.UAdd, ast.USub)


class ExpressionError(ValueError):
    """Raised when an expression string falls outside the grammar."""


def _check(node: ast.AST, variables: Sequence[str]) -> None:
    if isinstance(node, ast.Expression):
        _check(node.body, variables)
    elif isinstance(node, ast.BinOp):
        if not isinstance(node.op, _ALLOWED_BINOPS):
            raise ExpressionError(f"operator {ast.dump(node.op)} not allowed")
        _check(node.left, variables)
        _check(node.right, variables)
    elif isinstance(node, ast.UnaryOp):
        if not isinstance(node.op, _ALLOWED_UNARY):
            raise ExpressionError(f"unary operator {ast.dump(node.op)} not allowed")
        _check(node.operand, variables)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_FUNCS:
            raise ExpressionError("only exp, abs, pow calls are allowed")
        if node.keywords:
            raise ExpressionError("keyword arguments not allowed")
        for arg in node.args:
            _check(arg, variables)
    elif isinstance(node, ast.Name):
        if node.id not in variables:
            raise ExpressionError(
                f"unknown variable {node.id!r}; allowed: {sorted(variables)}"
            )
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ExpressionError(f"constant {node.value!r} is not numeric")
    else:
        raise ExpressionError(f"node {type(node).__name__} not allowed")


def compile_expr(source: str, variables: Sequence[str]) -> Callable[..., float]:
    """Compile ``source`` into a function of the named ``variables``.

    The returned callable accepts the variables as keyword arguments (scalars
    or numpy arrays) and broadcasts like numpy.
    """
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {source!r}: {exc}") from exc
    _check(tree, variables)
    code = compile(tree, "<expr>", "eval")
    env = dict(_ALLOWED_FUNCS)

    def evaluate(**kwargs):
        missing = set(variables) - set(kwargs)
        if missing:
            raise ExpressionError(f"missing variables {sorted(missing)}")
        out = eval(code, {"__builtins__": {}}, {**env, **kwargs})
        if isinstance(out, (int, float)) and not math.isfinite(out):
            raise ExpressionError(f"expression {source!r} evaluated to {out}")
        return out

    evaluate.source = source  # type: ignore[attr-defined]
    return evaluate
