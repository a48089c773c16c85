"""A small, safe arithmetic expression language for initial data and sources.

Expressions may use the variables ``x``, ``y`` and ``t``, the constants
``pi`` and ``e``, the operators ``+ - * / ** %`` and the functions listed in
``FUNCTIONS``.  Nothing else is accepted; the syntax tree is walked directly
and never handed to ``eval``.
"""

from __future__ import annotations

import ast
import operator

import numpy as np

from .errors import PreconditionError

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "tanh": np.tanh,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "arctan": np.arctan,
    "min": np.minimum,
    "max": np.maximum,
}
CONSTANTS = {"pi": np.pi, "e": np.e}
VARIABLES = ("x", "y", "t")

_BINARY = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.Mod: operator.mod,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


class Expression:
    """Parsed expression; call it with numpy arrays for ``x``, ``y``, ``t``."""

    def __init__(self, text: str):
        self.text = text
        try:
            tree = ast.parse(text.strip(), mode="eval")
        except SyntaxError as exc:
            raise PreconditionError(f"cannot parse expression {text!r}: {exc.msg}") from None
        self._body = tree.body
        self.names = set()
        self._validate(self._body)

    def _validate(self, node):
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
                raise PreconditionError(f"only numeric literals are allowed in {self.text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in VARIABLES and node.id not in CONSTANTS:
                raise PreconditionError(f"unknown name {node.id!r} in {self.text!r}")
            self.names.add(node.id)
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
            self._validate(node.left)
            self._validate(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            self._validate(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
                raise PreconditionError(f"unknown function in {self.text!r}")
            if node.keywords or not node.args:
                raise PreconditionError(f"bad call of {node.func.id!r} in {self.text!r}")
            for arg in node.args:
                self._validate(arg)
        else:
            raise PreconditionError(f"unsupported syntax {type(node).__name__} in {self.text!r}")

    def __call__(self, x=0.0, y=0.0, t=0.0):
        env = {"x": x, "y": y, "t": t, **CONSTANTS}
        with np.errstate(all="ignore"):
            return self._eval(self._body, env)

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINARY[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](self._eval(node.operand, env))
        return FUNCTIONS[node.func.id](*(self._eval(a, env) for a in node.args))

    def __repr__(self):
        return f"Expression({self.text!r})"


def evaluate(text: str, x=0.0, y=0.0, t=0.0):
    return Expression(text)(x, y, t)
