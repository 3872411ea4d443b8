"""Concrete runtime values: rationals, affine forms, constraints, lists.

Affine forms are kept canonical: terms sorted by identifier, zero
coefficients dropped, and a neuron-free form collapses to a plain rational.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Union

from .ast import (
    BOOL, CT, INT, NEURON, POLYEXP, REAL, SYM, SYMEXP, TypeExpr, list_of,
)


class RuntimeErrorCF(Exception):
    """Evaluation failure (division by zero, bad aggregate, ...)."""

    def __init__(self, kind: str, message: str):
        self.kind = kind
        self.span = None
        self.neuron = None
        super().__init__(f"{kind}: {message}")


@dataclass(frozen=True)
class Affine:
    """c0 + sum(ci * key_i) over neuron ids or noise-symbol ids."""
    space: str                       # "neuron" | "sym"
    const: Fraction
    terms: tuple[tuple[str, Fraction], ...]   # sorted by key, no zeros

    @staticmethod
    def make(space: str, const: Fraction, terms: Mapping[str, Fraction]) -> "Affine":
        items = tuple(sorted((k, v) for k, v in terms.items() if v != 0))
        return Affine(space, Fraction(const), items)

    @property
    def term_map(self) -> dict[str, Fraction]:
        return dict(self.terms)

    def is_const(self) -> bool:
        return not self.terms

    def keys(self) -> list[str]:
        return [k for k, _ in self.terms]

    def scale(self, c: Fraction) -> "Affine":
        return Affine.make(self.space, self.const * c,
                           {k: v * c for k, v in self.terms})

    def add(self, other: "Affine") -> "Affine":
        assert self.space == other.space
        acc = dict(self.terms)
        for k, v in other.terms:
            acc[k] = acc.get(k, Fraction(0)) + v
        return Affine.make(self.space, self.const + other.const, acc)

    def restrict(self, keys: Iterable[str]) -> "Affine":
        ks = set(keys)
        return Affine.make(self.space, Fraction(0),
                           {k: v for k, v in self.terms if k in ks})

    def drop(self, keys: Iterable[str]) -> "Affine":
        ks = set(keys)
        return Affine.make(self.space, self.const,
                           {k: v for k, v in self.terms if k not in ks})

    def substitute(self, env: Mapping[str, Fraction]) -> Fraction:
        acc = self.const
        for k, v in self.terms:
            acc += v * env[k]
        return acc

    def __str__(self) -> str:
        if not self.terms:
            return str(self.const)
        parts = [] if self.const == 0 else [str(self.const)]
        for k, v in self.terms:
            parts.append(f"{v}*{k}" if v != 1 else k)
        return " + ".join(parts)


@dataclass(frozen=True)
class CmpCt:
    op: str                         # <= >= == < >
    left: "Value"
    right: "Value"


@dataclass(frozen=True)
class EmbedCt:
    poly: "Value"                   # polyhedral side
    sym: "Value"                    # noise-expression side


@dataclass(frozen=True)
class BoolOpCt:
    op: str                         # and | or
    left: "Value"
    right: "Value"


CtValue = Union[CmpCt, EmbedCt, BoolOpCt, bool]

Value = Union[Fraction, bool, Affine, CmpCt, EmbedCt, BoolOpCt, tuple]
# lists are represented as Python tuples of base values


def poly_var(neuron_id: str) -> Affine:
    return Affine.make("neuron", Fraction(0), {neuron_id: Fraction(1)})


def sym_var(eps_id: str) -> Affine:
    return Affine.make("sym", Fraction(0), {eps_id: Fraction(1)})


def as_affine(v: Value, space: str) -> Affine:
    if isinstance(v, Affine):
        if v.space != space and not v.is_const():
            raise RuntimeErrorCF("TypeMismatch", f"expected a {space} expression")
        return v if v.space == space else Affine.make(space, v.const, {})
    if isinstance(v, Fraction):
        return Affine.make(space, v, {})
    if isinstance(v, bool):
        raise RuntimeErrorCF("TypeMismatch", "expected a numeric value")
    raise RuntimeErrorCF("TypeMismatch", f"expected an affine value, got {type(v).__name__}")


def _spaces(*vals: Value) -> str:
    for v in vals:
        if isinstance(v, Affine) and not v.is_const():
            return v.space
    return "neuron"


def simplify(v: Value) -> Value:
    if isinstance(v, Affine) and v.is_const():
        return v.const
    return v


def value_add(a: Value, b: Value) -> Value:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a + b
    space = _spaces(a, b)
    return simplify(as_affine(a, space).add(as_affine(b, space)))


def value_sub(a: Value, b: Value) -> Value:
    return value_add(a, value_mul(b, Fraction(-1)))


def value_mul(a: Value, b: Value) -> Value:
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return a * b
    if isinstance(a, Fraction):
        a, b = b, a
    if not isinstance(b, Fraction):
        b = as_affine(b, "neuron")
        if not b.is_const():
            raise RuntimeErrorCF("TypeMismatch", "one multiplication side must be constant")
        b = b.const
    return simplify(as_affine(a, _spaces(a)).scale(b))


def value_div(a: Value, b: Value) -> Value:
    if isinstance(b, Affine):
        if not b.is_const():
            raise RuntimeErrorCF("TypeMismatch", "divisor must be constant")
        b = b.const
    if not isinstance(b, Fraction):
        raise RuntimeErrorCF("TypeMismatch", "divisor must be numeric")
    if b == 0:
        raise RuntimeErrorCF("DivisionByZero", "division by zero")
    return value_mul(a, Fraction(1) / b)


def value_neg(a: Value) -> Value:
    return value_mul(a, Fraction(-1))


_CMP = {
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
}


def value_compare(op: str, a: Value, b: Value) -> Value:
    if op == "<>":
        return EmbedCt(a, b)
    if isinstance(a, Fraction) and isinstance(b, Fraction):
        return _CMP[op](a, b)
    if isinstance(a, Affine) and isinstance(b, Affine) and a == b:
        return _CMP[op](Fraction(0), Fraction(0))
    return CmpCt(op, a, b)


def value_boolop(op: str, a: Value, b: Value) -> Value:
    if isinstance(a, bool) and isinstance(b, bool):
        return (a and b) if op == "and" else (a or b)
    # short-circuit against constants keeps stored constraints small
    if isinstance(a, bool):
        if op == "and":
            return b if a else False
        return True if a else b
    if isinstance(b, bool):
        return value_boolop(op, b, a)
    return BoolOpCt(op, a, b)


def require_rational(v: Value, what: str) -> Fraction:
    v = simplify(v)
    if isinstance(v, Fraction):
        return v
    raise RuntimeErrorCF("TypeMismatch", f"{what} must evaluate to a number")


def list_max(items: tuple) -> Value:
    if not items:
        return Fraction(0)
    vals = [require_rational(v, "max element") for v in items]
    return max(vals)


def list_min(items: tuple) -> Value:
    if not items:
        return Fraction(0)
    vals = [require_rational(v, "min element") for v in items]
    return min(vals)


def list_sum(items: tuple) -> Value:
    acc: Value = Fraction(0)
    for v in items:
        acc = value_add(acc, v)
    return acc


def list_avg(items: tuple) -> Value:
    if not items:
        raise RuntimeErrorCF("EmptyAggregate", "avg of an empty list")
    return value_div(list_sum(items), Fraction(len(items)))


def value_dot(a: tuple, b: tuple) -> Value:
    acc: Value = Fraction(0)
    for x, y in zip(a, b):
        acc = value_add(acc, value_mul(x, y))
    return acc


# ---------------------------------------------------------------------------
# Constraint satisfaction at a point assignment (used by sampling checks and
# counterexample replay).

def ct_holds(v: Value, neuron_env: Mapping[str, Fraction],
             tol: Fraction = Fraction(0)) -> bool:
    """Evaluate a constraint value at concrete neuron values.

    Noise symbols are handled per the embedding semantics: some assignment
    in [-1, 1] to each symbol must exist, which for a single affine form is
    an interval check.
    """
    if isinstance(v, bool):
        return v
    if isinstance(v, BoolOpCt):
        a = ct_holds(v.left, neuron_env, tol)
        b = ct_holds(v.right, neuron_env, tol)
        return (a and b) if v.op == "and" else (a or b)
    if isinstance(v, EmbedCt):
        lhs = _eval_side(v.poly, neuron_env)
        rhs = as_affine(v.sym, "sym")
        mid = rhs.const
        rad = sum(abs(c) for _, c in rhs.terms)
        return mid - rad - tol <= lhs <= mid + rad + tol
    if isinstance(v, CmpCt):
        left, right = v.left, v.right
        lsym = isinstance(left, Affine) and left.space == "sym" and not left.is_const()
        rsym = isinstance(right, Affine) and right.space == "sym" and not right.is_const()
        if lsym or rsym:
            # comparison against a noise expression: existential over symbols,
            # so compare against the reachable interval
            lo_r, hi_r = _range_side(right, neuron_env)
            lo_l, hi_l = _range_side(left, neuron_env)
            if v.op in ("<=", "<"):
                return lo_l <= hi_r + tol
            if v.op in (">=", ">"):
                return hi_l >= lo_r - tol
            return not (hi_l < lo_r - tol or lo_l > hi_r + tol)
        a = _eval_side(left, neuron_env)
        b = _eval_side(right, neuron_env)
        if v.op == "<=":
            return a <= b + tol
        if v.op == ">=":
            return a >= b - tol
        if v.op == "<":
            return a < b + tol
        if v.op == ">":
            return a > b - tol
        return abs(a - b) <= tol
    raise RuntimeErrorCF("TypeMismatch", f"not a constraint: {type(v).__name__}")


def _eval_side(v: Value, env: Mapping[str, Fraction]) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, Affine):
        if v.space == "sym" and not v.is_const():
            raise RuntimeErrorCF("TypeMismatch", "noise expression where a point was needed")
        return v.substitute(env)
    raise RuntimeErrorCF("TypeMismatch", "expected a numeric side")


def _range_side(v: Value, env: Mapping[str, Fraction]) -> tuple[Fraction, Fraction]:
    if isinstance(v, Fraction):
        return v, v
    if isinstance(v, Affine):
        if v.space == "sym" and not v.is_const():
            mid = v.const
            rad = sum(abs(c) for _, c in v.terms)
            return mid - rad, mid + rad
        x = v.substitute(env)
        return x, x
    raise RuntimeErrorCF("TypeMismatch", "expected a numeric side")


# ---------------------------------------------------------------------------
# Value typing (used by the type-soundness harness)

def value_type(v: Value) -> TypeExpr:
    if isinstance(v, bool):
        return BOOL
    if isinstance(v, Fraction):
        return INT if v.denominator == 1 else REAL
    if isinstance(v, Affine):
        if v.is_const():
            return INT if v.const.denominator == 1 else REAL
        if v.space == "sym":
            if len(v.terms) == 1 and v.const == 0 and v.terms[0][1] == 1:
                return SYM
            return SYMEXP
        if len(v.terms) == 1 and v.const == 0 and v.terms[0][1] == 1:
            return NEURON
        return POLYEXP
    if isinstance(v, (CmpCt, EmbedCt, BoolOpCt)):
        return CT
    if isinstance(v, tuple):
        from .lattice import join
        t = TypeExpr("Bot")
        for item in v:
            t = join(t, value_type(item))
        return list_of(t) if t.kind != "Bot" else list_of(REAL)
    raise RuntimeErrorCF("TypeMismatch", f"untypable value {type(v).__name__}")


def value_str(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, Affine):
        return str(v)
    if isinstance(v, CmpCt):
        return f"({value_str(v.left)} {v.op} {value_str(v.right)})"
    if isinstance(v, EmbedCt):
        return f"({value_str(v.poly)} <> {value_str(v.sym)})"
    if isinstance(v, BoolOpCt):
        return f"({value_str(v.left)} {v.op} {value_str(v.right)})"
    if isinstance(v, tuple):
        return "[" + ", ".join(value_str(x) for x in v) + "]"
    return str(v)
