"""Pretty-printer. Output re-parses to an equal AST.

The parser normalizes two constant forms (unary minus of a literal, and a
literal divided by a literal), so printed negative and non-decimal rational
constants round-trip to the same normalized node.
"""
from __future__ import annotations

from fractions import Fraction

from .ast import (
    Binary, Call, CompareOp, Concat, Const, Dot, Expr, Flow, FnRef, FuncDef,
    ListLit, ListOp, Map, MapList, MetadataAccess, MinMax2, Program, RetGuard,
    RetNode, RetTuple, ShapeAccess, ShapeDecl, Solver, Statement, SymFresh,
    Ternary, TransformerDef, Traverse, TypeExpr, Unary, Var,
)

# Precedence levels, higher binds tighter.
_TERNARY, _BOOL, _CMP, _ADD, _MUL, _UNARY, _POSTFIX = range(7)

_BINOP_LEVEL = {
    "and": _BOOL, "or": _BOOL,
    "<=": _CMP, ">=": _CMP, "==": _CMP, "<": _CMP, ">": _CMP, "<>": _CMP,
    "+": _ADD, "-": _ADD,
    "*": _MUL, "/": _MUL,
}


def format_fraction(v: Fraction) -> str:
    if v.denominator == 1:
        return str(v.numerator)
    d = v.denominator
    twos = fives = 0
    while d % 2 == 0:
        d //= 2
        twos += 1
    while d % 5 == 0:
        d //= 5
        fives += 1
    if d == 1:
        digits = max(twos, fives)
        scaled = abs(v) * 10 ** digits
        text = str(scaled.numerator).rjust(digits + 1, "0")
        out = text[:-digits] + "." + text[-digits:]
        return ("-" if v < 0 else "") + out
    return f"{v.numerator}/{v.denominator}"


def print_type(t: TypeExpr) -> str:
    if t.is_list:
        return f"{t.elem.kind}[]"
    return t.kind


def print_expr(e: Expr, level: int = _TERNARY) -> str:
    text, mine = _expr(e)
    if mine < level:
        return f"({text})"
    return text


def _expr(e: Expr) -> tuple[str, int]:
    if isinstance(e, Const):
        if e.value is True:
            return "true", _POSTFIX
        if e.value is False:
            return "false", _POSTFIX
        text = format_fraction(e.value)
        if text.startswith("-"):
            return text, _UNARY
        if "/" in text:
            return text, _MUL
        return text, _POSTFIX
    if isinstance(e, Var):
        return e.name, _POSTFIX
    if isinstance(e, SymFresh):
        return "sym", _POSTFIX
    if isinstance(e, Unary):
        op = "not " if e.op == "not" else "-"
        return op + print_expr(e.operand, _UNARY), _UNARY
    if isinstance(e, Binary):
        lvl = _BINOP_LEVEL[e.op]
        sep = f" {e.op} " if e.op in ("and", "or") else f" {e.op} "
        if lvl == _CMP:
            # comparisons do not chain
            left = print_expr(e.left, _ADD)
            right = print_expr(e.right, _ADD)
        else:
            left = print_expr(e.left, lvl)
            right = print_expr(e.right, lvl + 1)
        return left + sep + right, lvl
    if isinstance(e, Ternary):
        cond = print_expr(e.cond, _BOOL)
        then = print_expr(e.then, _TERNARY)
        other = print_expr(e.other, _TERNARY)
        return f"{cond} ? {then} : {other}", _TERNARY
    if isinstance(e, MetadataAccess):
        return print_expr(e.base, _POSTFIX) + f"[{e.name}]", _POSTFIX
    if isinstance(e, ShapeAccess):
        return print_expr(e.base, _POSTFIX) + f"[{e.member}]", _POSTFIX
    if isinstance(e, Traverse):
        head = print_expr(e.subject, _POSTFIX)
        args = f"{e.direction}, {e.priority}, {e.stop}, {e.replace}"
        inv = print_expr(e.invariant)
        return f"{head}.traverse({args}){{{inv}}}", _POSTFIX
    if isinstance(e, Solver):
        return (f"solver({e.op}, {print_expr(e.objective)}, "
                f"{print_expr(e.constraint)})"), _POSTFIX
    if isinstance(e, ListOp):
        return f"{e.op}({print_expr(e.operand)})", _POSTFIX
    if isinstance(e, MinMax2):
        return f"{e.op}({print_expr(e.left)}, {print_expr(e.right)})", _POSTFIX
    if isinstance(e, Dot):
        return print_expr(e.left, _POSTFIX) + f".dot({print_expr(e.right)})", _POSTFIX
    if isinstance(e, Concat):
        return print_expr(e.left, _POSTFIX) + f".concat({print_expr(e.right)})", _POSTFIX
    if isinstance(e, CompareOp):
        return f"compare({print_expr(e.operand)}, {e.fn})", _POSTFIX
    if isinstance(e, Map):
        return print_expr(e.operand, _POSTFIX) + f".map({e.fn})", _POSTFIX
    if isinstance(e, MapList):
        return print_expr(e.operand, _POSTFIX) + f".mapList({e.fn})", _POSTFIX
    if isinstance(e, Call):
        args = ", ".join(print_expr(a) for a in e.args)
        return f"{e.fn}({args})", _POSTFIX
    if isinstance(e, ListLit):
        return "[" + ", ".join(print_expr(x) for x in e.items) + "]", _POSTFIX
    raise TypeError(f"cannot print {type(e).__name__}")


def print_ret_node(node: RetNode) -> str:
    if isinstance(node, RetTuple):
        return "(" + ", ".join(print_expr(e) for e in node.exprs) + ")"
    cond = print_expr(node.cond, _BOOL)
    return f"{cond} ? {print_ret_node(node.then)} : {print_ret_node(node.other)}"


def print_statement(s: Statement) -> str:
    if isinstance(s, FuncDef):
        params = ", ".join(f"{print_type(t)} {n}" for t, n in s.params)
        return f"Func {s.name}({params}) = {print_expr(s.body)};"
    if isinstance(s, TransformerDef):
        lines = [f"Transformer {s.name}{{"]
        for op, node in s.cases.items():
            lines.append(f"    {op} -> {print_ret_node(node)};")
        lines.append("}")
        return "\n".join(lines)
    if isinstance(s, Flow):
        return f"Flow({s.direction}, {s.priority}, {s.stop}, {s.transformer});"
    raise TypeError(f"cannot print {type(s).__name__}")


def print_shape(d: ShapeDecl) -> str:
    members = ", ".join(f"{print_type(t)} {n}" for n, t in d.members)
    return f"Def shape as ({members}){{{print_expr(d.property)}}};"


def pretty_print(p: Program) -> str:
    parts = [print_shape(p.shape)]
    parts.extend(print_statement(s) for s in p.statements)
    return "\n\n".join(parts) + "\n"
