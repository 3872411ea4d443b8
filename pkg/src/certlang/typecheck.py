"""Typing judgments for expressions, statements, and whole programs.

Errors carry the violated rule's name so diagnostics render as
`file:line:col: error[RULE]: message`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from .ast import (
    BOOL, CT, INT, NEURON, POLYEXP, REAL, SYM, SYMEXP, TOP, Binary, Call,
    CompareOp, Concat, Const, Dot, Expr, Flow, FnRef, FuncDef, FuncType,
    ListLit, ListOp, Map, MapList, MetadataAccess, MinMax2, Program, RetGuard,
    RetNode, RetTuple, ShapeAccess, ShapeDecl, Solver, Span, Statement,
    SymFresh, Ternary, TransformerDef, Traverse, TypeExpr, Unary, Var, list_of,
    METADATA_TYPES, ret_leaves,
)
from .lattice import is_proper, is_subtype, join


class TypeError_(Exception):
    def __init__(self, rule: str, span: Span, message: str):
        self.rule = rule
        self.span = span
        self.message = message
        super().__init__(f"{span.line}:{span.col}: error[{rule}]: {message}")

    def render(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.span.line}:{self.span.col}: error[{self.rule}]: {self.message}"


@dataclass(frozen=True)
class TransformerType:
    member_types: tuple[TypeExpr, ...]
    ops: tuple[str, ...]


Binding = Union[TypeExpr, FuncType, TransformerType]

# prev binding per DNN operation: how many predecessors the transformer sees
SINGLE_PREV_OPS = {"ReLU", "Sigmoid", "Tanh"}
PAIR_PREV_OPS = {"Max", "Min", "Add", "Mult"}
LIST_PREV_OPS = {"Affine", "MaxPool", "DotProduct"}


def prev_arity(op: str) -> str:
    """'single' | 'pair' | 'list' for a (possibly rev_) DNN operation."""
    base = op[4:] if op.startswith("rev_") else op
    if base in SINGLE_PREV_OPS:
        return "single"
    if base in PAIR_PREV_OPS:
        return "pair"
    if base in LIST_PREV_OPS:
        return "list"
    return "list"


@dataclass
class TypingContext:
    gamma: dict[str, Binding] = field(default_factory=dict)
    tau_s: dict[str, TypeExpr] = field(default_factory=dict)

    def child(self, **binds: Binding) -> "TypingContext":
        g = dict(self.gamma)
        g.update(binds)
        return TypingContext(g, self.tau_s)


def _leq_real(t: TypeExpr) -> bool:
    return is_subtype(t, REAL)


def _scalar_kindof(t: TypeExpr) -> Optional[TypeExpr]:
    """The affine-combination result type for an element of type t."""
    if t.is_list:
        return None
    if is_subtype(t, REAL):
        return t
    if is_subtype(t, POLYEXP):
        return POLYEXP
    if is_subtype(t, SYMEXP):
        return SYMEXP
    return None


def _fn_type(ctx: TypingContext, ref: FnRef) -> FuncType:
    if ref.kind == "const":
        return FuncType((NEURON,), BOOL)
    b = ctx.gamma.get(ref.name)
    if not isinstance(b, FuncType):
        raise TypeError_("T-function-call", ref.span, f"{ref.name!r} is not a function")
    if ref.kind == "neg":
        if not is_subtype(b.ret, REAL):
            raise TypeError_("T-flow", ref.span,
                             f"negated function {ref.name!r} must return a numeric type, "
                             f"found {b.ret}")
    return b


def type_of_expr(ctx: TypingContext, e: Expr) -> TypeExpr:
    if isinstance(e, Const):
        if isinstance(e.value, bool):
            return BOOL
        return INT if e.value.denominator == 1 else REAL
    if isinstance(e, Var):
        b = ctx.gamma.get(e.name)
        if b is None:
            raise TypeError_("T-var", e.span, f"unbound variable {e.name!r}")
        if not isinstance(b, TypeExpr):
            raise TypeError_("T-var", e.span, f"{e.name!r} names a function, not a value")
        return b
    if isinstance(e, SymFresh):
        return SYM
    if isinstance(e, Unary):
        t = type_of_expr(ctx, e.operand)
        if e.op == "not":
            if t != BOOL:
                raise TypeError_("T-unary", e.span, f"'not' needs Bool, found {t}")
            return BOOL
        # unary minus: negation of a numeric, polyhedral, or noise expression
        r = _scalar_kindof(t)
        if r is None:
            raise TypeError_("T-unary", e.span, f"cannot negate {t}")
        return r if not is_subtype(t, REAL) else t
    if isinstance(e, Binary):
        return _type_binary(ctx, e)
    if isinstance(e, Ternary):
        tc = type_of_expr(ctx, e.cond)
        if tc != BOOL:
            raise TypeError_("T-ternary", e.cond.span,
                             f"condition must be Bool, found {tc}")
        t1 = type_of_expr(ctx, e.then)
        t2 = type_of_expr(ctx, e.other)
        t = join(t1, t2)
        if not is_proper(t):
            raise TypeError_("T-ternary", e.span,
                             f"branches have incompatible types {t1} and {t2}")
        return t
    if isinstance(e, MetadataAccess):
        tb = type_of_expr(ctx, e.base)
        mt = METADATA_TYPES[e.name]
        if tb == NEURON:
            return mt
        if tb == list_of(NEURON):
            if mt.is_list:
                raise TypeError_("T-metadata-b2", e.span,
                                 f"metadata {e.name!r} over a neuron list would nest lists")
            return list_of(mt)
        raise TypeError_("T-metadata-b", e.span,
                         f"metadata access needs a Neuron, found {tb}")
    if isinstance(e, ShapeAccess):
        tb = type_of_expr(ctx, e.base)
        mt = ctx.tau_s.get(e.member)
        if mt is None:
            raise TypeError_("T-shape", e.span, f"unknown shape member {e.member!r}")
        if tb == NEURON:
            return mt
        if tb == list_of(NEURON):
            if mt.is_list:
                raise TypeError_("T-metadata-shape2", e.span,
                                 f"member {e.member!r} over a neuron list would nest lists")
            return list_of(mt)
        raise TypeError_("T-shape", e.span, f"shape access needs a Neuron, found {tb}")
    if isinstance(e, Traverse):
        t = type_of_expr(ctx, e.subject)
        if not is_subtype(t, POLYEXP):
            raise TypeError_("T-traverse", e.subject.span,
                             f"traverse needs a polyhedral expression, found {t}")
        fp = _fn_type(ctx, e.priority)
        if e.priority.kind == "const" or len(fp.args) != 1 or fp.args[0] != NEURON \
                or not is_subtype(fp.ret, REAL):
            raise TypeError_("T-traverse", e.priority.span,
                             "priority must be a function Neuron -> (<= Real)")
        fs = _fn_type(ctx, e.stop)
        if len(fs.args) != 1 or fs.args[0] != NEURON or fs.ret != BOOL:
            raise TypeError_("T-traverse", e.stop.span,
                             "stopping condition must be a function Neuron -> Bool")
        fr = _fn_type(ctx, e.replace)
        if e.replace.kind != "name" or len(fr.args) != 2 or fr.args[0] != NEURON \
                or not is_subtype(fr.args[1], REAL) or not is_subtype(fr.ret, POLYEXP):
            raise TypeError_("T-traverse", e.replace.span,
                             "replacement must be a function Neuron x Real -> (<= PolyExp)")
        ti = type_of_expr(ctx, e.invariant)
        if not is_subtype(ti, CT):
            raise TypeError_("T-traverse", e.invariant.span,
                             f"invariant must be a constraint, found {ti}")
        return POLYEXP
    if isinstance(e, Solver):
        t1 = type_of_expr(ctx, e.objective)
        if not is_subtype(t1, POLYEXP):
            raise TypeError_("T-solver", e.objective.span,
                             f"objective must be polyhedral, found {t1}")
        t2 = type_of_expr(ctx, e.constraint)
        ok = is_subtype(t2, CT) or (t2.is_list and is_subtype(t2.elem, CT))
        if not ok:
            raise TypeError_("T-solver", e.constraint.span,
                             f"constraints must be Ct or a Ct list, found {t2}")
        return REAL
    if isinstance(e, ListOp):
        t = type_of_expr(ctx, e.operand)
        if e.op == "len":
            if not t.is_list:
                raise TypeError_("T-len", e.span, f"len needs a list, found {t}")
            return INT
        if e.op in ("max", "min"):
            if not t.is_list or not is_subtype(t.elem, REAL):
                raise TypeError_("T-min-max", e.span,
                                 f"{e.op} needs a numeric list, found {t}")
            return t.elem
        # sum / avg; scalar operands pass through as an affine value
        elem = t.elem if t.is_list else t
        r = _scalar_kindof(elem)
        if r is None:
            raise TypeError_("T-sum-avg", e.span, f"cannot aggregate {t}")
        if e.op == "avg" and is_subtype(r, REAL):
            return REAL
        return r
    if isinstance(e, MinMax2):
        t1 = type_of_expr(ctx, e.left)
        t2 = type_of_expr(ctx, e.right)
        t = join(t1, t2)
        if not (is_subtype(t, POLYEXP) or is_subtype(t, SYMEXP)):
            raise TypeError_("T-min-max", e.span,
                             f"{e.op} needs numeric operands, found {t1} and {t2}")
        return t
    if isinstance(e, Dot):
        t1 = type_of_expr(ctx, e.left)
        t2 = type_of_expr(ctx, e.right)
        if not (t1.is_list and t2.is_list):
            raise TypeError_("T-dot", e.span, f"dot needs two lists, found {t1} and {t2}")
        a, b = t1.elem, t2.elem
        if not (is_subtype(a, REAL) or is_subtype(b, REAL)):
            raise TypeError_("T-dot", e.span,
                             "dot needs one numeric side to keep terms linear")
        r = _scalar_kindof(join(a, b))
        if r is None:
            raise TypeError_("T-dot", e.span, f"cannot combine {a} and {b}")
        return r
    if isinstance(e, Concat):
        t1 = type_of_expr(ctx, e.left)
        t2 = type_of_expr(ctx, e.right)
        if not (t1.is_list and t2.is_list):
            raise TypeError_("T-concat", e.span, f"concat needs two lists")
        t = join(t1.elem, t2.elem)
        if not is_proper(t):
            raise TypeError_("T-concat", e.span,
                             f"incompatible element types {t1.elem} and {t2.elem}")
        return list_of(t)
    if isinstance(e, CompareOp):
        t = type_of_expr(ctx, e.operand)
        if not t.is_list:
            raise TypeError_("T-compare", e.span, f"compare needs a list, found {t}")
        f = _fn_type(ctx, e.fn)
        if len(f.args) != 2 or not is_subtype(t.elem, f.args[0]) \
                or not is_subtype(t.elem, f.args[1]) or f.ret != BOOL:
            raise TypeError_("T-compare", e.fn.span,
                             f"compare needs a function {t.elem} x {t.elem} -> Bool")
        return t
    if isinstance(e, Map):
        t = type_of_expr(ctx, e.operand)
        f = _fn_type(ctx, e.fn)
        # the result is the function's aggregate: summing Real contributions
        # stays Real, anything mentioning neurons or noise symbols widens
        if t == SYMEXP or t == SYM or (len(f.args) == 2 and f.args[0] == SYM):
            if not is_subtype(t, SYMEXP):
                raise TypeError_("T-map-sym", e.span,
                                 f"map with a Sym function needs a SymExp, found {t}")
            if len(f.args) != 2 or f.args[0] != SYM or not is_subtype(REAL, f.args[1]) \
                    or not is_subtype(f.ret, SYMEXP):
                raise TypeError_("T-map-sym", e.fn.span,
                                 "map over a noise expression needs Sym x Real -> (<= SymExp)")
            return REAL if is_subtype(f.ret, REAL) else SYMEXP
        if not is_subtype(t, POLYEXP):
            raise TypeError_("T-map-poly", e.span,
                             f"map needs a polyhedral expression, found {t}")
        if len(f.args) != 2 or f.args[0] != NEURON or not is_subtype(REAL, f.args[1]) \
                or not is_subtype(f.ret, POLYEXP):
            raise TypeError_("T-map-poly", e.fn.span,
                             "map needs a function Neuron x Real -> (<= PolyExp)")
        return REAL if is_subtype(f.ret, REAL) else POLYEXP
    if isinstance(e, MapList):
        t = type_of_expr(ctx, e.operand)
        if not t.is_list:
            raise TypeError_("T-map-list", e.span, f"mapList needs a list, found {t}")
        f = _fn_type(ctx, e.fn)
        if len(f.args) != 1 or not is_subtype(t.elem, f.args[0]):
            raise TypeError_("T-map-list", e.fn.span,
                             f"mapList needs a unary function over {t.elem}")
        if f.ret.is_list:
            raise TypeError_("T-map-list", e.span, "mapList result would nest lists")
        return list_of(f.ret)
    if isinstance(e, Call):
        b = ctx.gamma.get(e.fn)
        if not isinstance(b, FuncType):
            raise TypeError_("T-function-call", e.span, f"unknown function {e.fn!r}")
        if len(e.args) != len(b.args):
            raise TypeError_("T-function-call", e.span,
                             f"{e.fn} expects {len(b.args)} arguments, got {len(e.args)}")
        for a, want in zip(e.args, b.args):
            got = type_of_expr(ctx, a)
            if not is_subtype(got, want):
                raise TypeError_("T-function-call", a.span,
                                 f"argument of {e.fn} has type {got}, expected <= {want}")
        return b.ret
    if isinstance(e, ListLit):
        if not e.items:
            raise TypeError_("T-list", e.span, "empty list literals have no type")
        t = type_of_expr(ctx, e.items[0])
        for item in e.items[1:]:
            t = join(t, type_of_expr(ctx, item))
        if not is_proper(t) or t.is_list:
            raise TypeError_("T-list", e.span, f"bad list element type {t}")
        return list_of(t)
    raise TypeError_("T-internal", getattr(e, "span", Span(0, 0, 0, 0)),
                     f"unhandled expression {type(e).__name__}")


def _type_binary(ctx: TypingContext, e: Binary) -> TypeExpr:
    t1 = type_of_expr(ctx, e.left)
    t2 = type_of_expr(ctx, e.right)
    op = e.op
    if op in ("and", "or"):
        if t1 not in (BOOL, CT) or t2 not in (BOOL, CT):
            raise TypeError_("T-binary-bool", e.span,
                             f"'{op}' needs Bool or Ct operands, found {t1} and {t2}")
        return join(t1, t2)
    if op == "<>":
        if not is_subtype(t1, POLYEXP):
            raise TypeError_("T-comparison-3", e.left.span,
                             f"left of <> must be polyhedral, found {t1}")
        if not is_subtype(t2, SYMEXP):
            raise TypeError_("T-comparison-3", e.right.span,
                             f"right of <> must be a noise expression, found {t2}")
        return CT
    if op in ("<=", ">=", "==", "<", ">"):
        if is_subtype(t1, REAL) and is_subtype(t2, REAL):
            return BOOL
        t = join(t1, t2)
        if (is_subtype(t, POLYEXP) or is_subtype(t, SYMEXP)) and is_proper(t):
            return CT
        raise TypeError_("T-comparison-2", e.span,
                         f"cannot compare {t1} with {t2}")
    if op in ("+", "-"):
        t = join(t1, t2)
        r = _scalar_kindof(t)
        if r is None:
            raise TypeError_("T-binary-arith-1", e.span,
                             f"cannot apply '{op}' to {t1} and {t2}")
        return r
    if op == "*":
        if is_subtype(t1, REAL) and is_subtype(t2, REAL):
            return join(t1, t2)
        if is_subtype(t1, REAL) or is_subtype(t2, REAL):
            r = _scalar_kindof(join(t1, t2))
            if r is not None:
                return r
        raise TypeError_("T-binary-mult", e.span,
                         f"'*' needs one numeric side, found {t1} and {t2}")
    if op == "/":
        if not is_subtype(t2, REAL):
            raise TypeError_("T-binary-arith-2", e.right.span,
                             f"divisor must be numeric, found {t2}")
        if is_subtype(t1, REAL):
            return REAL
        r = _scalar_kindof(t1)
        if r is None:
            raise TypeError_("T-binary-arith-2", e.span, f"cannot divide {t1}")
        return r
    raise TypeError_("T-internal", e.span, f"unknown operator {op!r}")


def _bind_case(ctx: TypingContext, op: str) -> TypingContext:
    arity = prev_arity(op)
    if arity == "single":
        return ctx.child(curr=NEURON, prev=NEURON)
    if arity == "pair":
        return ctx.child(curr=NEURON, prev0=NEURON, prev1=NEURON)
    return ctx.child(curr=NEURON, prev=list_of(NEURON))


def _type_ret(ctx: TypingContext, node: RetNode, members: list[tuple[str, TypeExpr]],
              case: str) -> tuple[TypeExpr, ...]:
    if isinstance(node, RetTuple):
        if len(node.exprs) != len(members):
            raise TypeError_("T-transformer-ret-1", node.span,
                             f"case {case}: tuple has {len(node.exprs)} members, "
                             f"shape has {len(members)}")
        types = []
        for (name, want), expr in zip(members, node.exprs):
            got = type_of_expr(ctx, expr)
            if not is_subtype(got, want):
                raise TypeError_("T-transformer-ret-1", expr.span,
                                 f"case {case}: member {name!r} has type {got}, "
                                 f"expected <= {want}")
            types.append(got)
        return tuple(types)
    tc = type_of_expr(ctx, node.cond)
    if tc != BOOL:
        raise TypeError_("T-transformer-ret-2", node.cond.span,
                         f"case {case}: guard must be Bool, found {tc}")
    a = _type_ret(ctx, node.then, members, case)
    b = _type_ret(ctx, node.other, members, case)
    out = tuple(join(x, y) for x, y in zip(a, b))
    for (name, _), t in zip(members, out):
        if not is_proper(t):
            raise TypeError_("T-transformer-ret-2", node.span,
                             f"case {case}: member {name!r} joins to {t}")
    return out


def type_of_statement(ctx: TypingContext, s: Statement) -> TypingContext:
    if isinstance(s, FuncDef):
        if s.name in ctx.gamma:
            raise TypeError_("T-func", s.span, f"{s.name!r} is already defined")
        inner = ctx.child(**{n: t for t, n in s.params})
        t = type_of_expr(inner, s.body)
        if not is_proper(t):
            raise TypeError_("T-func", s.span, f"function body has type {t}")
        ft = FuncType(tuple(t for t, _ in s.params), t)
        return ctx.child(**{s.name: ft})
    if isinstance(s, TransformerDef):
        if s.name in ctx.gamma:
            raise TypeError_("T-transformer", s.span, f"{s.name!r} is already defined")
        members = [(n, ctx.tau_s[n]) for n in ctx.tau_s]
        per_member: list[TypeExpr] = [TypeExpr("Bot")] * len(members)
        for op, node in s.cases.items():
            inner = _bind_case(ctx, op)
            types = _type_ret(inner, node, members, op)
            per_member = [join(a, b) for a, b in zip(per_member, types)]
        for (name, want), got in zip(members, per_member):
            if not is_subtype(got, want):
                raise TypeError_("T-transformer", s.span,
                                 f"member {name!r} joins to {got}, expected <= {want}")
        tt = TransformerType(tuple(per_member), tuple(s.cases))
        return ctx.child(**{s.name: tt})
    if isinstance(s, Flow):
        fp = _fn_type(ctx, s.priority)
        if s.priority.kind == "const" or len(fp.args) != 1 or fp.args[0] != NEURON \
                or not is_subtype(fp.ret, REAL):
            raise TypeError_("T-flow", s.priority.span,
                             "flow priority must be a function Neuron -> (<= Real)")
        fs = _fn_type(ctx, s.stop)
        if len(fs.args) != 1 or fs.args[0] != NEURON or fs.ret != BOOL:
            raise TypeError_("T-flow", s.stop.span,
                             "flow stopping condition must be a function Neuron -> Bool")
        if not isinstance(ctx.gamma.get(s.transformer), TransformerType):
            raise TypeError_("T-flow", s.span, f"unknown transformer {s.transformer!r}")
        return ctx
    raise TypeError_("T-internal", s.span, f"unhandled statement {type(s).__name__}")


def check_shape(d: ShapeDecl) -> dict[str, TypeExpr]:
    tau: dict[str, TypeExpr] = {}
    for name, t in d.members:
        if not is_proper(t):
            raise TypeError_("T-shape", d.span, f"member {name!r} has type {t}")
        tau[name] = t
    prop_ctx = TypingContext({"curr": NEURON}, tau)
    tp = type_of_expr(prop_ctx, d.property)
    ok = is_subtype(tp, CT) or (tp.is_list and is_subtype(tp.elem, CT))
    if not ok:
        raise TypeError_("T-shape", d.property.span,
                         f"shape property must be a constraint, found {tp}")
    return tau


BUILTIN_GAMMA = {
    "Sigmoid": FuncType((REAL,), REAL),
    "Tanh": FuncType((REAL,), REAL),
}


def check_program(p: Program) -> TypingContext:
    tau = check_shape(p.shape)
    ctx = TypingContext(dict(BUILTIN_GAMMA), tau)
    for s in p.statements:
        ctx = type_of_statement(ctx, s)
    return ctx
