"""Big-step evaluator and the constraint-flow driver.

Evaluation is deterministic: the noise-symbol counter is the only mutable
state and it is part of the environment. Priority ties are processed as a
set, members visited in ascending id order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .ast import (
    Binary, Call, CompareOp, Concat, Const, Dot, Expr, Flow, FnRef, FuncDef,
    ListLit, ListOp, Map, MapList, MetadataAccess, MinMax2, Program, RetGuard,
    RetNode, RetTuple, ShapeAccess, ShapeDecl, Solver, SymFresh, Ternary,
    TransformerDef, Traverse, Unary, Var,
)
from .dnn import ConcreteDNN, NeuronRecord
from .typecheck import prev_arity
from .values import (
    Affine, BoolOpCt, CmpCt, EmbedCt, RuntimeErrorCF, Value, as_affine,
    ct_holds, list_avg, list_max, list_min, list_sum, poly_var, require_rational,
    simplify, sym_var, value_add, value_boolop, value_compare, value_div,
    value_dot, value_mul, value_neg, value_sub, value_type,
)
from .lattice import is_subtype

BUILTIN_FNS = ("Sigmoid", "Tanh")


class MissingCase(RuntimeErrorCF):
    def __init__(self, op: str):
        super().__init__("MissingCase", f"transformer has no case for operation {op!r}")
        self.op = op


class RankingViolation(AssertionError):
    pass


@dataclass
class Env:
    functions: dict[str, FuncDef] = field(default_factory=dict)
    transformers: dict[str, TransformerDef] = field(default_factory=dict)
    rho: dict[str, Value] = field(default_factory=dict)
    shape: Optional[ShapeDecl] = None
    eps_counter: int = 0
    check_value_types: bool = False
    solver_config: Optional[object] = None

    def fresh_eps(self) -> str:
        self.eps_counter += 1
        return f"eps{self.eps_counter}"

    def scoped(self, bindings: dict[str, Value]) -> "Env":
        child = Env(self.functions, self.transformers, bindings, self.shape,
                    self.eps_counter, self.check_value_types, self.solver_config)
        return child

    def adopt_counter(self, child: "Env") -> None:
        self.eps_counter = child.eps_counter


def neuron_id_of(v: Value) -> str:
    if isinstance(v, Affine) and v.space == "neuron" and v.const == 0 \
            and len(v.terms) == 1 and v.terms[0][1] == 1:
        return v.terms[0][0]
    raise RuntimeErrorCF("TypeMismatch", "expected a single neuron")


def _call_fn(env: Env, net: ConcreteDNN, name: str, args: list[Value]) -> Value:
    if name in BUILTIN_FNS:
        raise RuntimeErrorCF(
            "UnsupportedTranscendental",
            f"{name} has no exact rational value; such certifiers only parse and type-check")
    fn = env.functions[name]
    bindings = {pname: v for (_, pname), v in zip(fn.params, args)}
    child = env.scoped(bindings)
    out = eval_expr(child, net, fn.body)
    env.adopt_counter(child)
    return out


def _call_ref(env: Env, net: ConcreteDNN, ref: FnRef, args: list[Value]) -> Value:
    if ref.kind == "const":
        return ref.value
    out = _call_fn(env, net, ref.name, args)
    if ref.kind == "neg":
        return value_neg(out)
    return out


def eval_expr(env: Env, net: ConcreteDNN, e: Expr) -> Value:
    try:
        v = _eval(env, net, e)
    except RuntimeErrorCF as exc:
        if not getattr(exc, "span", None):
            exc.span = getattr(e, "span", None)
            exc.args = (f"{exc.args[0]} (at {exc.span.line}:{exc.span.col})"
                        if exc.span else exc.args[0],)
        raise
    return simplify(v)


def _eval(env: Env, net: ConcreteDNN, e: Expr) -> Value:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return env.rho[e.name]
    if isinstance(e, SymFresh):
        return sym_var(env.fresh_eps())
    if isinstance(e, Unary):
        v = eval_expr(env, net, e.operand)
        if e.op == "not":
            if not isinstance(v, bool):
                raise RuntimeErrorCF("TypeMismatch", "'not' needs a boolean")
            return not v
        return value_neg(v)
    if isinstance(e, Binary):
        a = eval_expr(env, net, e.left)
        b = eval_expr(env, net, e.right)
        if e.op == "+":
            return value_add(a, b)
        if e.op == "-":
            return value_sub(a, b)
        if e.op == "*":
            return value_mul(a, b)
        if e.op == "/":
            return value_div(a, b)
        if e.op in ("and", "or"):
            return value_boolop(e.op, a, b)
        return value_compare(e.op, a, b)
    if isinstance(e, Ternary):
        c = eval_expr(env, net, e.cond)
        if not isinstance(c, bool):
            raise RuntimeErrorCF("NonBooleanGuard", "ternary guard did not evaluate to a boolean")
        return eval_expr(env, net, e.then if c else e.other)
    if isinstance(e, MetadataAccess):
        base = eval_expr(env, net, e.base)
        if isinstance(base, tuple):
            return tuple(_metadata(env, net, neuron_id_of(n), e.name) for n in base)
        return _metadata(env, net, neuron_id_of(base), e.name)
    if isinstance(e, ShapeAccess):
        base = eval_expr(env, net, e.base)
        if isinstance(base, tuple):
            return tuple(_shape_member(net, neuron_id_of(n), e.member) for n in base)
        return _shape_member(net, neuron_id_of(base), e.member)
    if isinstance(e, Traverse):
        return eval_traverse(env, net, e)
    if isinstance(e, Solver):
        return eval_solver(env, net, e)
    if isinstance(e, ListOp):
        v = eval_expr(env, net, e.operand)
        if e.op == "len":
            if not isinstance(v, tuple):
                raise RuntimeErrorCF("TypeMismatch", "len needs a list")
            return Fraction(len(v))
        if not isinstance(v, tuple):
            if e.op in ("sum", "avg"):
                return v  # scalar aggregate passes through
            raise RuntimeErrorCF("TypeMismatch", f"{e.op} needs a list")
        if e.op == "max":
            return list_max(v)
        if e.op == "min":
            return list_min(v)
        if e.op == "sum":
            return list_sum(v)
        return list_avg(v)
    if isinstance(e, MinMax2):
        a = require_rational(eval_expr(env, net, e.left), f"{e.op} operand")
        b = require_rational(eval_expr(env, net, e.right), f"{e.op} operand")
        return max(a, b) if e.op == "max" else min(a, b)
    if isinstance(e, Dot):
        a = eval_expr(env, net, e.left)
        b = eval_expr(env, net, e.right)
        if not isinstance(a, tuple) or not isinstance(b, tuple):
            raise RuntimeErrorCF("TypeMismatch", "dot needs two lists")
        return value_dot(a, b)
    if isinstance(e, Concat):
        a = eval_expr(env, net, e.left)
        b = eval_expr(env, net, e.right)
        if not isinstance(a, tuple) or not isinstance(b, tuple):
            raise RuntimeErrorCF("TypeMismatch", "concat needs two lists")
        return a + b
    if isinstance(e, CompareOp):
        items = eval_expr(env, net, e.operand)
        if not isinstance(items, tuple):
            raise RuntimeErrorCF("TypeMismatch", "compare needs a list")
        return _compare_list(env, net, items, e.fn)
    if isinstance(e, Map):
        return _map(env, net, e)
    if isinstance(e, MapList):
        items = eval_expr(env, net, e.operand)
        if not isinstance(items, tuple):
            raise RuntimeErrorCF("TypeMismatch", "mapList needs a list")
        return tuple(_call_ref(env, net, e.fn, [item]) for item in items)
    if isinstance(e, Call):
        args = [eval_expr(env, net, a) for a in e.args]
        return _call_fn(env, net, e.fn, args)
    if isinstance(e, ListLit):
        return tuple(eval_expr(env, net, item) for item in e.items)
    raise RuntimeErrorCF("Internal", f"unhandled expression {type(e).__name__}")


def _metadata(env: Env, net: ConcreteDNN, nid: str, name: str) -> Value:
    rec = net.neurons[nid]
    if name == "weight":
        return tuple(rec.weight)
    if name == "bias":
        return rec.bias
    if name == "layer":
        return Fraction(rec.layer)
    if name == "equations":
        return _equations_value(env, net, nid)
    raise RuntimeErrorCF("Internal", f"unknown metadata {name!r}")


def _shape_member(net: ConcreteDNN, nid: str, member: str) -> Value:
    rec = net.neurons[nid]
    if member not in rec.shape:
        raise RuntimeErrorCF("MissingShape",
                             f"neuron {nid!r} has no value for member {member!r} yet")
    return rec.shape[member]


def _equations_value(env: Env, net: ConcreteDNN, nid: str) -> tuple:
    """The next layer's affine relations over nid's layer, each conjoined with
    the interval-like consequences of the declared property for every other
    referenced neuron. Interval-like means: property conjuncts whose
    instantiation mentions no unknown polyhedral data, so solver queries over
    the result stay bounded."""
    out = []
    for sid, expr in net.equation_pairs(nid):
        ct: Value = CmpCt("==", expr, poly_var(sid))
        refs = sorted((set(expr.keys()) | {sid}) - {nid})
        for ref in refs:
            for fact in _point_facts(env, net, ref):
                ct = value_boolop("and", ct, fact)
        out.append(ct)
    return tuple(out)


def _point_facts(env: Env, net: ConcreteDNN, nid: str) -> list[Value]:
    shape = env.shape
    if shape is None:
        return []
    facts: list[Value] = []
    rec = net.neurons[nid]
    if any(m not in rec.shape for m, _ in shape.members):
        return []
    child = env.scoped({"curr": poly_var(nid)})
    for conjunct in property_conjuncts(shape):
        try:
            v = eval_expr(child, net, conjunct)
        except RuntimeErrorCF:
            continue
        if _is_point_fact(v, nid):
            facts.append(v)
    env.adopt_counter(child)
    return facts


def _is_point_fact(v: Value, nid: str) -> bool:
    if isinstance(v, bool):
        return False
    if isinstance(v, CmpCt):
        return _side_ok(v.left, nid) and _side_ok(v.right, nid)
    if isinstance(v, BoolOpCt):
        return _is_point_fact(v.left, nid) and _is_point_fact(v.right, nid)
    return False


def _side_ok(v: Value, nid: str) -> bool:
    if isinstance(v, Fraction):
        return True
    if isinstance(v, Affine):
        return v.space == "neuron" and v.keys() in ([], [nid])
    return False


def property_conjuncts(shape: ShapeDecl) -> list[Expr]:
    prop = shape.property
    if isinstance(prop, ListLit):
        return list(prop.items)
    out: list[Expr] = []

    def walk(e: Expr) -> None:
        if isinstance(e, Binary) and e.op == "and":
            walk(e.left)
            walk(e.right)
        else:
            out.append(e)

    walk(prop)
    return out


def _map(env: Env, net: ConcreteDNN, e: Map) -> Value:
    v = eval_expr(env, net, e.operand)
    if isinstance(v, (Fraction, bool)):
        return v
    if not isinstance(v, Affine):
        raise RuntimeErrorCF("TypeMismatch", "map needs an affine expression")
    acc: Value = v.const
    for key, coeff in v.terms:
        unit = poly_var(key) if v.space == "neuron" else sym_var(key)
        out = _call_ref(env, net, e.fn, [unit, coeff])
        acc = value_add(acc, out)
    return acc


def _compare_list(env: Env, net: ConcreteDNN, items: tuple, fn: FnRef) -> tuple:
    if len(items) <= 1:
        return items
    keep = []
    for i, a in enumerate(items):
        wins = True
        for j, b in enumerate(items):
            if i == j:
                continue
            res = _call_ref(env, net, fn, [a, b])
            if not isinstance(res, bool):
                raise RuntimeErrorCF("TypeMismatch", "compare function must return a boolean")
            if not res:
                wins = False
                break
        if wins:
            keep.append(a)
    return tuple(keep)


# ---------------------------------------------------------------------------
# traverse

def _toporanks(net: ConcreteDNN, direction: str) -> dict[str, int]:
    order = net.topological_order()
    n = len(order)
    if direction == "backward":
        return {nid: i for i, nid in enumerate(order)}
    return {nid: n - 1 - i for i, nid in enumerate(order)}


def _ranking(ids, ranks: dict[str, int]) -> int:
    return sum(1 << ranks[nid] for nid in ids)


def _excluded(net: ConcreteDNN, direction: str, nid: str) -> bool:
    if direction == "backward":
        return net.neurons[nid].is_input
    return not net.succs[nid]


def _filter_active(env: Env, net: ConcreteDNN, ids, stop: FnRef, direction: str) -> set[str]:
    out = set()
    for nid in ids:
        if _excluded(net, direction, nid):
            continue
        res = _call_ref(env, net, stop, [poly_var(nid)])
        if not isinstance(res, bool):
            raise RuntimeErrorCF("TypeMismatch", "stopping condition must return a boolean")
        if not res:
            out.add(nid)
    return out


def _max_priority(env: Env, net: ConcreteDNN, ids: set[str], priority: FnRef) -> set[str]:
    scored = {nid: require_rational(_call_ref(env, net, priority, [poly_var(nid)]),
                                    "priority") for nid in ids}
    best = max(scored.values())
    return {nid for nid, s in scored.items() if s == best}


def eval_traverse(env: Env, net: ConcreteDNN, e: Traverse) -> Value:
    v = eval_expr(env, net, e.subject)
    if isinstance(v, Fraction):
        return v
    poly = as_affine(v, "neuron")
    ranks = _toporanks(net, e.direction)
    active = _filter_active(env, net, poly.keys(), e.stop, e.direction)
    measure = _ranking(active, ranks)
    while active:
        chosen = _max_priority(env, net, active, e.priority)
        part = poly.restrict(chosen)
        rest = poly.drop(chosen)
        acc: Value = Fraction(0)
        for nid in part.keys():
            coeff = part.term_map[nid]
            out = _call_ref(env, net, e.replace, [poly_var(nid), coeff])
            acc = value_add(acc, out)
        poly = as_affine(value_add(rest, acc), "neuron")
        nxt = (active - chosen) | net.neighbours(chosen, e.direction)
        active = _filter_active(env, net, nxt, e.stop, e.direction)
        new_measure = _ranking(active, ranks)
        if active and new_measure >= measure:
            raise RankingViolation(
                f"active-set measure did not decrease: {measure} -> {new_measure}")
        measure = new_measure
    return simplify(poly)


# ---------------------------------------------------------------------------
# solver construct

def eval_solver(env: Env, net: ConcreteDNN, e: Solver) -> Value:
    from . import smtenc

    objective = eval_expr(env, net, e.objective)
    constraint = eval_expr(env, net, e.constraint)
    if isinstance(constraint, tuple):
        acc: Value = True
        for item in constraint:
            acc = value_boolop("and", acc, item)
        constraint = acc
    return smtenc.solve_concrete(e.op, objective, constraint, env.solver_config)


# ---------------------------------------------------------------------------
# flow driver

def _prev_for(net: ConcreteDNN, nid: str, flow_dir: str) -> tuple[str, list[str], str]:
    """Returns (case op, ordered prev ids, binding kind) for one neuron."""
    rec = net.neurons[nid]
    if flow_dir == "forward":
        return rec.op, list(rec.inputs), prev_arity(rec.op)
    succs = net.succs[nid]
    if not succs:
        return "", [], "skip"
    ops = {net.neurons[s].op for s in succs}
    if len(ops) > 1:
        raise RuntimeErrorCF(
            "AmbiguousReverse",
            f"neuron {nid!r} feeds operations {sorted(ops)}; reverse flow needs one")
    succ_op = ops.pop()
    case = "rev_" + succ_op
    arity = prev_arity(case)
    if arity == "single":
        return case, [succs[0]], arity
    if arity == "pair":
        s = succs[0]
        siblings = [p for p in net.neurons[s].inputs if p != nid]
        if not siblings:
            raise RuntimeErrorCF("AmbiguousReverse",
                                 f"neuron {nid!r}: successor {s!r} has no second operand")
        return case, [s, siblings[0]], arity
    return case, list(succs), arity


def transformer_case(t: TransformerDef, op: str) -> Optional[RetNode]:
    return t.cases.get(op)


def _eval_ret(env: Env, net: ConcreteDNN, node: RetNode) -> tuple:
    if isinstance(node, RetTuple):
        return tuple(eval_expr(env, net, x) for x in node.exprs)
    c = eval_expr(env, net, node.cond)
    if not isinstance(c, bool):
        raise RuntimeErrorCF("NonBooleanGuard", "case guard did not evaluate to a boolean")
    return _eval_ret(env, net, node.then if c else node.other)


def apply_transformer(env: Env, net: ConcreteDNN, t: TransformerDef, nid: str,
                      flow_dir: str) -> bool:
    """Computes and installs nid's new shape; False when the neuron has no
    applicable case by construction (graph inputs forward, sinks backward)."""
    rec = net.neurons[nid]
    if flow_dir == "forward" and rec.is_input:
        return False
    case_op, prev_ids, arity = _prev_for(net, nid, flow_dir)
    if arity == "skip":
        return False
    node = transformer_case(t, case_op)
    if node is None:
        raise MissingCase(case_op)
    bindings: dict[str, Value] = {"curr": poly_var(nid)}
    if arity == "single":
        bindings["prev"] = poly_var(prev_ids[0])
    elif arity == "pair":
        bindings["prev0"] = poly_var(prev_ids[0])
        bindings["prev1"] = poly_var(prev_ids[1])
    else:
        bindings["prev"] = tuple(poly_var(p) for p in prev_ids)
    child = env.scoped(bindings)
    try:
        values = _eval_ret(child, net, node)
    except RuntimeErrorCF as exc:
        if not getattr(exc, "neuron", None):
            exc.neuron = nid
            exc.args = (f"{exc.args[0]} (while updating neuron {nid!r})",)
        raise
    env.adopt_counter(child)
    shape = env.shape
    members = shape.member_names if shape else sorted(rec.shape)
    if len(values) != len(members):
        raise RuntimeErrorCF("Internal", "case arity does not match the shape")
    if env.check_value_types and shape is not None:
        for (mname, mtype), v in zip(shape.members, values):
            vt = value_type(v)
            if not is_subtype(vt, mtype):
                raise RuntimeErrorCF(
                    "ValueTypeMismatch",
                    f"member {mname!r} of {nid!r} got {vt}, declared {mtype}")
    rec.shape = dict(zip(members, values))
    return True


def run_flow(env: Env, net: ConcreteDNN, s: Flow) -> ConcreteDNN:
    t = env.transformers[s.transformer]
    if s.direction == "forward":
        seeds = list(net.input_ids)
    else:
        seeds = list(net.output_ids)
    ranks = _toporanks(net, s.direction)
    active = _filter_flow(env, net, seeds, s.stop)
    measure = _ranking(active, ranks)
    while active:
        chosen = _max_priority(env, net, active, s.priority)
        for nid in sorted(chosen):
            apply_transformer(env, net, t, nid, s.direction)
        nxt = (active - chosen) | net.neighbours(chosen, s.direction)
        active = _filter_flow(env, net, nxt, s.stop)
        new_measure = _ranking(active, ranks)
        if active and new_measure >= measure:
            raise RankingViolation(
                f"flow measure did not decrease: {measure} -> {new_measure}")
        measure = new_measure
    return net


def _filter_flow(env: Env, net: ConcreteDNN, ids, stop: FnRef) -> set[str]:
    out = set()
    for nid in ids:
        res = _call_ref(env, net, stop, [poly_var(nid)])
        if not isinstance(res, bool):
            raise RuntimeErrorCF("TypeMismatch", "stopping condition must return a boolean")
        if not res:
            out.add(nid)
    return out


# ---------------------------------------------------------------------------
# whole programs

def build_env(p: Program, solver_config=None, check_value_types: bool = False) -> Env:
    env = Env(shape=p.shape, solver_config=solver_config,
              check_value_types=check_value_types)
    for s in p.statements:
        if isinstance(s, FuncDef):
            env.functions[s.name] = s
        elif isinstance(s, TransformerDef):
            env.transformers[s.name] = s
    return env


def run_program(p: Program, net: ConcreteDNN, solver_config=None,
                check_value_types: bool = False) -> ConcreteDNN:
    env = build_env(p, solver_config, check_value_types)
    for s in p.statements:
        if isinstance(s, Flow):
            run_flow(env, net, s)
    return net
