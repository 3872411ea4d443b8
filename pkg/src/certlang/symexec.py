"""Symbolic semantics: evaluates expressions over a symbolic network,
threading a growing constraint conjunction.

Mirrors the concrete evaluator except that case analysis builds If values,
loops are summarized by their user-supplied invariant (validated with two
solver queries), and external-solver calls become one-sided bounds on a
fresh variable. Polyhedral and noise members are expanded lazily the first
time structure is needed.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .ast import (
    Binary, Call, CompareOp, Concat, Const, Dot, Expr, FnRef, FuncDef, ListLit,
    ListOp, Map, MapList, MetadataAccess, MinMax2, Program, RetGuard, RetNode,
    RetTuple, ShapeAccess, ShapeDecl, Solver, SymFresh, Ternary, Traverse,
    Unary, Var,
)
from .interp import BUILTIN_FNS, property_conjuncts
from .solver import SolverConfig, SolverSession
from .symdnn import Bounds, SymbolicDNN, UnsupportedOp, create_symbolic_dnn
from .symval import (
    NotExpanded, SBin, SConst, SEps, SIte, SList, SListIte, SNeuron, SPoly,
    SSym, SV, SVar, s_add, s_and_all, s_avg_list, s_boolop, s_cmp, s_compare_list,
    s_concat, s_div, s_dot, s_embed, s_ite, s_len, s_map_elems, s_max2,
    s_max_list, s_min2, s_min_list, s_mul, s_neg, s_not, s_sub, s_sum_list,
    sconst, expanded, is_list_value,
)
from .values import RuntimeErrorCF
from . import smtenc


class SymError(Exception):
    pass


class InvariantRejected(Exception):
    def __init__(self, which: str, model: dict, obligations: list):
        self.which = which
        self.model = model
        self.obligations = obligations
        super().__init__(f"loop invariant rejected at the {which} obligation")


class InfeasibleSolverConstraint(Exception):
    pass


@dataclass
class CheckRecord:
    kind: str                  # invariant-base | invariant-step | solver-feasible
    status: str                # verified | falsified | inconclusive
    solve_ms: float
    model: dict = field(default_factory=dict)


@dataclass
class SymEnv:
    sdnn: SymbolicDNN
    functions: dict[str, FuncDef]
    sigma: dict[str, SV] = field(default_factory=dict)
    solver_config: Optional[SolverConfig] = None
    member_override: dict[tuple[str, str], SV] = field(default_factory=dict)
    traverse_blocks: dict[int, list[str]] = field(default_factory=dict)
    checks: list[CheckRecord] = field(default_factory=list)
    trace: Optional[Callable[[str], None]] = None

    def scoped(self, bindings: dict[str, SV]) -> "SymEnv":
        child = SymEnv(self.sdnn, self.functions, bindings, self.solver_config,
                       self.member_override, self.traverse_blocks, self.checks,
                       self.trace)
        return child

    def log(self, rule: str, detail: str = "") -> None:
        if self.trace is not None:
            self.trace(f"{rule} {detail}".rstrip())


def _neuron_ids(v: SV) -> list[str]:
    if isinstance(v, SNeuron):
        return [v.nid]
    if isinstance(v, SList):
        out = []
        for item in v.items:
            out.extend(_neuron_ids(item))
        return out
    raise SymError("expected a neuron or neuron list")


def _member_value(env: SymEnv, nid: str, member: str) -> SV:
    override = env.member_override.get((nid, member))
    if override is not None:
        return override
    return env.sdnn.member(nid, member)


def sym_eval(env: SymEnv, e: Expr) -> SV:
    if isinstance(e, Const):
        return sconst(e.value)
    if isinstance(e, Var):
        if e.name not in env.sigma:
            raise SymError(f"unbound variable {e.name!r}")
        return env.sigma[e.name]
    if isinstance(e, SymFresh):
        env.log("Sym-noise")
        return SEps(env.sdnn.mint_eps())
    if isinstance(e, Unary):
        v = sym_eval(env, e.operand)
        return s_not(v) if e.op == "not" else s_neg(v)
    if isinstance(e, Binary):
        a = sym_eval(env, e.left)
        b = sym_eval(env, e.right)
        env.log("Sym-binary", e.op)
        if e.op == "+":
            return s_add(a, b)
        if e.op == "-":
            return s_sub(a, b)
        if e.op == "*":
            return s_mul(a, b)
        if e.op == "/":
            return s_div(a, b)
        if e.op in ("and", "or"):
            return s_boolop(e.op, a, b)
        if e.op == "<>":
            return s_embed(a, b)
        return s_cmp(e.op, a, b)
    if isinstance(e, Ternary):
        c = sym_eval(env, e.cond)
        t = sym_eval(env, e.then)
        o = sym_eval(env, e.other)
        env.log("Sym-ternary")
        return s_ite(c, t, o)
    if isinstance(e, MetadataAccess):
        base = sym_eval(env, e.base)
        if is_list_value(base):
            return s_map_elems(base, lambda n: env.sdnn.metadata(
                _neuron_ids(n)[0], e.name))
        return env.sdnn.metadata(_neuron_ids(base)[0], e.name)
    if isinstance(e, ShapeAccess):
        base = sym_eval(env, e.base)
        if is_list_value(base):
            return s_map_elems(base, lambda n: _member_value(
                env, _neuron_ids(n)[0], e.member))
        return _member_value(env, _neuron_ids(base)[0], e.member)
    if isinstance(e, Traverse):
        return sym_traverse(env, e)
    if isinstance(e, Solver):
        return sym_solver(env, e)
    if isinstance(e, ListOp):
        v = sym_eval(env, e.operand)
        if e.op == "len":
            return s_len(v)
        if not is_list_value(v):
            if e.op in ("sum", "avg"):
                return v
            raise SymError(f"{e.op} needs a list")
        return {"max": s_max_list, "min": s_min_list,
                "sum": s_sum_list, "avg": s_avg_list}[e.op](v)
    if isinstance(e, MinMax2):
        a = sym_eval(env, e.left)
        b = sym_eval(env, e.right)
        return s_max2(a, b) if e.op == "max" else s_min2(a, b)
    if isinstance(e, Dot):
        a = sym_eval(env, e.left)
        b = sym_eval(env, e.right)
        return s_dot(a, b)
    if isinstance(e, Concat):
        a = sym_eval(env, e.left)
        b = sym_eval(env, e.right)
        return s_concat(a, b)
    if isinstance(e, CompareOp):
        items = sym_eval(env, e.operand)
        env.log("Sval-compare")

        def pred(a: SV, b: SV) -> SV:
            return _call_ref(env, e.fn, [a, b])

        return s_compare_list(items, pred)
    if isinstance(e, Map):
        v = sym_eval(env, e.operand)
        v = _ensure_expanded(env, v)
        env.log("Sym-map")
        return _sym_map(env, v, e.fn)
    if isinstance(e, MapList):
        v = sym_eval(env, e.operand)
        return s_map_elems(v, lambda item: _call_ref(env, e.fn, [item]))
    if isinstance(e, Call):
        args = [sym_eval(env, a) for a in e.args]
        return _call_fn(env, e.fn, args)
    if isinstance(e, ListLit):
        return SList(tuple(sym_eval(env, item) for item in e.items))
    raise SymError(f"unhandled expression {type(e).__name__}")


def _call_fn(env: SymEnv, name: str, args: list[SV]) -> SV:
    if name in BUILTIN_FNS:
        raise UnsupportedOp(f"{name} is outside the verified fragment")
    fn = env.functions[name]
    child = env.scoped({pname: v for (_, pname), v in zip(fn.params, args)})
    return sym_eval(child, fn.body)


def _call_ref(env: SymEnv, ref: FnRef, args: list[SV]) -> SV:
    if ref.kind == "const":
        return sconst(ref.value)
    out = _call_fn(env, ref.name, args)
    if ref.kind == "neg":
        return s_neg(out)
    return out


# ---------------------------------------------------------------------------
# lazy expansion

def _ensure_expanded(env: SymEnv, v: SV) -> SV:
    if isinstance(v, SVar):
        origin = env.sdnn.placeholder_origin(v.name)
        if origin is not None:
            env.sdnn.expand_member(*origin)
            return env.sdnn.member(*origin)
        if env.sdnn.var_class.get(v.name) == "Z":
            raise NotExpanded(f"placeholder {v.name} has no recorded origin")
        return v
    if isinstance(v, SIte):
        return s_ite(v.c, _ensure_expanded(env, v.t), _ensure_expanded(env, v.e))
    return v


def expand_for_expr(env: SymEnv, e: Expr) -> None:
    """Best-effort eager expansion: walks the expression and expands any
    member whose structure the evaluation will need. Evaluation also expands
    lazily, so this is an optimization and a testing surface, not a
    prerequisite."""
    if isinstance(e, Map):
        _expand_operand(env, e.operand)
        expand_for_expr(env, e.operand)
    elif isinstance(e, Traverse):
        _traverse_block(env, e)
        expand_for_expr(env, e.invariant)
    elif isinstance(e, Call):
        for a in e.args:
            expand_for_expr(env, a)
        fn = env.functions.get(e.fn)
        if fn is not None:
            child = env.scoped({pname: SConst(Fraction(0))
                                for (_, pname) in fn.params})
            expand_for_expr(child, fn.body)
    else:
        for child in vars(e).values():
            if isinstance(child, Expr):
                expand_for_expr(env, child)
            elif isinstance(child, list):
                for item in child:
                    if isinstance(item, Expr):
                        expand_for_expr(env, item)


def _expand_operand(env: SymEnv, e: Expr) -> None:
    if isinstance(e, ShapeAccess) and isinstance(e.base, Var):
        base = env.sigma.get(e.base.name)
        if base is not None:
            for nid in _neuron_ids(base):
                env.sdnn.expand_member(nid, e.member)
    elif isinstance(e, Binary):
        _expand_operand(env, e.left)
        _expand_operand(env, e.right)


def _sym_map(env: SymEnv, v: SV, fn: FnRef) -> SV:
    if isinstance(v, SIte):
        return s_ite(v.c, _sym_map(env, v.t, fn), _sym_map(env, v.e, fn))
    if isinstance(v, (SConst, SVar)):
        return v
    if isinstance(v, SNeuron):
        v = SPoly(SConst(Fraction(0)), ((v.nid, SConst(Fraction(1))),))
    if isinstance(v, SEps):
        v = SSym(SConst(Fraction(0)), ((v.eid, SConst(Fraction(1))),))
    if isinstance(v, SPoly):
        acc: SV = v.const
        for nid, coeff in v.terms:
            acc = s_add(acc, _call_ref(env, fn, [SNeuron(nid), coeff]))
        return acc
    if isinstance(v, SSym):
        acc = v.const
        for eid, coeff in v.terms:
            acc = s_add(acc, _call_ref(env, fn, [SEps(eid), coeff]))
        return acc
    raise NotExpanded(f"map over a non-expanded value {type(v).__name__}")


# ---------------------------------------------------------------------------
# traverse: invariant checking and summarization

def _traverse_block(env: SymEnv, e: Traverse) -> list[str]:
    key = id(e)
    block = env.traverse_blocks.get(key)
    if block is None:
        block = [env.sdnn.add_neuron() for _ in range(env.sdnn.bounds.n_sym)]
        env.traverse_blocks[key] = block
    return block


def _run_check(env: SymEnv, kind: str, asserts: list, tag: str) -> CheckRecord:
    t0 = time.monotonic()
    res = smtenc.check_obligation(env.solver_config, asserts, tag)
    ms = (time.monotonic() - t0) * 1000
    rec = CheckRecord(kind, res.status, ms, res.model)
    env.checks.append(rec)
    return rec


def check_invariant(env: SymEnv, e: Traverse) -> bool:
    """Base case and inductive step, each discharged as one unsat query."""
    enc = smtenc.Encoder(env.sdnn)
    subject = e.subject.name
    block = _traverse_block(env, e)

    # base: constraints so far imply the invariant on the traverse input
    base_inv = sym_eval(env, e.invariant)
    asserts = [enc.assume(c) for c in env.sdnn.constraints]
    asserts.append(smtenc.fnot(enc.assume(base_inv)))
    rec = _run_check(env, "invariant-base", asserts, "inv_base")
    env.log("Check-invariant", rec.status)
    if rec.status == "sat":
        raise InvariantRejected("base", rec.model, list(env.checks))
    if rec.status not in ("unsat",):
        raise InvariantRejected("base", {}, list(env.checks))

    # induction: a general state satisfying the invariant still satisfies it
    # after one parallel step (replace where the stop condition is false)
    snapshot = len(env.sdnn.constraints)
    coeffs = [env.sdnn.fresh_var("X", "Real") for _ in range(len(block) + 1)]
    general = SPoly(coeffs[0], tuple(sorted(
        (nid, c) for nid, c in zip(block, coeffs[1:]))))
    pre_env = env.scoped(dict(env.sigma))
    pre_env.sigma[subject] = general
    inv_pre = sym_eval(pre_env, e.invariant)

    stepped_terms: list[SV] = []
    for nid, coeff in zip(block, coeffs[1:]):
        stop = _call_ref(env, e.stop, [SNeuron(nid)])
        replaced = _call_ref(env, e.replace, [SNeuron(nid), coeff])
        kept = s_mul(coeff, SNeuron(nid))
        stepped_terms.append(s_ite(stop, kept, replaced))
    stepped: SV = coeffs[0]
    for term in stepped_terms:
        stepped = s_add(stepped, term)
    post_env = env.scoped(dict(env.sigma))
    post_env.sigma[subject] = stepped
    inv_post = sym_eval(post_env, e.invariant)

    new_constraints = env.sdnn.constraints[snapshot:]
    del env.sdnn.constraints[snapshot:]

    base = [enc.assume(c) for c in env.sdnn.constraints]
    base.append(enc.assume(inv_pre))
    consequent = smtenc.fand(
        [enc.assume(c) for c in new_constraints] + [enc.assume(inv_post)])
    base.append(smtenc.fnot(consequent))
    rec = _run_check(env, "invariant-step", base, "inv_step")
    env.log("Check-induction", rec.status)
    if rec.status == "sat":
        raise InvariantRejected("step", rec.model, list(env.checks))
    if rec.status not in ("unsat",):
        raise InvariantRejected("step", {}, list(env.checks))
    return True


def sym_traverse(env: SymEnv, e: Traverse) -> SV:
    check_invariant(env, e)
    block = _traverse_block(env, e)
    coeffs = [env.sdnn.fresh_var("X", "Real") for _ in range(len(block) + 1)]
    out = SPoly(coeffs[0], tuple(sorted(
        (nid, c) for nid, c in zip(block, coeffs[1:]))))
    out_env = env.scoped(dict(env.sigma))
    out_env.sigma[e.subject.name] = out
    inv_out = sym_eval(out_env, e.invariant)
    env.sdnn.constraints.append(inv_out)
    env.log("Sym-traverse", "summarized")
    return out


def sym_solver(env: SymEnv, e: Solver) -> SV:
    mu1 = sym_eval(env, e.objective)
    mu2 = sym_eval(env, e.constraint)
    if is_list_value(mu2):
        mu2 = _conj_list(mu2)
    enc = smtenc.Encoder(env.sdnn)
    feasible = [enc.assume(c) for c in env.sdnn.constraints]
    feasible.append(enc.assume(mu2))
    rec = _run_check(env, "solver-feasible", feasible, "solver_feasible")
    if rec.status == "unsat":
        raise InfeasibleSolverConstraint(
            "solver constraints are unsatisfiable together with the network "
            "assumptions; the call could never return")
    if rec.status != "sat":
        raise InfeasibleSolverConstraint("solver feasibility check inconclusive")
    out = env.sdnn.fresh_var("X", "Real")
    rel = "<=" if e.op == "minimize" else ">="
    env.sdnn.constraints.append(SBin("=>", mu2, s_cmp(rel, out, mu1)))
    env.log("Sym-solver", e.op)
    return out


def _conj_list(v: SV) -> SV:
    from .symval import SListCons
    if isinstance(v, SList):
        return s_and_all(v.items)
    if isinstance(v, SListCons):
        return s_boolop("and", v.head, _conj_list(v.tail))
    if isinstance(v, SListIte):
        return s_ite(v.c, _conj_list(v.t), _conj_list(v.e))
    raise SymError("expected a constraint list")


# ---------------------------------------------------------------------------
# property evaluation and case binding

def make_prop_eval(program_functions: dict[str, FuncDef], shape: ShapeDecl,
                   solver_config=None):
    def prop_eval(sdnn: SymbolicDNN, nid: str) -> SV:
        env = SymEnv(sdnn, program_functions, {"curr": SNeuron(nid)},
                     solver_config)
        return s_and_all(sym_eval(env, c) for c in property_conjuncts(shape))

    return prop_eval


def make_symbolic_dnn(program: Program, op: str, bounds: Bounds,
                      solver_config=None) -> SymbolicDNN:
    functions = {s.name: s for s in program.statements if isinstance(s, FuncDef)}
    prop_eval = make_prop_eval(functions, program.shape, solver_config)
    return create_symbolic_dnn(program.shape, op, bounds, prop_eval)


def case_bindings(sdnn: SymbolicDNN, op: str) -> dict[str, SV]:
    from .typecheck import prev_arity
    bindings: dict[str, SV] = {"curr": SNeuron(sdnn.curr)}
    if op == "rev_MaxPool":
        bindings["prev"] = SList(tuple(SNeuron(p) for p in sdnn.prevs))
        return bindings
    arity = prev_arity(op)
    if arity == "single":
        bindings["prev"] = SNeuron(sdnn.prevs[0])
    elif arity == "pair":
        bindings["prev0"] = SNeuron(sdnn.prevs[0])
        bindings["prev1"] = SNeuron(sdnn.prevs[1])
    else:
        bindings["prev"] = SList(tuple(SNeuron(p) for p in sdnn.prevs))
    return bindings


def eval_case_paths(env: SymEnv, node: RetNode) -> list[tuple[list[SV], list[SV]]]:
    """All (path condition list, member value list) leaves of a case tree."""
    out: list[tuple[list[SV], list[SV]]] = []

    def go(n: RetNode, conds: list[SV]) -> None:
        if isinstance(n, RetTuple):
            out.append((conds, [sym_eval(env, x) for x in n.exprs]))
            return
        c = sym_eval(env, n.cond)
        go(n.then, conds + [c])
        go(n.other, conds + [s_not(c)])

    go(node, [])
    return out


def property_on(env: SymEnv, nid: str, member_values: dict[str, SV]) -> SV:
    override = {(nid, m): v for m, v in member_values.items()}
    child = SymEnv(env.sdnn, env.functions, {"curr": SNeuron(nid)},
                   env.solver_config, {**env.member_override, **override},
                   env.traverse_blocks, env.checks, env.trace)
    return s_and_all(sym_eval(child, c)
                     for c in property_conjuncts(env.sdnn.shape))
