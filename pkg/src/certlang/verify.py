"""Soundness obligations per transformer case, counterexample decoding, and
whole-certifier reports.

For each DNN operation with a transformer case, the case tree is split into
one obligation per guard path: assuming the declared property on every
template neuron, the operation relation, and the path condition, the property
must hold on the newly computed shape. Traverse-bearing cases additionally
carry their two invariant obligations; solver-bearing cases carry a
feasibility check.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

from .ast import Call, FuncDef, Program, RetNode, TransformerDef, Traverse, Solver, Expr
from .dnn import ConcreteDNN, NeuronRecord
from .interp import Env as ConcreteEnv, _eval_ret, property_conjuncts
from .smtenc import Encoder, fand, fnot
from .solver import SolverConfig, SolverCrash, SolverSession
from .symdnn import Bounds, SymbolicDNN, UnsupportedOp
from .symexec import (
    CheckRecord, InfeasibleSolverConstraint, InvariantRejected, SymEnv,
    case_bindings, eval_case_paths, make_symbolic_dnn, property_on,
)
from .symval import SConst, SList, SPoly, SSym, SV, SVar, s_not
from .values import (
    Affine, RuntimeErrorCF, Value, ct_holds, poly_var, value_str,
)
from . import formula as F


@dataclass
class Obligation:
    certifier: str
    op: str
    kind: str                  # soundness | coverage | invariant-base |
                               # invariant-step | solver-feasible | unsupported
    path: int
    status: str                # verified | falsified | inconclusive | unsupported
    gen_ms: float = 0.0
    solve_ms: float = 0.0
    model: dict = field(default_factory=dict)
    bounds: Optional[Bounds] = None
    detail: str = ""
    sdnn: Optional[SymbolicDNN] = None
    case_node: Optional[RetNode] = None
    uses_loop_or_solver: bool = False
    asserts: Optional[list] = None


@dataclass
class Counterexample:
    assignments: dict
    fragment: Optional[ConcreteDNN]
    new_shape: dict[str, Value] = field(default_factory=dict)
    replay_verdict: str = ""       # violation | consistent | crash:<kind> | skipped
    note: str = ""

    @property
    def replayed(self) -> bool:
        return self.replay_verdict == "violation"


def _uses_loop_or_solver(node) -> bool:
    seen = [False]

    def walk_expr(e) -> None:
        if seen[0] or not hasattr(e, "__dict__"):
            return
        if isinstance(e, (Traverse, Solver)):
            seen[0] = True
            return
        for v in vars(e).values():
            if isinstance(v, Expr):
                walk_expr(v)
            elif isinstance(v, list):
                for item in v:
                    if isinstance(item, Expr):
                        walk_expr(item)

    def walk_ret(n) -> None:
        from .ast import RetTuple, RetGuard
        if isinstance(n, RetTuple):
            for e in n.exprs:
                walk_expr(e)
        else:
            walk_expr(n.cond)
            walk_ret(n.then)
            walk_ret(n.other)

    walk_ret(node)
    return seen[0]


def _fn_uses(program: Program, node) -> bool:
    """Loop/solver use, following function calls one level deep."""
    if _uses_loop_or_solver(node):
        return True
    functions = {s.name: s for s in program.statements if isinstance(s, FuncDef)}
    names: set[str] = set()

    def collect(e) -> None:
        from .ast import Call
        if isinstance(e, Call):
            names.add(e.fn)
        if hasattr(e, "__dict__"):
            for v in vars(e).values():
                if isinstance(v, Expr):
                    collect(v)
                elif isinstance(v, list):
                    for item in v:
                        if isinstance(item, Expr):
                            collect(item)

    from .ast import RetTuple
    def walk_ret(n) -> None:
        if isinstance(n, RetTuple):
            for e in n.exprs:
                collect(e)
        else:
            collect(n.cond)
            walk_ret(n.then)
            walk_ret(n.other)

    walk_ret(node)
    worklist = list(names)
    visited = set()
    while worklist:
        name = worklist.pop()
        if name in visited or name not in functions:
            continue
        visited.add(name)
        body = functions[name].body
        if _expr_uses(body):
            return True
        sub: set[str] = set()
        collect_into(body, sub)
        worklist.extend(sub)
    return False


def _expr_uses(e) -> bool:
    if isinstance(e, (Traverse, Solver)):
        return True
    if hasattr(e, "__dict__"):
        for v in vars(e).values():
            if isinstance(v, Expr) and _expr_uses(v):
                return True
            if isinstance(v, list):
                for item in v:
                    if isinstance(item, Expr) and _expr_uses(item):
                        return True
    return False


def collect_into(e, acc: set) -> None:
    from .ast import Call
    if isinstance(e, Call):
        acc.add(e.fn)
    if hasattr(e, "__dict__"):
        for v in vars(e).values():
            if isinstance(v, Expr):
                collect_into(v, acc)
            elif isinstance(v, list):
                for item in v:
                    if isinstance(item, Expr):
                        collect_into(item, acc)


def verify_transformer(program: Program, tdef: TransformerDef, op: str,
                       bounds: Bounds, config: Optional[SolverConfig] = None,
                       trace=None) -> list[Obligation]:
    node = tdef.cases[op]
    uses = _fn_uses(program, node)
    try:
        sdnn = make_symbolic_dnn(program, op, bounds, config)
    except UnsupportedOp as exc:
        return [Obligation(tdef.name, op, "unsupported", -1, "unsupported",
                           detail=str(exc), bounds=bounds)]
    functions = {s.name: s for s in program.statements if isinstance(s, FuncDef)}
    env = SymEnv(sdnn, functions, case_bindings(sdnn, op), config, trace=trace)

    out: list[Obligation] = []
    t_gen0 = time.monotonic()
    try:
        paths = eval_case_paths(env, node)
    except InvariantRejected as exc:
        for rec in env.checks:
            out.append(_record_to_ob(tdef.name, op, rec, bounds))
        if not any(o.status in ("falsified", "inconclusive") for o in out):
            status = "falsified" if exc.model else "inconclusive"
            out.append(Obligation(tdef.name, op, f"invariant-{exc.which}", -1,
                                  status, model=exc.model, bounds=bounds))
        for o in out:
            o.sdnn = sdnn
            o.case_node = node
            o.uses_loop_or_solver = True
        return out
    except InfeasibleSolverConstraint as exc:
        for rec in env.checks:
            out.append(_record_to_ob(tdef.name, op, rec, bounds))
        out.append(Obligation(tdef.name, op, "solver-feasible", -1, "falsified",
                              detail=str(exc), bounds=bounds))
        return out
    gen_shared = (time.monotonic() - t_gen0) * 1000

    for rec in env.checks:
        ob = _record_to_ob(tdef.name, op, rec, bounds)
        ob.sdnn = sdnn
        ob.case_node = node
        ob.uses_loop_or_solver = True
        out.append(ob)

    members = [m for m, _ in program.shape.members]
    enc = Encoder(sdnn)
    base_asserts = None
    path_cond_terms = []
    for idx, (conds, values) in enumerate(paths):
        t0 = time.monotonic()
        goal = property_on(env, sdnn.curr, dict(zip(members, values)))
        if base_asserts is None:
            base_asserts = [enc.assume(c) for c in sdnn.constraints]
        asserts = list(base_asserts)
        cond_terms = [enc.assume(c) for c in conds]
        path_cond_terms.append(fand(cond_terms) if cond_terms else F.TRUE)
        asserts.extend(cond_terms)
        asserts.append(fnot(enc.goal(goal)))
        gen_ms = (time.monotonic() - t0) * 1000 + (gen_shared if idx == 0 else 0)

        t1 = time.monotonic()
        try:
            from .smtenc import check_obligation
            res = check_obligation(config, asserts, f"{tdef.name}_{op}_path{idx}")
            status = {"unsat": "verified", "sat": "falsified"}.get(
                res.status, "inconclusive")
            model = res.model
        except SolverCrash:
            status, model = "inconclusive", {}
        solve_ms = (time.monotonic() - t1) * 1000
        ob = Obligation(tdef.name, op, "soundness", idx, status, gen_ms,
                        solve_ms, model, bounds)
        ob.sdnn = sdnn
        ob.case_node = node
        ob.uses_loop_or_solver = uses
        ob.asserts = asserts
        out.append(ob)

    # no input escapes every guard path
    t0 = time.monotonic()
    cov_asserts = list(base_asserts or [enc.assume(c) for c in sdnn.constraints])
    from .formula import disj
    cov_asserts.append(fnot(disj(path_cond_terms)))
    gen_ms = (time.monotonic() - t0) * 1000
    t1 = time.monotonic()
    try:
        from .smtenc import check_obligation
        res = check_obligation(config, cov_asserts, f"{tdef.name}_{op}_coverage")
        status = {"unsat": "verified", "sat": "falsified"}.get(
            res.status, "inconclusive")
    except SolverCrash:
        status = "inconclusive"
    out.append(Obligation(tdef.name, op, "coverage", -1, status, gen_ms,
                          (time.monotonic() - t1) * 1000, {}, bounds))
    return out


def _record_to_ob(certifier: str, op: str, rec: CheckRecord,
                  bounds: Bounds) -> Obligation:
    if rec.kind == "solver-feasible":
        status = {"sat": "verified", "unsat": "falsified"}.get(
            rec.status, "inconclusive")
    else:
        status = {"unsat": "verified", "sat": "falsified"}.get(
            rec.status, "inconclusive")
    return Obligation(certifier, op, rec.kind, -1, status,
                      0.0, rec.solve_ms, rec.model, bounds)


# ---------------------------------------------------------------------------
# counterexample decoding and replay

def _concrete_of_sv(sv: SV, model: dict) -> Value:
    if isinstance(sv, SConst):
        return sv.value
    if isinstance(sv, SVar):
        v = model.get(sv.name)
        if v is None:
            return False if sv.sort == "Bool" else Fraction(0)
        return v
    if isinstance(sv, SPoly):
        const = _as_frac(_concrete_of_sv(sv.const, model))
        terms = {nid: _as_frac(_concrete_of_sv(c, model)) for nid, c in sv.terms}
        return Affine.make("neuron", const, terms)
    if isinstance(sv, SSym):
        const = _as_frac(_concrete_of_sv(sv.const, model))
        terms = {eid: _as_frac(_concrete_of_sv(c, model)) for eid, c in sv.terms}
        return Affine.make("sym", const, terms)
    if isinstance(sv, SList):
        return tuple(_concrete_of_sv(x, model) for x in sv.items)
    raise RuntimeErrorCF("Internal", f"cannot decode {type(sv).__name__}")


def _as_frac(v: Value) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, bool):
        return Fraction(1 if v else 0)
    raise RuntimeErrorCF("Internal", "expected a numeric assignment")


def decode_counterexample(program: Program, ob: Obligation,
                          _retry: bool = True) -> Counterexample:
    if ob.status != "falsified":
        raise ValueError("only falsified obligations decode")
    sdnn = ob.sdnn
    if sdnn is None or ob.kind not in ("soundness",):
        return Counterexample(dict(ob.model), None, replay_verdict="skipped",
                              note=f"{ob.kind} obligations are not replayed")
    model = dict(ob.model)
    if ob.uses_loop_or_solver and _solver_in_case(program, ob):
        return Counterexample(model, None, replay_verdict="skipped",
                              note="solver calls have no concrete meaning on "
                                   "an isolated fragment")

    rev = sdnn.op.startswith("rev_")
    neurons: dict[str, NeuronRecord] = {}
    for nid in sdnn.neurons:
        if nid == sdnn.curr:
            op = "Input" if rev else (sdnn.op if not rev else "Input")
            layer = 0 if rev else 1
            inputs = [] if rev else list(sdnn.prevs)
        elif nid in sdnn.prevs:
            layer = 1 if rev else 0
            op = sdnn.op[4:] if rev else "Input"
            inputs = [sdnn.curr] if rev else []
        else:
            layer, op, inputs = 0, "Input", []
        rec = NeuronRecord(nid, op if op in ("Input", "Affine", "ReLU", "MaxPool",
                                             "Max", "Min", "Add", "Mult") else "Input",
                           layer, inputs)
        neurons[nid] = rec

    for (nid, member), sv in sdnn.table.items():
        if nid in ("!eps",) or member in ("!value",):
            continue
        if nid not in neurons:
            continue
        if member == "weight":
            neurons[nid].weight = [_as_frac(_concrete_of_sv(x, model))
                                   for x in sv.items]  # type: ignore[union-attr]
        elif member == "bias":
            neurons[nid].bias = _as_frac(_concrete_of_sv(sv, model))
        elif member == "layer":
            pass
        elif member == "equations":
            pass
        else:
            neurons[nid].shape[member] = _concrete_of_sv(sv, model)

    inputs = sorted(nid for nid, r in neurons.items() if r.op == "Input")
    outputs = sorted(nid for nid, r in neurons.items()
                     if not any(nid in r2.inputs for r2 in neurons.values()))
    fragment = ConcreteDNN(neurons, inputs, outputs)

    # neuron point values from the model
    point: dict[str, Fraction] = {}
    for nid in sdnn.neurons:
        vv = sdnn.value_var(nid)
        point[nid] = _as_frac(model.get(vv.name, Fraction(0)))

    env = ConcreteEnv(
        functions={s.name: s for s in program.statements if isinstance(s, FuncDef)},
        shape=program.shape)
    bindings: dict[str, Value] = {"curr": poly_var(sdnn.curr)}
    from .typecheck import prev_arity
    if sdnn.op == "rev_MaxPool" or prev_arity(sdnn.op) == "list":
        bindings["prev"] = tuple(poly_var(p) for p in sdnn.prevs)
    elif prev_arity(sdnn.op) == "single":
        bindings["prev"] = poly_var(sdnn.prevs[0])
    else:
        bindings["prev0"] = poly_var(sdnn.prevs[0])
        bindings["prev1"] = poly_var(sdnn.prevs[1])
    child = env.scoped(bindings)
    try:
        values = _eval_ret(child, fragment, ob.case_node)
    except RuntimeErrorCF as exc:
        if exc.kind == "DivisionByZero" and _retry and ob.asserts:
            retry = _retry_without_zero_divisors(program, ob)
            if retry is not None:
                return retry
        return Counterexample(model, fragment,
                              replay_verdict=f"crash:{exc.kind}", note=str(exc))

    members = [m for m, _ in program.shape.members]
    new_shape = dict(zip(members, values))
    saved = neurons[sdnn.curr].shape
    neurons[sdnn.curr].shape = new_shape
    try:
        holds = True
        prop_env = env.scoped({"curr": poly_var(sdnn.curr)})
        for conjunct in property_conjuncts(program.shape):
            from .interp import eval_expr
            v = eval_expr(prop_env, fragment, conjunct)
            if not ct_holds(v, point):
                holds = False
                break
    finally:
        neurons[sdnn.curr].shape = saved
    verdict = "consistent" if holds else "violation"
    return Counterexample(model, fragment, new_shape, verdict)


def _solver_in_case(program: Program, ob: Obligation) -> bool:
    functions = {s.name: s for s in program.statements if isinstance(s, FuncDef)}
    names: set = set()
    from .ast import RetTuple

    def scan(e) -> bool:
        if isinstance(e, Solver):
            return True
        if isinstance(e, Traverse):
            return False
        found = False
        if hasattr(e, "__dict__"):
            for v in vars(e).values():
                if isinstance(v, Expr):
                    found = found or scan(v)
                elif isinstance(v, list):
                    for item in v:
                        if isinstance(item, Expr):
                            found = found or scan(item)
        if isinstance(e, Call) and e.fn in functions:
            found = found or scan(functions[e.fn].body)
        return found

    def walk_ret(n) -> bool:
        if isinstance(n, RetTuple):
            return any(scan(x) for x in n.exprs)
        return scan(n.cond) or walk_ret(n.then) or walk_ret(n.other)

    return walk_ret(ob.case_node)


def _retry_without_zero_divisors(program: Program, ob: Obligation):
    """Seek a second model where no concrete division hits zero."""
    from . import formula as F
    from .smtenc import check_obligation

    divisors: list = []
    seen: set = set()

    def scan(t) -> None:
        if t.uid in seen:
            return
        seen.add(t.uid)
        if t.node == "app":
            if t.op == "/" and t.args[1].node != "const":
                divisors.append(t.args[1])
            for a in t.args:
                scan(a)
        elif t.node == "quant":
            scan(t.args[0])

    for t in ob.asserts:
        scan(t)
    if not divisors:
        return None
    extra = [F.neg(F.app("=", d, F.const(0, "Real"))) for d in divisors]
    res = check_obligation(None, list(ob.asserts) + extra, "replay_retry")
    if res.status != "sat":
        return None
    retry_ob = Obligation(ob.certifier, ob.op, ob.kind, ob.path, "falsified",
                          model=res.model, bounds=ob.bounds)
    retry_ob.sdnn = ob.sdnn
    retry_ob.case_node = ob.case_node
    retry_ob.uses_loop_or_solver = ob.uses_loop_or_solver
    return decode_counterexample(program, retry_ob, _retry=False)


# ---------------------------------------------------------------------------
# whole-certifier reports

PRIMITIVE_OPS = ("ReLU", "Max", "Min", "Add", "Mult")
COMPOSITE_OPS = ("Affine", "MaxPool")


@dataclass
class VerifyReport:
    obligations: list[Obligation]

    def by_case(self) -> dict[tuple[str, str], list[Obligation]]:
        acc: dict[tuple[str, str], list[Obligation]] = {}
        for ob in self.obligations:
            acc.setdefault((ob.certifier, ob.op), []).append(ob)
        return acc

    def case_status(self) -> dict[tuple[str, str], str]:
        out = {}
        for key, obs in self.by_case().items():
            statuses = {o.status for o in obs}
            if "falsified" in statuses:
                out[key] = "falsified"
            elif "unsupported" in statuses:
                out[key] = "unsupported"
            elif "inconclusive" in statuses:
                out[key] = "inconclusive"
            else:
                out[key] = "verified"
        return out

    @property
    def exit_code(self) -> int:
        st = set(self.case_status().values())
        if "falsified" in st:
            return 2
        if "inconclusive" in st or "unsupported" in st:
            return 3
        return 0

    def to_json(self) -> dict:
        return {
            "obligations": [
                {
                    "certifier": o.certifier,
                    "op": o.op,
                    "kind": o.kind,
                    "path": o.path,
                    "status": o.status,
                    "gen_ms": round(o.gen_ms, 3),
                    "solve_ms": round(o.solve_ms, 3),
                    **({"model": {k: str(v) for k, v in o.model.items()}}
                       if o.model else {}),
                    **({"bounds": {"n_prev": o.bounds.n_prev,
                                   "n_sym": o.bounds.n_sym}} if o.bounds else {}),
                    **({"detail": o.detail} if o.detail else {}),
                }
                for o in self.obligations
            ],
            "summary": {f"{c}/{op}": st
                        for (c, op), st in sorted(self.case_status().items())},
            "exit_code": self.exit_code,
        }


def bounds_for_op(op: str, n_prev: int, n_sym: int) -> Bounds:
    base = op[4:] if op.startswith("rev_") else op
    if base in ("ReLU", "Max", "Min", "Add", "Mult", "Sigmoid", "Tanh"):
        return Bounds(2, max(n_sym, 1))
    return Bounds(n_prev, n_sym)


def verify_certifier(program: Program, n_prev: int = 4, n_sym: Optional[int] = None,
                     config: Optional[SolverConfig] = None,
                     ops: Optional[list[str]] = None,
                     workers: int = 1, trace=None) -> VerifyReport:
    from .typecheck import check_program
    check_program(program)
    n_sym = n_prev if n_sym is None else n_sym
    jobs = []
    for s in program.statements:
        if isinstance(s, TransformerDef):
            for op in s.cases:
                if ops and op not in ops:
                    continue
                jobs.append((s, op))

    def run(job) -> list[Obligation]:
        tdef, op = job
        return verify_transformer(program, tdef, op,
                                  bounds_for_op(op, n_prev, n_sym), config, trace)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    obligations = [ob for obs in results for ob in obs]
    return VerifyReport(obligations)
