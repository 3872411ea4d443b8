"""Symbolic semantics: exactness off loops/solver calls, case values,
invariant checking, and solver summarization."""
import random
from fractions import Fraction

import pytest

from certlang.ast import FuncDef, TransformerDef, Traverse
from certlang.corpus import entry
from certlang.parser import parse, parse_expression
from certlang.symdnn import Bounds
from certlang.symexec import (
    InvariantRejected, SymEnv, case_bindings, eval_case_paths,
    make_symbolic_dnn, sym_eval,
)
from certlang.symval import (
    SBin, SConst, SEps, SIte, SList, SListCons, SListIte, SNeuron, SPoly,
    SSym, SVar, expanded, list_height, s_cmp, s_compare_list, s_ite, sconst,
)

F = Fraction


def _env(program, op, bounds=Bounds(2, 2), config=None):
    sdnn = make_symbolic_dnn(program, op, bounds, config)
    functions = {s.name: s for s in program.statements if isinstance(s, FuncDef)}
    return SymEnv(sdnn, functions, case_bindings(sdnn, op), config)


def _case(program, name, op):
    t = [s for s in program.statements
         if isinstance(s, TransformerDef) and s.name == name][0]
    return t.cases[op]


def test_constant_folding():
    p = parse("Def shape as (Real l){true};")
    env = _env(p, "Add")
    assert sym_eval(env, parse_expression("1 + 2")) == SConst(F(3))
    assert sym_eval(env, parse_expression("(1 <= 2) ? 5 : 6")) == SConst(F(5))


def test_relu_identity_branch_values():
    dp = parse(entry("deeppoly").source())
    env = _env(dp, "ReLU")
    paths = eval_case_paths(env, _case(dp, "DeepPoly", "ReLU"))
    assert len(paths) == 3
    conds, values = paths[0]
    # identity case returns prev's own bounds and the neuron itself
    lp = env.sdnn.member("p00", "l")
    up = env.sdnn.member("p00", "u")
    assert values[0] == lp and values[1] == up
    assert values[2] == SNeuron("p00") and values[3] == SNeuron("p00")


def test_guard_paths_have_negations():
    dp = parse(entry("deeppoly").source())
    env = _env(dp, "ReLU")
    paths = eval_case_paths(env, _case(dp, "DeepPoly", "ReLU"))
    assert [len(conds) for conds, _ in paths] == [1, 2, 2]


def test_fresh_noise_constraint_recorded():
    dz = parse(entry("deepz").source())
    env = _env(dz, "ReLU")
    before = len(env.sdnn.constraints)
    v = sym_eval(env, parse_expression("sym"))
    assert isinstance(v, SEps)
    assert len(env.sdnn.constraints) == before + 2  # the two range bounds


def test_compare_tree_structure():
    items = SList((SVar("a", "Real"), SVar("b", "Real"), SVar("c", "Real")))
    out = s_compare_list(items, lambda x, y: s_cmp(">=", x, y))
    assert isinstance(out, (SListIte, SListCons))
    assert list_height(out) >= 1
    # an If list over plain lists has finite height; plain lists are height 0
    assert list_height(SList(())) == 0


def test_compare_matches_concrete_enumeration(solver_config):
    """The compare If tree agrees with concrete compare on sampled inputs."""
    from certlang.values import poly_var
    from certlang.interp import build_env, eval_expr as ceval
    from certlang.dnn import load_dnn_dict

    src = ("Def shape as (Real l, Real u){(curr[l] <= curr) and (curr[u] >= curr)};\n"
           "Func f(Neuron n1, Neuron n2) = n1[l] >= n2[u];")
    p = parse(src)
    env = _env(p, "MaxPool", Bounds(3, 3))
    compare_sv = sym_eval(env, parse_expression("len(compare(prev, f))"))

    rng = random.Random(9)
    for _ in range(25):
        bounds = {}
        for nid in env.sdnn.prevs:
            lo = F(rng.randint(-4, 4))
            bounds[nid] = (lo, lo + rng.randint(0, 3))
        assign = {}
        for nid, (lo, hi) in bounds.items():
            assign[env.sdnn.member(nid, "l").name] = lo
            assign[env.sdnn.member(nid, "u").name] = hi
        got = _eval_sv(compare_sv, assign, env)
        net = load_dnn_dict({"neurons": [
            {"id": nid, "op": "Input", "layer": 0,
             "shape_init": {"l": bounds[nid][0], "u": bounds[nid][1]}}
            for nid in env.sdnn.prevs]})
        cenv = build_env(p)
        cenv.rho["xs"] = tuple(poly_var(n) for n in env.sdnn.prevs)
        want = ceval(cenv, net, parse_expression("len(compare(xs, f))"))
        assert got == want, (bounds, got, want)


def _eval_sv(sv, assign, env, memo=None):
    """Point evaluation of a symbolic value under a variable assignment."""
    memo = {} if memo is None else memo
    key = id(sv)
    if key in memo:
        return memo[key]
    out = _eval_sv_raw(sv, assign, env, memo)
    memo[key] = out
    return out


def _eval_sv_raw(sv, assign, env, memo):
    if isinstance(sv, SConst):
        return sv.value
    if isinstance(sv, SVar):
        return assign[sv.name]
    if isinstance(sv, SNeuron):
        return assign[env.sdnn.value_var(sv.nid).name]
    if isinstance(sv, SEps):
        return assign[env.sdnn.eps_var(sv.eid).name]
    if isinstance(sv, SBin):
        a = _eval_sv(sv.a, assign, env, memo)
        b = _eval_sv(sv.b, assign, env, memo)
        return {
            "+": lambda: a + b, "-": lambda: a - b, "*": lambda: a * b,
            "/": lambda: a / b, "<=": lambda: a <= b, ">=": lambda: a >= b,
            "==": lambda: a == b, "<": lambda: a < b, ">": lambda: a > b,
            "and": lambda: a and b, "or": lambda: a or b,
            "=>": lambda: (not a) or b,
        }[sv.op]()
    if isinstance(sv, SIte):
        return _eval_sv(sv.t if _eval_sv(sv.c, assign, env, memo) else sv.e,
                        assign, env, memo)
    from certlang.symval import SUn
    if isinstance(sv, SUn):
        a = _eval_sv(sv.a, assign, env, memo)
        return (not a) if sv.op == "not" else -a
    if isinstance(sv, SPoly):
        acc = _eval_sv(sv.const, assign, env, memo)
        for nid, coeff in sv.terms:
            acc += _eval_sv(coeff, assign, env, memo) * \
                assign[env.sdnn.value_var(nid).name]
        return acc
    if isinstance(sv, SSym):
        acc = _eval_sv(sv.const, assign, env, memo)
        for eid, coeff in sv.terms:
            acc += _eval_sv(coeff, assign, env, memo) * \
                assign[env.sdnn.eps_var(eid).name]
        return acc
    raise AssertionError(type(sv).__name__)


def test_exactness_off_loops_and_solver(solver_config):
    """For loop/solver-free case expressions, substituting a concrete
    fragment's values into the symbolic result equals concrete evaluation."""
    from certlang.values import poly_var
    from certlang.interp import Env as CEnv, _eval_ret
    from certlang.dnn import load_dnn_dict, NeuronRecord, ConcreteDNN
    from certlang.typecheck import prev_arity

    rng = random.Random(21)
    for name in ("deeppoly", "reluval"):
        program = parse(entry(name).source())
        tdef = [s for s in program.statements if isinstance(s, TransformerDef)][0]
        for op in ("ReLU", "Max", "Min", "Add", "Mult"):
            if op == "ReLU" and name == "deeppoly":
                pass
            env = _env(program, op)
            paths = eval_case_paths(env, tdef.cases[op])
            for _ in range(10):
                assign, fragment, point = _random_fragment(rng, env, program)
                cenv = CEnv(functions={s.name: s for s in program.statements
                                       if isinstance(s, FuncDef)},
                            shape=program.shape)
                bindings = {"curr": poly_var("curr")}
                if prev_arity(op) == "single":
                    bindings["prev"] = poly_var(env.sdnn.prevs[0])
                else:
                    bindings["prev0"] = poly_var(env.sdnn.prevs[0])
                    bindings["prev1"] = poly_var(env.sdnn.prevs[1])
                child = cenv.scoped(bindings)
                want = _eval_ret(child, fragment, tdef.cases[op])
                got = None
                for conds, values in paths:
                    if all(_eval_sv(c, assign, env) for c in conds):
                        got = [_eval_sv(v, assign, env) for v in values]
                        break
                assert got is not None
                want_nums = [_as_point(v, point) for v in want]
                assert got == want_nums, (name, op)


def _random_fragment(rng, env, program):
    from certlang.dnn import ConcreteDNN, NeuronRecord
    sdnn = env.sdnn
    assign = {}
    point = {}
    neurons = {}
    members = [m for m, t in program.shape.members]
    for nid in sdnn.neurons:
        val = F(rng.randint(-6, 6), 2)
        point[nid] = val
        assign[sdnn.value_var(nid).name] = val
        rec = NeuronRecord(nid, "Input", 0)
        lo = val - rng.randint(0, 2)
        hi = val + rng.randint(0, 2)
        for m in members:
            t = program.shape.member_type(m)
            if t.kind == "Real":
                mv = lo if m == members[0] else hi
            elif t.kind == "PolyExp":
                mv = lo if m == "L" else hi
            else:
                continue
            rec.shape[m] = mv
            assign[sdnn.member(nid, m).name] = mv
        neurons[nid] = rec
    fragment = ConcreteDNN(neurons, sorted(neurons), [])
    return assign, fragment, point


def _as_point(v, point):
    from certlang.values import Affine
    if isinstance(v, Affine):
        return v.substitute(point)
    return v


def test_invariant_accepted_for_correct_lower_bound(solver_config):
    dp = parse(entry("deeppoly").source())
    env = _env(dp, "Affine", Bounds(2, 2), solver_config)
    paths = eval_case_paths(env, _case(dp, "DeepPoly", "Affine"))
    kinds = [c.kind for c in env.checks]
    assert kinds.count("invariant-base") == 2
    assert kinds.count("invariant-step") == 2
    assert all(c.status == "unsat" for c in env.checks)


def test_wrong_invariant_rejected_at_induction(solver_config):
    src = entry("deeppoly").source().replace(
        "traverse(backward, priority, false, replace_lower){e <= n}",
        "traverse(backward, priority, false, replace_lower){e >= n}")
    dp = parse(src)
    env = _env(dp, "Affine", Bounds(2, 2), solver_config)
    with pytest.raises(InvariantRejected) as err:
        eval_case_paths(env, _case(dp, "DeepPoly", "Affine"))
    assert err.value.which == "step"
    assert err.value.model  # solver model recorded for the regression fixture


def test_trivial_invariant_accepted(solver_config):
    src = entry("deeppoly").source().replace(
        "traverse(backward, priority, false, replace_lower){e <= n}",
        "traverse(backward, priority, false, replace_lower){true}")
    dp = parse(src)
    env = _env(dp, "Affine", Bounds(2, 2), solver_config)
    paths = eval_case_paths(env, _case(dp, "DeepPoly", "Affine"))
    assert paths  # traverse summarized with a vacuous invariant


def test_traverse_output_shape(solver_config):
    src = entry("deeppoly").source().replace("{e <= n}", "{true}").replace(
        "{e >= n}", "{true}")
    dp = parse(src)
    env = _env(dp, "Affine", Bounds(2, 2), solver_config)
    fn = env.functions["backsubs_lower"]
    trav = fn.body.operand
    assert isinstance(trav, Traverse)
    child = env.scoped({"e": SPoly(sconst(0), (("p00", sconst(1)),)),
                        "n": SNeuron("curr")})
    out = sym_eval(child, trav)
    assert isinstance(out, SPoly)
    assert len(out.terms) == env.sdnn.bounds.n_sym
    # output ranges over the loop's fresh neurons with fresh coefficients
    for nid, coeff in out.terms:
        assert nid.startswith("t")
        assert env.sdnn.var_class[coeff.name] == "X"


def test_solver_summarization(solver_config):
    rz = parse(entry("refinezono").source())
    env = _env(rz, "Affine", Bounds(2, 2), solver_config)
    tdef = [s for s in rz.statements if isinstance(s, TransformerDef)][0]
    before = len(env.sdnn.constraints)
    paths = eval_case_paths(env, tdef.cases["Affine"])
    (conds, values), = paths
    assert isinstance(values[0], SVar)
    assert env.sdnn.var_class[values[0].name] == "X"
    new = env.sdnn.constraints[before:]
    assert any(isinstance(c, SBin) and c.op == "=>" for c in new)
    feas = [c for c in env.checks if c.kind == "solver-feasible"]
    assert len(feas) == 2 and all(c.status == "sat" for c in feas)


def test_expanded_predicate():
    assert expanded(SPoly(sconst(0), (("a", sconst(1)),)))
    assert expanded(SList((sconst(1), SVar("x", "Real"))))
    assert expanded(s_ite(SVar("c", "Bool"), sconst(1), sconst(2)))
