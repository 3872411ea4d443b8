"""Concrete evaluation: value operations, traverse, flow, solver calls."""
from fractions import Fraction

import pytest

from certlang.ast import FuncDef, Flow
from certlang.dnn import load_dnn_dict
from certlang.interp import Env, build_env, eval_expr, run_flow, run_program
from certlang.parser import parse, parse_expression
from certlang.typecheck import check_program
from certlang.values import Affine, RuntimeErrorCF, poly_var, value_str

F = Fraction

DP = """
Def shape as (Real l, Real u, PolyExp L, PolyExp U){(curr[l] <= curr) and (curr[u] >= curr) and (curr[L] <= curr) and (curr[U] >= curr)};
Func simplify_lower(Neuron n, Real c) = (c >= 0) ? (c * n[l]) : (c * n[u]);
Func simplify_upper(Neuron n, Real c) = (c >= 0) ? (c * n[u]) : (c * n[l]);
Func replace_lower(Neuron n, Real c) = (c >= 0) ? (c * n[L]) : (c * n[U]);
Func replace_upper(Neuron n, Real c) = (c >= 0) ? (c * n[U]) : (c * n[L]);
Func priority(Neuron n) = n[layer];
Func priority2(Neuron n) = -n[layer];
Func backsubs_lower(PolyExp e, Neuron n) = (e.traverse(backward, priority, false, replace_lower){e <= n}).map(simplify_lower);
Func backsubs_upper(PolyExp e, Neuron n) = (e.traverse(backward, priority, false, replace_upper){e >= n}).map(simplify_upper);
Transformer DeepPoly{
  Affine -> (backsubs_lower(prev.dot(curr[w]) + curr[b], curr), backsubs_upper(prev.dot(curr[w]) + curr[b], curr), prev.dot(curr[w]) + curr[b], prev.dot(curr[w]) + curr[b]);
  ReLU -> (prev[l] >= 0) ? (prev[l], prev[u], prev, prev) : ((prev[u] <= 0) ? (0, 0, 0, 0) : (0, prev[u], 0, ((prev[u] / (prev[u] - prev[l])) * prev) - ((prev[u] * prev[l]) / (prev[u] - prev[l]))));
}
Flow(forward, priority2, false, DeepPoly);
"""


@pytest.fixture(scope="module")
def dp_program():
    p = parse(DP)
    check_program(p)
    return p


def _toy(shape=("l", "u", "L", "U")):
    def init(lo, hi):
        vals = {"l": lo, "u": hi, "L": lo, "U": hi}
        return {m: vals[m] for m in shape}
    return load_dnn_dict({"neurons": [
        {"id": "x1", "op": "Input", "layer": 0, "shape_init": init(-1, 1)},
        {"id": "x2", "op": "Input", "layer": 0, "shape_init": init(-1, 1)},
        {"id": "n3", "op": "Affine", "layer": 1, "inputs": ["x1", "x2"],
         "weight": [1, 1], "bias": 0},
        {"id": "n4", "op": "ReLU", "layer": 2, "inputs": ["n3"]},
    ]})


def test_deeppoly_toy_hand_oracle(dp_program):
    net = _toy()
    run_program(dp_program, net, check_value_types=True)
    n3 = net.neurons["n3"].shape
    assert (n3["l"], n3["u"]) == (F(-2), F(2))
    assert n3["L"] == Affine.make("neuron", F(0), {"x1": F(1), "x2": F(1)})
    n4 = net.neurons["n4"].shape
    assert (n4["l"], n4["u"]) == (F(0), F(2))
    assert n4["L"] == F(0)
    # u/(u-l) * n3 - u*l/(u-l) with l=-2, u=2
    assert n4["U"] == Affine.make("neuron", F(1), {"n3": F(1, 2)})


def test_backsubstitution_reaches_inputs(dp_program):
    # two affine layers: backsubstitution rewrites middle neurons away
    net = load_dnn_dict({"neurons": [
        {"id": "x1", "op": "Input", "layer": 0,
         "shape_init": {"l": -1, "u": 1, "L": -1, "U": 1}},
        {"id": "m1", "op": "Affine", "layer": 1, "inputs": ["x1"],
         "weight": [2], "bias": 1},
        {"id": "o1", "op": "Affine", "layer": 2, "inputs": ["m1"],
         "weight": [-1], "bias": 0},
    ]})
    run_program(dp_program, net)
    o1 = net.neurons["o1"].shape
    # o1 = -(2 x1 + 1): range [-3, 1]
    assert (o1["l"], o1["u"]) == (F(-3), F(1))


def test_compare_excludes_self():
    src = ("Def shape as (Real l, Real u){(curr[l] <= curr) and (curr[u] >= curr)};\n"
           "Func f(Neuron n1, Neuron n2) = n1[l] >= n2[u];")
    p = parse(src)
    check_program(p)
    net = load_dnn_dict({"neurons": [
        {"id": "n1", "op": "Input", "layer": 0, "shape_init": {"l": 0, "u": 1}},
        {"id": "n2", "op": "Input", "layer": 0, "shape_init": {"l": 1, "u": 2}},
        {"id": "n3", "op": "Input", "layer": 0, "shape_init": {"l": 2, "u": 3}},
    ]})
    env = build_env(p)
    env.rho["xs"] = tuple(poly_var(n) for n in ("n1", "n2", "n3"))
    out = eval_expr(env, net, parse_expression("compare(xs, f)"))
    assert out == (poly_var("n3"),)


def test_compare_keeps_ties():
    src = ("Def shape as (Real l, Real u){(curr[l] <= curr) and (curr[u] >= curr)};\n"
           "Func f(Neuron n1, Neuron n2) = n1[l] >= n2[u];")
    p = parse(src)
    net = load_dnn_dict({"neurons": [
        {"id": "n1", "op": "Input", "layer": 0, "shape_init": {"l": 1, "u": 1}},
        {"id": "n2", "op": "Input", "layer": 0, "shape_init": {"l": 1, "u": 1}},
    ]})
    env = build_env(p)
    env.rho["xs"] = (poly_var("n1"), poly_var("n2"))
    out = eval_expr(env, net, parse_expression("compare(xs, f)"))
    assert out == (poly_var("n1"), poly_var("n2"))
    avg = eval_expr(env, net, parse_expression("avg(compare(xs, f))"))
    assert avg == Affine.make("neuron", F(0), {"n1": F(1, 2), "n2": F(1, 2)})


def test_map_over_constant(dp_program):
    env = build_env(dp_program)
    env.rho["v"] = F(5)
    net = _toy()
    out = eval_expr(env, net, parse_expression("v.map(simplify_lower)"))
    assert out == F(5)


def test_traverse_over_inputs_is_identity(dp_program):
    net = _toy()
    env = build_env(dp_program)
    env.rho["e"] = Affine.make("neuron", F(1), {"x1": F(2)})
    env.rho["n"] = poly_var("x1")
    body = [s for s in dp_program.statements
            if isinstance(s, FuncDef) and s.name == "backsubs_lower"][0].body
    # the traverse inside backsubs: inputs are dropped from the active set
    out = eval_expr(env, net, body.operand)
    assert out == env.rho["e"]


def test_flow_stop_true_is_noop(dp_program):
    src = DP.replace("Flow(forward, priority2, false, DeepPoly);",
                     "Flow(forward, priority2, true, DeepPoly);")
    p = parse(src)
    check_program(p)
    net = _toy()
    before = {nid: dict(rec.shape) for nid, rec in net.neurons.items()}
    run_program(p, net)
    after = {nid: dict(rec.shape) for nid, rec in net.neurons.items()}
    assert before == after


def test_missing_case_raises(dp_program):
    net = load_dnn_dict({"neurons": [
        {"id": "x1", "op": "Input", "layer": 0,
         "shape_init": {"l": 0, "u": 1, "L": 0, "U": 1}},
        {"id": "m", "op": "Max", "layer": 1, "inputs": ["x1", "x1"]},
    ]}) if False else None
    # Max needs two distinct inputs; build with two inputs
    net = load_dnn_dict({"neurons": [
        {"id": "x1", "op": "Input", "layer": 0,
         "shape_init": {"l": 0, "u": 1, "L": 0, "U": 1}},
        {"id": "x2", "op": "Input", "layer": 0,
         "shape_init": {"l": 0, "u": 1, "L": 0, "U": 1}},
        {"id": "m", "op": "Max", "layer": 1, "inputs": ["x1", "x2"]},
    ]})
    with pytest.raises(RuntimeErrorCF) as err:
        run_program(dp_program, net)
    assert err.value.kind == "MissingCase"


def test_determinism(dp_program):
    net1, net2 = _toy(), _toy()
    run_program(dp_program, net1)
    run_program(dp_program, net2)
    assert {n: r.shape for n, r in net1.neurons.items()} == \
           {n: r.shape for n, r in net2.neurons.items()}


def test_division_by_zero_surfaces():
    src = ("Def shape as (Real l, Real u){(curr[l] <= curr) and (curr[u] >= curr)};\n"
           "Transformer T{ ReLU -> (prev[l] / (prev[u] - prev[u]), prev[u]); }\n"
           "Func p(Neuron n) = n[layer];\nFlow(forward, p, false, T);")
    p = parse(src)
    net = load_dnn_dict({"neurons": [
        {"id": "x", "op": "Input", "layer": 0, "shape_init": {"l": 0, "u": 1}},
        {"id": "r", "op": "ReLU", "layer": 1, "inputs": ["x"]},
    ]})
    with pytest.raises(RuntimeErrorCF) as err:
        run_program(p, net)
    assert err.value.kind == "DivisionByZero"


def test_fresh_noise_symbols_are_distinct():
    src = "Def shape as (Real l){true};"
    p = parse(src)
    env = build_env(p)
    net = load_dnn_dict({"neurons": [{"id": "x", "op": "Input", "layer": 0}]})
    v = eval_expr(env, net, parse_expression("sym + sym"))
    assert len(v.terms) == 2


# --- solver construct (needs the SMT backend) --------------------------------

def test_solver_minimize_direct(solver_config):
    src = "Def shape as (Real l){true};"
    p = parse(src)
    env = build_env(p, solver_config=solver_config)
    net = load_dnn_dict({"neurons": [{"id": "n1", "op": "Input", "layer": 0}]})
    env.rho["n"] = poly_var("n1")
    out = eval_expr(env, net, parse_expression(
        "solver(minimize, n, (2 <= n) and (n <= 5))"))
    assert out == F(2)


def test_solver_box_vertex(solver_config):
    src = "Def shape as (Real l){true};"
    p = parse(src)
    env = build_env(p, solver_config=solver_config)
    net = load_dnn_dict({"neurons": [
        {"id": "n1", "op": "Input", "layer": 0},
        {"id": "n2", "op": "Input", "layer": 0}]})
    env.rho["a"] = poly_var("n1")
    env.rho["b"] = poly_var("n2")
    out = eval_expr(env, net, parse_expression(
        "solver(minimize, a + b, (0 <= a) and (a <= 1) and (0 - 1 <= b) and (b <= 3))"))
    assert out == F(-1)


def test_vegas_backward_refines_bounds(solver_config):
    from certlang.corpus import entry
    p = parse(entry("vegas").source())
    check_program(p)
    # y = x, z = -x with x in [-1, 1]; forward gives y,z in [-1,1].
    # The backward pass solves the affine equations with refined outputs.
    net = load_dnn_dict({"neurons": [
        {"id": "x1", "op": "Input", "layer": 0,
         "shape_init": {"l": -1, "u": 1, "L": -1, "U": 1}},
        {"id": "y1", "op": "Affine", "layer": 1, "inputs": ["x1"],
         "weight": [1], "bias": 0},
        {"id": "y2", "op": "Affine", "layer": 1, "inputs": ["x1"],
         "weight": [-1], "bias": 0},
    ]})
    run_program(p, net, solver_config=solver_config)
    # both flows ran; x1 keeps valid bounds and outputs got forward bounds
    assert net.neurons["y1"].shape["l"] == F(-1)
    assert net.neurons["y2"].shape["u"] == F(1)
    x1 = net.neurons["x1"].shape
    assert x1["l"] == F(-1) and x1["u"] == F(1)
