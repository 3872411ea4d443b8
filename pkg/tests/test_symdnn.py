"""Symbolic network templates: creation, expansion, variable classes."""
import random
from fractions import Fraction

import pytest

from certlang.parser import parse
from certlang.corpus import entry
from certlang.symdnn import Bounds, UnsupportedOp
from certlang.symexec import make_symbolic_dnn
from certlang.symval import SPoly, SSym, SVar
from certlang.smtenc import Encoder
from certlang.formula import conj, free_vars

F = Fraction

DP_SRC = entry("deeppoly").source()


@pytest.fixture(scope="module")
def dp():
    return parse(DP_SRC)


def test_relu_template_variable_count(dp):
    # two neurons, one value variable and four member placeholders each
    sdnn = make_symbolic_dnn(dp, "ReLU", Bounds(2, 2))
    assert sdnn.prevs == ["p00"]
    names = set(sdnn.var_sort)
    assert len(names) == 10
    assert sum(1 for n in names if sdnn.var_class[n] == "Y") == 2   # values
    assert sum(1 for n in names if sdnn.var_class[n] == "X") == 4   # l, u
    assert sum(1 for n in names if sdnn.var_class[n] == "Z") == 4   # L, U


def test_relu_constraint_groups(dp):
    sdnn = make_symbolic_dnn(dp, "ReLU", Bounds(2, 2))
    # property for curr, property for prev, and the operation relation
    assert len(sdnn.constraints) == 3


def test_vacuous_property_add():
    p = parse("Def shape as (Real l){true};\nTransformer T{ Add -> (1); }")
    sdnn = make_symbolic_dnn(p, "Add", Bounds(2, 2))
    from certlang.symval import SConst
    nontrivial = [c for c in sdnn.constraints if c != SConst(True)]
    assert len(nontrivial) == 1  # the operation relation only


def test_affine_template_counts(dp):
    n = 3
    sdnn = make_symbolic_dnn(dp, "Affine", Bounds(n, n))
    assert len(sdnn.prevs) == n
    # values for curr+prevs, four members each, plus the weights and bias the
    # operation relation reads from curr
    assert len(sdnn.var_sort) == (n + 1) * 5 + n + 1
    w = sdnn.metadata("curr", "weight")
    assert len(w.items) == n
    assert all(sdnn.var_class[v.name] == "X" for v in w.items)


def test_expand_member_poly(dp):
    sdnn = make_symbolic_dnn(dp, "ReLU", Bounds(2, 2))
    before_neurons = list(sdnn.neurons)
    before_constraints = len(sdnn.constraints)
    old = sdnn.member("p00", "U")
    assert isinstance(old, SVar)
    sdnn.expand_member("p00", "U")
    new = sdnn.member("p00", "U")
    assert isinstance(new, SPoly)
    assert len(new.terms) == 2
    added = [n for n in sdnn.neurons if n not in before_neurons]
    assert len(added) == 2
    # each fresh neuron assumes the property; one defining equality
    assert len(sdnn.constraints) == before_constraints + 2 + 1
    # coefficients are constants, fresh neurons are values
    for _, coeff in new.terms:
        assert sdnn.var_class[coeff.name] == "X"
    for nid in added:
        assert sdnn.var_class[sdnn.value_var(nid).name] == "Y"


def test_expand_member_idempotent(dp):
    sdnn = make_symbolic_dnn(dp, "ReLU", Bounds(2, 2))
    sdnn.expand_member("p00", "U")
    snapshot = (list(sdnn.neurons), len(sdnn.constraints), sdnn.member("p00", "U"))
    sdnn.expand_member("p00", "U")
    assert (list(sdnn.neurons), len(sdnn.constraints), sdnn.member("p00", "U")) == snapshot


def test_expand_noise_member_shares_pool():
    p = parse(entry("deepz").source())
    sdnn = make_symbolic_dnn(p, "ReLU", Bounds(2, 2))
    sdnn.expand_member("curr", "z")
    sdnn.expand_member("p00", "z")
    a = sdnn.member("curr", "z")
    b = sdnn.member("p00", "z")
    assert isinstance(a, SSym) and isinstance(b, SSym)
    assert [k for k, _ in a.terms] == [k for k, _ in b.terms]  # shared pool


def test_expansion_monotone(dp):
    sdnn = make_symbolic_dnn(dp, "Affine", Bounds(2, 2))
    table_before = dict(sdnn.table)
    constraints_before = list(sdnn.constraints)
    sdnn.expand_member("p00", "L")
    sdnn.expand_member("p01", "U")
    for key, val in table_before.items():
        if key in (("p00", "L"), ("p01", "U")):
            continue
        assert sdnn.table[key] == val
    assert sdnn.constraints[:len(constraints_before)] == constraints_before


def test_unsupported_ops(dp):
    with pytest.raises(UnsupportedOp):
        make_symbolic_dnn(dp, "Sigmoid", Bounds(2, 2))


def test_over_approximation_by_substitution(dp, solver_config):
    """A random concrete fragment yields an assignment satisfying the
    template constraints, before and after expansion."""
    from certlang.solver import SolverSession
    from certlang import formula as Fm

    rng = random.Random(5)
    sdnn = make_symbolic_dnn(dp, "ReLU", Bounds(2, 2))
    enc = Encoder(sdnn)
    terms = [enc.assume(c) for c in sdnn.constraints]
    sdnn.expand_member("p00", "U")
    terms2 = [enc.assume(c) for c in sdnn.constraints]

    for _ in range(10):
        # concrete fragment: p in [l,u], c = relu(p), valid linear bounds
        p_val = F(rng.randint(-8, 8), 2)
        c_val = max(p_val, F(0))
        eqs = []

        def bind(name, value):
            eqs.append(Fm.app("=", Fm.var(name, "Real"),
                              Fm.const(value, "Real")))

        bind(sdnn.value_var("curr").name, c_val)
        bind(sdnn.value_var("p00").name, p_val)
        for nid, val in (("curr", c_val), ("p00", p_val)):
            for member, offset in (("l", F(-1)), ("u", F(1))):
                sv = sdnn.member(nid, member)
                bind(sv.name, val + offset)
        r = SolverSession(solver_config).check(terms2 + eqs, get_model=False)
        assert r.status == "sat"


def test_debug_dump_golden(dp):
    sdnn = make_symbolic_dnn(dp, "ReLU", Bounds(2, 2))
    text = sdnn.dump()
    assert "curr.<value> = mu_y_0" in text
    assert "curr.l = mu_x_0" in text
    assert "p00.U = mu_z_3" in text
    assert "constraints:" in text
    # the operation relation over the two neurons
    assert "((p00 <= 0) => (curr == 0))" in text.split("constraints:")[1]


def test_eager_expansion_api(dp):
    from certlang.symexec import SymEnv, case_bindings, expand_for_expr
    from certlang.parser import parse_expression
    from certlang.ast import FuncDef
    sdnn = make_symbolic_dnn(dp, "ReLU", Bounds(2, 2))
    functions = {s.name: s for s in dp.statements if isinstance(s, FuncDef)}
    env = SymEnv(sdnn, functions, case_bindings(sdnn, "ReLU"), None)
    # a polyhedral member under map expands; a numeric member never does
    expand_for_expr(env, parse_expression("prev[U].map(simplify_lower)"))
    assert sdnn.is_expanded("p00", "U")
    before = dict(sdnn.table)
    expand_for_expr(env, parse_expression("curr[l] + 1"))
    assert sdnn.table == before
    expand_for_expr(env, parse_expression("prev[U].map(simplify_lower)"))
    assert sdnn.table.keys() == before.keys()  # idempotent
