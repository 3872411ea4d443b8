"""Subtyping lattice and typing judgments."""
import itertools

import pytest

from certlang import ast
from certlang.ast import (
    BOOL, BOT, CT, INT, NEURON, POLYEXP, REAL, SYM, SYMEXP, TOP, TypeExpr,
    list_of,
)
from certlang.lattice import KINDS, is_proper, is_subtype, join
from certlang.parser import parse, parse_expression
from certlang.typecheck import (
    TypeError_, TypingContext, check_program, type_of_expr,
)

ALL = [TypeExpr(k) for k in KINDS]


def test_join_examples():
    assert join(INT, REAL) == REAL
    assert join(NEURON, SYM) == TOP
    assert join(INT, NEURON) == POLYEXP
    assert join(BOOL, POLYEXP) == TOP
    assert join(BOOL, CT) == CT
    assert join(REAL, SYM) == SYMEXP


# frozen 10x10 join table computed from the Hasse diagram by hand before
# implementation; order: Bot Bool Sym Int Neuron Real Ct SymExp PolyExp Top
_TABLE = {
    ("Bot", "Bot"): "Bot", ("Bot", "Bool"): "Bool", ("Bot", "Sym"): "Sym",
    ("Bot", "Int"): "Int", ("Bot", "Neuron"): "Neuron", ("Bot", "Real"): "Real",
    ("Bot", "Ct"): "Ct", ("Bot", "SymExp"): "SymExp", ("Bot", "PolyExp"): "PolyExp",
    ("Bool", "Bool"): "Bool", ("Bool", "Sym"): "Top", ("Bool", "Int"): "Top",
    ("Bool", "Neuron"): "Top", ("Bool", "Real"): "Top", ("Bool", "Ct"): "Ct",
    ("Bool", "SymExp"): "Top", ("Bool", "PolyExp"): "Top",
    ("Sym", "Sym"): "Sym", ("Sym", "Int"): "SymExp", ("Sym", "Neuron"): "Top",
    ("Sym", "Real"): "SymExp", ("Sym", "Ct"): "Top", ("Sym", "SymExp"): "SymExp",
    ("Sym", "PolyExp"): "Top",
    ("Int", "Int"): "Int", ("Int", "Neuron"): "PolyExp", ("Int", "Real"): "Real",
    ("Int", "Ct"): "Top", ("Int", "SymExp"): "SymExp", ("Int", "PolyExp"): "PolyExp",
    ("Neuron", "Neuron"): "Neuron", ("Neuron", "Real"): "PolyExp",
    ("Neuron", "Ct"): "Top", ("Neuron", "SymExp"): "Top",
    ("Neuron", "PolyExp"): "PolyExp",
    ("Real", "Real"): "Real", ("Real", "Ct"): "Top",
    ("Real", "SymExp"): "SymExp", ("Real", "PolyExp"): "PolyExp",
    ("Ct", "Ct"): "Ct", ("Ct", "SymExp"): "Top", ("Ct", "PolyExp"): "Top",
    ("SymExp", "SymExp"): "SymExp", ("SymExp", "PolyExp"): "Top",
    ("PolyExp", "PolyExp"): "PolyExp",
}


def test_join_table_exhaustive():
    for a, b in itertools.product(KINDS, repeat=2):
        want = _TABLE.get((a, b)) or _TABLE.get((b, a)) or "Top"
        if a == "Top" or b == "Top":
            want = "Top"
        assert join(TypeExpr(a), TypeExpr(b)).kind == want, (a, b)


def test_join_semilattice_laws():
    for a, b in itertools.product(ALL, repeat=2):
        assert join(a, b) == join(b, a)
        assert join(a, a) == a
    for a, b, c in itertools.product(ALL, repeat=3):
        assert join(join(a, b), c) == join(a, join(b, c))


def test_partial_order():
    for a in ALL:
        assert is_subtype(a, a)
    for a, b in itertools.product(ALL, repeat=2):
        if is_subtype(a, b) and is_subtype(b, a):
            assert a == b
    for a, b, c in itertools.product(ALL, repeat=3):
        if is_subtype(a, b) and is_subtype(b, c):
            assert is_subtype(a, c)


def test_join_is_least_upper_bound():
    for a, b in itertools.product(ALL, repeat=2):
        j = join(a, b)
        assert is_subtype(a, j) and is_subtype(b, j)
        for c in ALL:
            if is_subtype(a, c) and is_subtype(b, c):
                assert is_subtype(j, c)


def test_list_types():
    assert join(list_of(INT), list_of(REAL)) == list_of(REAL)
    assert join(list_of(INT), INT) == TOP
    assert is_subtype(list_of(NEURON), list_of(POLYEXP))


# --- expression typing -------------------------------------------------------

_DP_SHAPE = ("Def shape as (Real l, Real u, PolyExp L, PolyExp U)"
             "{(curr[l] <= curr) and (curr[u] >= curr) and "
             "(curr[L] <= curr) and (curr[U] >= curr)};")


def _ctx():
    p = parse(_DP_SHAPE)
    from certlang.typecheck import check_shape
    tau = check_shape(p.shape)
    return TypingContext({"curr": NEURON}, tau)


def _type(src, ctx=None):
    return type_of_expr(ctx or _ctx(), parse_expression(src))


def test_basic_expr_types():
    assert _type("1 + 2") == INT
    assert _type("1 + 2.5") == REAL
    assert _type("1 / 2") == REAL         # folds to the literal 0.5
    assert _type("4 / 2") == INT          # folds to the literal 2
    assert _type("curr[l]") == REAL
    assert _type("curr[L]") == POLYEXP
    assert _type("curr[layer]") == INT
    assert _type("curr[w]") == list_of(REAL)
    assert _type("sym") == SYM
    assert _type("2 * sym") == SYMEXP


def test_comparisons():
    assert _type("1 <= 2") == BOOL
    assert _type("curr[l] <= curr") == CT
    assert _type("curr[L] <= curr") == CT
    assert _type("curr <> (2 * sym)") == CT
    with pytest.raises(TypeError_):
        _type("true <= 1")


def test_bool_ct_mixing():
    assert _type("(1 <= 2) and (2 <= 3)") == BOOL
    assert _type("(curr[l] <= curr) and (1 <= 2)") == CT


def test_ternary_requires_bool():
    assert _type("(1 <= 2) ? 1 : 2.5") == REAL
    with pytest.raises(TypeError_) as err:
        _type("(curr[l] <= curr) ? 1 : 2")
    assert err.value.rule == "T-ternary"


def test_mult_needs_scalar_side():
    assert _type("2 * curr") == POLYEXP
    with pytest.raises(TypeError_) as err:
        _type("curr * curr")
    assert err.value.rule == "T-binary-mult"


def test_division_rules():
    assert _type("curr[L] / 2") == POLYEXP
    with pytest.raises(TypeError_):
        _type("2 / curr[L]")


def test_map_aggregate_type(deeppoly_program):
    # a Real-returning body aggregates to Real; a polyhedral body stays wide
    from certlang.typecheck import check_program
    ctx = check_program(deeppoly_program)
    inner = ctx.child(curr=NEURON, prev=list_of(NEURON))
    e = parse_expression("(prev.dot(curr[w]) + curr[b]).map(simplify_lower)")
    assert type_of_expr(inner, e) == REAL
    e = parse_expression("(prev.dot(curr[w]) + curr[b]).map(replace_lower)")
    assert type_of_expr(inner, e) == POLYEXP


def test_fig1_member_joins(deeppoly_program):
    from certlang.typecheck import check_program
    ctx = check_program(deeppoly_program)
    t = ctx.gamma["DeepPoly"]
    assert [x.kind for x in t.member_types] == ["Real", "Real", "PolyExp", "PolyExp"]


def test_arity_mismatch():
    src = _DP_SHAPE + "\nTransformer T{ ReLU -> (1, 2); }"
    with pytest.raises(TypeError_) as err:
        check_program(parse(src))
    assert err.value.rule == "T-transformer-ret-1"


def test_member_type_violation():
    src = ("Def shape as (Bool l, Real u, PolyExp L, PolyExp U){true};\n"
           "Transformer T{ ReLU -> (prev[u], prev[u], prev, prev); }")
    with pytest.raises(TypeError_):
        check_program(parse(src))


def test_corpus_accepts(corpus_entries):
    for entry in corpus_entries:
        check_program(parse(entry.source()))


def test_corpus_mutants_type_check(corpus_entries):
    # seeded bugs are semantic, never type errors
    for entry in corpus_entries:
        for mutant in entry.mutants:
            check_program(parse(entry.mutant_source(mutant)))


def test_retyped_member_rejected(corpus_entries):
    src = corpus_entries[0].source().replace("Real l", "Bool l", 1)
    with pytest.raises(TypeError_):
        check_program(parse(src))


def test_diagnostic_format():
    src = _DP_SHAPE + "\nFunc f(Neuron n) = n[nope];"
    try:
        check_program(parse(src))
        assert False
    except TypeError_ as exc:
        rendered = exc.render("prog.cf")
        assert rendered.startswith("prog.cf:2:")
        assert "error[T-shape]" in rendered


def test_traverse_rule():
    src = _DP_SHAPE + """
Func priority(Neuron n) = n[layer];
Func stop(Neuron n) = false;
Func rep(Neuron n, Real c) = c * n[L];
Func body(PolyExp e, Neuron n) = (e.traverse(backward, priority, stop, rep){e <= n});
"""
    check_program(parse(src))
    bad = src.replace("Func rep(Neuron n, Real c) = c * n[L];",
                      "Func rep(Neuron n, Real c) = n[l] <= n[u];")
    with pytest.raises(TypeError_) as err:
        check_program(parse(bad))
    assert err.value.rule == "T-traverse"


def test_solver_rule():
    src = _DP_SHAPE + "\nFunc f(Neuron n) = solver(minimize, n, n[l] <= n);"
    check_program(parse(src))
    bad = _DP_SHAPE + "\nFunc f(Neuron n) = solver(minimize, n, n[l]);"
    with pytest.raises(TypeError_) as err:
        check_program(parse(bad))
    assert err.value.rule == "T-solver"


def test_unbound_variable():
    with pytest.raises(TypeError_) as err:
        _type("nope + 1")
    assert err.value.rule == "T-var"


def test_empty_program_ok():
    ctx = check_program(parse(_DP_SHAPE))
    from certlang.typecheck import BUILTIN_GAMMA
    assert set(ctx.gamma) == set(BUILTIN_GAMMA)
