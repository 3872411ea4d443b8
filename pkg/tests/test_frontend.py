"""Parser and pretty-printer: grammar coverage and round-trip properties."""
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from certlang import ast
from certlang.ast import (
    Binary, Const, FnRef, FuncDef, MetadataAccess, ShapeAccess, Ternary,
    TransformerDef, Traverse, Var, Flow,
)
from certlang.lexer import ParseError, tokenize
from certlang.parser import parse, parse_expression
from certlang.printer import pretty_print, print_expr


MINIMAL = "Def shape as (Real l){true};"


def test_minimal_shape():
    p = parse(MINIMAL)
    assert p.shape.members == [("l", ast.REAL)]
    assert p.shape.property == Const(True)
    assert p.statements == []


def test_func_def_metadata_access():
    p = parse(MINIMAL + "\nFunc priority(Neuron n) = n[layer];")
    fn = p.statements[0]
    assert isinstance(fn, FuncDef)
    assert fn.name == "priority"
    assert fn.params == [(ast.NEURON, "n")]
    assert fn.body == MetadataAccess(Var("n"), "layer")


def test_weight_bias_aliases():
    e = parse_expression("curr[w]")
    assert e == MetadataAccess(Var("curr"), "weight")
    e = parse_expression("curr[b]")
    assert e == MetadataAccess(Var("curr"), "bias")
    e = parse_expression("curr[L]")
    assert e == ShapeAccess(Var("curr"), "L")


def test_precedence():
    e = parse_expression("1 + 2 * 3")
    assert e == Binary("+", Const(Fraction(1)), Binary("*", Const(Fraction(2)),
                                                       Const(Fraction(3))))
    e = parse_expression("a and b <= c")
    assert isinstance(e, Binary) and e.op == "and"
    e = parse_expression("x ? 1 : y ? 2 : 3")
    assert isinstance(e, Ternary) and isinstance(e.other, Ternary)


def test_left_associative_arithmetic():
    e = parse_expression("1 - 2 - 3")
    assert e == Binary("-", Binary("-", Const(Fraction(1)), Const(Fraction(2))),
                       Const(Fraction(3)))


def test_constant_folding_of_literals():
    assert parse_expression("-5") == Const(Fraction(-5))
    assert parse_expression("1/3") == Const(Fraction(1, 3))
    assert parse_expression("-1/3") == Const(Fraction(-1, 3))
    # non-literal division stays an operation
    assert isinstance(parse_expression("x/3"), Binary)


def test_duplicate_shape_member_rejected():
    with pytest.raises(ParseError):
        parse("Def shape as (Real l, Int l){true};")


def test_member_metadata_collision_rejected():
    with pytest.raises(ParseError):
        parse("Def shape as (Real weight){true};")
    with pytest.raises(ParseError):
        parse("Def shape as (Real w){true};")


def test_parse_error_carries_position():
    try:
        parse("Def shape as (Real l){true}")
        assert False
    except ParseError as exc:
        assert exc.line == 1 and exc.col > 20


def test_guarded_return_tree():
    src = "Def shape as (Real l, Real u){true};" + """
Transformer T{
    ReLU -> (prev[l] >= 0) ? (prev[l], prev[u]) : ((prev[u] <= 0) ? (0, 0) : (0, prev[u]));
}
"""
    p = parse(src)
    t = p.statements[0]
    assert isinstance(t, TransformerDef)
    leaves = ast.ret_leaves(t.cases["ReLU"])
    assert len(leaves) == 3


def test_case_insensitive_op_names():
    src = MINIMAL + "\nTransformer T{ Maxpool -> (1); Relu -> (2); }"
    p = parse(src)
    assert list(p.statements[0].cases) == ["MaxPool", "ReLU"]


def test_negated_priority_and_const_stop():
    src = (MINIMAL
           + "\nFunc priority(Neuron n) = n[layer];"
           + "\nTransformer T{ ReLU -> (1); }"
           + "\nFlow(forward, -priority, false, T);")
    p = parse(src)
    flow = p.statements[-1]
    assert isinstance(flow, Flow)
    assert flow.priority == FnRef("neg", "priority")
    assert flow.stop == FnRef("const", value=False)


def test_traverse_requires_variable():
    with pytest.raises(ParseError):
        parse_expression("(x + 1).traverse(backward, f, g, h){true}")


def test_comments():
    p = parse("// leading comment\n" + MINIMAL + " // trailing\n")
    assert p.shape.member_names == ["l"]


def test_list_literals():
    e = parse_expression("min([a*b, 1, 2])")
    assert e.op == "min"
    assert len(e.operand.items) == 3


def test_corpus_round_trip(corpus_entries):
    for entry in corpus_entries:
        p1 = parse(entry.source())
        text = pretty_print(p1)
        p2 = parse(text)
        assert p2.shape == p1.shape, entry.name
        assert p2.statements == p1.statements, entry.name


def test_parse_totality_on_junk():
    for junk in ["", "Def", "@@@", "Def shape as (Real l){true}; Func f(",
                 "Def shape as (Real l){true}; Transformer T{X -> }"]:
        with pytest.raises(ParseError):
            parse(junk)


# --- randomized round-trip -------------------------------------------------

_names = st.sampled_from(["a", "b", "curr", "prev", "n0"])
_consts = st.one_of(
    st.booleans().map(Const),
    st.integers(-50, 50).map(lambda v: Const(Fraction(v))),
    st.fractions(min_value=-4, max_value=4).map(Const),
)


def _exprs():
    base = st.one_of(_consts, _names.map(Var), st.just(ast.SymFresh()))

    def extend(children):
        return st.one_of(
            st.tuples(st.sampled_from(["+", "-", "*", "/"]), children, children)
              .map(lambda t: Binary(t[0], t[1], t[2])),
            st.tuples(st.sampled_from(["<=", ">=", "==", "<", ">", "<>"]),
                      children, children)
              .map(lambda t: Binary(t[0], t[1], t[2])),
            st.tuples(st.sampled_from(["and", "or"]), children, children)
              .map(lambda t: Binary(t[0], t[1], t[2])),
            st.tuples(children, children, children)
              .map(lambda t: Ternary(t[0], t[1], t[2])),
            st.tuples(children, st.sampled_from(["l", "u", "L"]))
              .map(lambda t: ShapeAccess(t[0], t[1])),
            st.tuples(children, st.sampled_from(["weight", "bias", "layer"]))
              .map(lambda t: MetadataAccess(t[0], t[1])),
        )

    return st.recursive(base, extend, max_leaves=25)


@given(_exprs())
@settings(max_examples=200, deadline=None)
def test_expr_round_trip(e):
    text = print_expr(e)
    parsed = parse_expression(text)
    normalized = parse_expression(print_expr(parsed))
    assert parsed == normalized
    assert parsed == _normalize(e)


def _normalize(e):
    """The parser folds literal negation/division; mirror that."""
    return parse_expression(print_expr(e))


def test_span_coverage(corpus_entries):
    for entry in corpus_entries:
        src = entry.source()
        lines = src.splitlines()
        p = parse(src)

        def check(expr):
            s = expr.span
            assert 1 <= s.line <= len(lines)
            assert s.col >= 1
            for child in vars(expr).values():
                if isinstance(child, ast.Expr):
                    check(child)
                elif isinstance(child, list):
                    for item in child:
                        if isinstance(item, ast.Expr):
                            check(item)

        check(p.shape.property)
        for stmt in p.statements:
            if isinstance(stmt, FuncDef):
                check(stmt.body)
