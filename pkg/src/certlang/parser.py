"""Recursive-descent parser producing a resolved Program AST.

Precedence, lowest to highest: ternary, and/or, comparisons, +/-, * and /,
unary, postfix (indexing and method calls). Binary arithmetic is
left-associative.
"""
from __future__ import annotations

from fractions import Fraction

from .ast import (
    BASE_KINDS, Binary, Call, CompareOp, Concat, Const, Dot, Expr, Flow, FnRef,
    FuncDef, ListLit, ListOp, Map, MapList, MetadataAccess, MinMax2, Program,
    RetGuard, RetNode, RetTuple, ShapeAccess, ShapeDecl, Solver, Span,
    Statement, SymFresh, Ternary, TransformerDef, Traverse, TypeExpr, Unary,
    Var, list_of, resolve_metadata,
)
from .lexer import ParseError, Token, tokenize

# Canonical spellings for DNN operation labels; transformer case keys are
# matched case-insensitively because source listings vary (Relu, Maxpool, ...).
DNN_OPS = [
    "Affine", "ReLU", "MaxPool", "Max", "Min", "Add", "Mult",
    "Sigmoid", "Tanh", "DotProduct",
]
_CANON_OPS = {name.lower(): name for name in DNN_OPS}

COMPARISON_OPS = ("<=", ">=", "==", "<", ">", "<>")
LIST_OP_NAMES = ("max", "min", "sum", "avg", "len")


def canonical_op(name: str) -> str:
    low = name.lower()
    if low.startswith("rev_"):
        base = _CANON_OPS.get(low[4:])
        if base is not None:
            return "rev_" + base
    return _CANON_OPS.get(low, name)


class Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token helpers ------------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            tok = self.peek()
            self.pos += 1
            return tok
        return None

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.accept(kind, text)
        if tok is None:
            got = self.peek()
            want = text or kind
            raise ParseError(f"unexpected {got.text!r}", got.line, got.col, {want})
        return tok

    def span_of(self, tok: Token) -> Span:
        return Span(tok.line, tok.col, tok.line, tok.col + max(len(tok.text), 1))

    # -- program ------------------------------------------------------------

    def parse_program(self) -> Program:
        shape = self.parse_shape_decl()
        statements: list[Statement] = []
        while not self.at("eof"):
            statements.append(self.parse_statement())
        return Program(shape, statements)

    def parse_shape_decl(self) -> ShapeDecl:
        start = self.expect("keyword", "Def")
        self.expect("keyword", "shape")
        self.expect("keyword", "as")
        self.expect("(")
        members: list[tuple[str, TypeExpr]] = []
        while True:
            t = self.parse_type()
            name = self.expect("ident").text
            if any(n == name for n, _ in members):
                tok = self.peek(-1)
                raise ParseError(f"duplicate shape member {name!r}", tok.line, tok.col)
            if resolve_metadata(name) is not None or name == "layer" or name == "equations":
                tok = self.peek(-1)
                raise ParseError(
                    f"shape member {name!r} collides with a metadata name", tok.line, tok.col)
            members.append((name, t))
            if not self.accept(","):
                break
        self.expect(")")
        self.expect("{")
        prop = self.parse_expr()
        end = self.expect("}")
        self.expect(";")
        return ShapeDecl(members, prop, self.span_of(start).to(self.span_of(end)))

    def parse_type(self) -> TypeExpr:
        tok = self.peek()
        if tok.kind == "keyword" and tok.text in BASE_KINDS:
            self.pos += 1
            base = TypeExpr(tok.text)
            if self.accept("["):
                self.expect("]")
                return list_of(base)
            return base
        raise ParseError(f"expected a type, got {tok.text!r}", tok.line, tok.col,
                         set(BASE_KINDS))

    # -- statements ---------------------------------------------------------

    def parse_statement(self) -> Statement:
        tok = self.peek()
        if self.at("keyword", "Func"):
            return self.parse_func_def()
        if self.at("keyword", "Transformer"):
            return self.parse_transformer_def()
        if self.at("keyword", "Flow"):
            return self.parse_flow()
        raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col,
                         {"Func", "Transformer", "Flow"})

    def parse_func_def(self) -> FuncDef:
        start = self.expect("keyword", "Func")
        name = self.expect("ident").text
        self.expect("(")
        params: list[tuple[TypeExpr, str]] = []
        if not self.at(")"):
            while True:
                t = self.parse_type()
                pname = self.expect("ident").text
                params.append((t, pname))
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect("=")
        body = self.parse_expr()
        end = self.expect(";")
        return FuncDef(name, params, body, self.span_of(start).to(self.span_of(end)))

    def parse_transformer_def(self) -> TransformerDef:
        start = self.expect("keyword", "Transformer")
        name = self.expect("ident").text
        # Optional explicit (curr, prev) parameter list appears in some
        # listings; the names are fixed, so it is accepted and ignored.
        if self.accept("("):
            while not self.at(")") and not self.at("eof"):
                self.pos += 1
            self.expect(")")
        self.expect("{")
        cases: dict[str, RetNode] = {}
        while not self.at("}"):
            op_tok = self.peek()
            if op_tok.kind not in ("ident", "keyword"):
                raise ParseError(f"expected a DNN operation name, got {op_tok.text!r}",
                                 op_tok.line, op_tok.col)
            self.pos += 1
            op = canonical_op(op_tok.text)
            if op in cases:
                raise ParseError(f"duplicate transformer case for {op}", op_tok.line, op_tok.col)
            self.expect("->")
            cases[op] = self.parse_ret_node()
            self.expect(";")
        end = self.expect("}")
        return TransformerDef(name, cases, self.span_of(start).to(self.span_of(end)))

    def parse_ret_node(self) -> RetNode:
        start_tok = self.peek()
        if self.at("("):
            saved = self.pos
            tup = self.try_parse_tuple()
            if tup is not None:
                return tup
            self.pos = saved
            # A parenthesized guard tree: ((e) ? (...) : (...))
            try:
                self.expect("(")
                node = self.parse_ret_node()
                self.expect(")")
                return node
            except ParseError:
                self.pos = saved
        cond = self.parse_expr(no_ternary=True)
        self.expect("?")
        then = self.parse_ret_node()
        self.expect(":")
        other = self.parse_ret_node()
        return RetGuard(cond, then, other, self.span_of(start_tok))

    def try_parse_tuple(self) -> RetTuple | None:
        """Parse '(' e1, ..., en ')' as a return tuple, or backtrack.

        A single parenthesized expression is only a 1-tuple when it is
        terminated (next token ends the case); otherwise it was a
        parenthesized guard condition.
        """
        start = self.expect("(")
        try:
            exprs = [self.parse_expr()]
            while self.accept(","):
                exprs.append(self.parse_expr())
            self.expect(")")
        except ParseError:
            return None
        if len(exprs) == 1 and not (self.at(";") or self.at(":")):
            return None
        if self.at("?"):
            return None
        return RetTuple(exprs, self.span_of(start))

    def parse_flow(self) -> Flow:
        start = self.expect("keyword", "Flow")
        self.expect("(")
        d = self.peek()
        if self.accept("keyword", "forward"):
            direction = "forward"
        elif self.accept("keyword", "backward"):
            direction = "backward"
        else:
            raise ParseError(f"unexpected {d.text!r}", d.line, d.col, {"forward", "backward"})
        self.expect(",")
        priority = self.parse_fn_ref()
        self.expect(",")
        stop = self.parse_fn_ref()
        self.expect(",")
        transformer = self.expect("ident").text
        self.expect(")")
        end = self.expect(";")
        return Flow(direction, priority, stop, transformer,
                    self.span_of(start).to(self.span_of(end)))

    def parse_fn_ref(self) -> FnRef:
        tok = self.peek()
        if self.accept("keyword", "true"):
            return FnRef("const", value=True, span=self.span_of(tok))
        if self.accept("keyword", "false"):
            return FnRef("const", value=False, span=self.span_of(tok))
        if self.accept("-"):
            name = self.expect("ident").text
            return FnRef("neg", name, span=self.span_of(tok))
        name = self.expect("ident").text
        return FnRef("name", name, span=self.span_of(tok))

    # -- expressions --------------------------------------------------------

    def parse_expr(self, no_ternary: bool = False) -> Expr:
        e = self.parse_or()
        if no_ternary:
            return e
        if self.accept("?"):
            then = self.parse_expr()
            self.expect(":")
            other = self.parse_expr()
            return Ternary(e, then, other, e.span.to(other.span))
        return e

    def parse_or(self) -> Expr:
        e = self.parse_comparison()
        while True:
            if self.accept("keyword", "and"):
                r = self.parse_comparison()
                e = Binary("and", e, r, e.span.to(r.span))
            elif self.accept("keyword", "or"):
                r = self.parse_comparison()
                e = Binary("or", e, r, e.span.to(r.span))
            else:
                return e

    def parse_comparison(self) -> Expr:
        e = self.parse_additive()
        tok = self.peek()
        if tok.kind in COMPARISON_OPS:
            self.pos += 1
            r = self.parse_additive()
            return Binary(tok.kind, e, r, e.span.to(r.span))
        return e

    def parse_additive(self) -> Expr:
        e = self.parse_multiplicative()
        while True:
            tok = self.peek()
            if tok.kind in ("+", "-"):
                self.pos += 1
                r = self.parse_multiplicative()
                e = Binary(tok.kind, e, r, e.span.to(r.span))
            else:
                return e

    def parse_multiplicative(self) -> Expr:
        e = self.parse_unary()
        while True:
            tok = self.peek()
            if tok.kind in ("*", "/"):
                self.pos += 1
                r = self.parse_unary()
                span = e.span.to(r.span)
                # literal-over-literal folds so printed rationals round-trip
                if (tok.kind == "/" and isinstance(e, Const) and isinstance(r, Const)
                        and isinstance(e.value, Fraction) and isinstance(r.value, Fraction)
                        and r.value != 0):
                    e = Const(e.value / r.value, span)
                else:
                    e = Binary(tok.kind, e, r, span)
            else:
                return e

    def parse_unary(self) -> Expr:
        tok = self.peek()
        if self.accept("keyword", "not"):
            operand = self.parse_unary()
            return Unary("not", operand, self.span_of(tok).to(operand.span))
        if self.accept("-"):
            operand = self.parse_unary()
            span = self.span_of(tok).to(operand.span)
            if isinstance(operand, Const) and isinstance(operand.value, Fraction):
                return Const(-operand.value, span)
            return Unary("-", operand, span)
        return self.parse_postfix()

    def parse_postfix(self) -> Expr:
        e = self.parse_primary()
        while True:
            if self.at("["):
                self.pos += 1
                name_tok = self.expect("ident")
                end = self.expect("]")
                meta = resolve_metadata(name_tok.text)
                span = e.span.to(self.span_of(end))
                if meta is not None:
                    e = MetadataAccess(e, meta, span)
                else:
                    e = ShapeAccess(e, name_tok.text, span)
            elif self.at(".") :
                self.pos += 1
                e = self.parse_method(e)
            else:
                return e

    def parse_method(self, e: Expr) -> Expr:
        tok = self.peek()
        if self.accept("keyword", "traverse"):
            self.expect("(")
            d = self.peek()
            if self.accept("keyword", "forward"):
                direction = "forward"
            elif self.accept("keyword", "backward"):
                direction = "backward"
            else:
                raise ParseError(f"unexpected {d.text!r}", d.line, d.col,
                                 {"forward", "backward"})
            self.expect(",")
            priority = self.parse_fn_ref()
            self.expect(",")
            stop = self.parse_fn_ref()
            self.expect(",")
            replace = self.parse_fn_ref()
            self.expect(")")
            self.expect("{")
            invariant = self.parse_expr()
            end = self.expect("}")
            if not isinstance(e, Var):
                raise ParseError("traverse applies to a variable", tok.line, tok.col)
            return Traverse(e, direction, priority, stop, replace, invariant,
                            e.span.to(self.span_of(end)))
        if self.accept("keyword", "map"):
            self.expect("(")
            fn = self.parse_fn_ref()
            end = self.expect(")")
            return Map(e, fn, e.span.to(self.span_of(end)))
        if self.accept("keyword", "mapList"):
            self.expect("(")
            fn = self.parse_fn_ref()
            end = self.expect(")")
            return MapList(e, fn, e.span.to(self.span_of(end)))
        if self.accept("keyword", "dot"):
            self.expect("(")
            r = self.parse_expr()
            end = self.expect(")")
            return Dot(e, r, e.span.to(self.span_of(end)))
        if self.accept("keyword", "concat"):
            self.expect("(")
            r = self.parse_expr()
            end = self.expect(")")
            return Concat(e, r, e.span.to(self.span_of(end)))
        raise ParseError(f"unknown method {tok.text!r}", tok.line, tok.col,
                         {"traverse", "map", "mapList", "dot", "concat"})

    def parse_primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.pos += 1
            return Const(Fraction(tok.value), self.span_of(tok))
        if self.accept("keyword", "true"):
            return Const(True, self.span_of(tok))
        if self.accept("keyword", "false"):
            return Const(False, self.span_of(tok))
        if self.accept("keyword", "sym"):
            return SymFresh(self.span_of(tok))
        if tok.kind == "keyword" and tok.text in LIST_OP_NAMES:
            self.pos += 1
            self.expect("(")
            first = self.parse_expr()
            if tok.text in ("max", "min") and self.accept(","):
                second = self.parse_expr()
                end = self.expect(")")
                return MinMax2(tok.text, first, second,
                               self.span_of(tok).to(self.span_of(end)))
            end = self.expect(")")
            return ListOp(tok.text, first, self.span_of(tok).to(self.span_of(end)))
        if self.accept("keyword", "compare"):
            self.expect("(")
            operand = self.parse_expr()
            self.expect(",")
            fn = self.parse_fn_ref()
            end = self.expect(")")
            return CompareOp(operand, fn, self.span_of(tok).to(self.span_of(end)))
        if self.accept("keyword", "solver"):
            self.expect("(")
            op_tok = self.peek()
            if self.accept("keyword", "maximize"):
                op = "maximize"
            elif self.accept("keyword", "minimize"):
                op = "minimize"
            else:
                raise ParseError(f"unexpected {op_tok.text!r}", op_tok.line, op_tok.col,
                                 {"maximize", "minimize"})
            self.expect(",")
            objective = self.parse_expr()
            self.expect(",")
            constraint = self.parse_expr()
            end = self.expect(")")
            return Solver(op, objective, constraint,
                          self.span_of(tok).to(self.span_of(end)))
        if tok.kind == "ident":
            self.pos += 1
            if self.at("("):
                self.pos += 1
                args: list[Expr] = []
                if not self.at(")"):
                    args.append(self.parse_expr())
                    while self.accept(","):
                        args.append(self.parse_expr())
                end = self.expect(")")
                return Call(tok.text, args, self.span_of(tok).to(self.span_of(end)))
            return Var(tok.text, self.span_of(tok))
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        if self.accept("["):
            items: list[Expr] = []
            if not self.at("]"):
                items.append(self.parse_expr())
                while self.accept(","):
                    items.append(self.parse_expr())
            end = self.expect("]")
            return ListLit(items, self.span_of(tok).to(self.span_of(end)))
        raise ParseError(f"unexpected {tok.text!r}", tok.line, tok.col,
                         {"an expression"})


def parse(source: str) -> Program:
    tokens = tokenize(source)
    return Parser(tokens).parse_program()


def parse_expression(source: str) -> Expr:
    """Parse a standalone expression (used by tests and tooling)."""
    tokens = tokenize(source)
    p = Parser(tokens)
    e = p.parse_expr()
    p.expect("eof")
    return e
