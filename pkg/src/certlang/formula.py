"""First-order term IR over Real/Int/Bool with SMT-LIB2 serialization.

Terms are hash-consed so structurally shared subterms serialize once via
`let` bindings; compare-style case trees are exponential as trees but linear
as DAGs.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Union


class SortError(Exception):
    pass


_ARITH = {"+", "-", "*", "/"}
_REL = {"<=", "<", ">=", ">", "="}
_BOOLOP = {"and", "or", "=>"}

_INTERN: dict[tuple, "Term"] = {}
_NEXT_ID = [0]
_LOCK = threading.Lock()


@dataclass(frozen=True)
class Term:
    node: str                      # "var" | "const" | "app" | "quant"
    sort: str                      # "Real" | "Int" | "Bool"
    op: str = ""
    args: tuple["Term", ...] = ()
    name: str = ""
    value: Union[Fraction, bool, None] = None
    binders: tuple[tuple[str, str], ...] = ()
    uid: int = 0

    def __hash__(self):
        return self.uid

    def __eq__(self, other):
        return self is other


def _intern(key: tuple, build) -> Term:
    t = _INTERN.get(key)
    if t is None:
        with _LOCK:
            t = _INTERN.get(key)
            if t is None:
                t = build(_NEXT_ID[0])
                _NEXT_ID[0] += 1
                _INTERN[key] = t
    return t


def var(name: str, sort: str) -> Term:
    key = ("var", name, sort)
    return _intern(key, lambda uid: Term("var", sort, name=name, uid=uid))


def const(value: Union[Fraction, int, bool], sort: Optional[str] = None) -> Term:
    if isinstance(value, bool):
        return _intern(("const", value, "Bool"),
                       lambda uid: Term("const", "Bool", value=value, uid=uid))
    frac = Fraction(value)
    if sort is None:
        sort = "Int" if frac.denominator == 1 else "Real"
    if sort == "Int" and frac.denominator != 1:
        raise SortError(f"{frac} is not an Int")
    key = ("const", frac, sort)
    return _intern(key, lambda uid: Term("const", sort, value=frac, uid=uid))


TRUE = const(True)
FALSE = const(False)


def _numeric(t: Term) -> bool:
    return t.sort in ("Real", "Int")


def _join_sort(args: Iterable[Term]) -> str:
    return "Real" if any(a.sort == "Real" for a in args) else "Int"


def app(op: str, *args: Term) -> Term:
    args = tuple(args)
    if op in _ARITH:
        if not all(_numeric(a) for a in args) or not args:
            raise SortError(f"{op} needs numeric arguments")
        sort = "Real" if op == "/" else _join_sort(args)
    elif op in _REL:
        if len(args) != 2:
            raise SortError(f"{op} is binary")
        if op == "=":
            if args[0].sort != args[1].sort and not all(_numeric(a) for a in args):
                raise SortError("= needs same-sorted arguments")
        elif not all(_numeric(a) for a in args):
            raise SortError(f"{op} needs numeric arguments")
        sort = "Bool"
    elif op in _BOOLOP:
        if not all(a.sort == "Bool" for a in args) or not args:
            raise SortError(f"{op} needs Bool arguments")
        sort = "Bool"
    elif op == "not":
        if len(args) != 1 or args[0].sort != "Bool":
            raise SortError("not needs one Bool argument")
        sort = "Bool"
    elif op == "ite":
        if len(args) != 3 or args[0].sort != "Bool":
            raise SortError("ite needs (Bool, t, t)")
        if args[1].sort != args[2].sort:
            if all(_numeric(a) for a in args[1:]):
                sort = "Real"
            else:
                raise SortError("ite branches disagree")
        else:
            sort = args[1].sort
    else:
        raise SortError(f"unknown operator {op!r}")
    key = ("app", op, tuple(a.uid for a in args))
    return _intern(key, lambda uid: Term("app", sort, op=op, args=args, uid=uid))


def conj(terms: Iterable[Term]) -> Term:
    items = [t for t in terms if t is not TRUE]
    if not items:
        return TRUE
    if len(items) == 1:
        return items[0]
    return app("and", *items)


def disj(terms: Iterable[Term]) -> Term:
    items = list(terms)
    if not items:
        return FALSE
    if len(items) == 1:
        return items[0]
    return app("or", *items)


def neg(t: Term) -> Term:
    return app("not", t)


def implies(a: Term, b: Term) -> Term:
    return app("=>", a, b)


def quant(kind: str, binders: list[tuple[str, str]], body: Term) -> Term:
    if kind not in ("exists", "forall"):
        raise SortError(f"bad quantifier {kind!r}")
    if body.sort != "Bool":
        raise SortError("quantified body must be Bool")
    if not binders:
        return body
    key = ("quant", kind, tuple(binders), body.uid)
    return _intern(key, lambda uid: Term(
        "quant", "Bool", op=kind, args=(body,), binders=tuple(binders), uid=uid))


# ---------------------------------------------------------------------------
# free variables / classification

def free_vars(t: Term) -> dict[str, str]:
    seen: dict[int, dict[str, str]] = {}

    def go(u: Term) -> dict[str, str]:
        cached = seen.get(u.uid)
        if cached is not None:
            return cached
        if u.node == "var":
            out = {u.name: u.sort}
        elif u.node == "const":
            out = {}
        elif u.node == "quant":
            inner = dict(go(u.args[0]))
            for nm, _ in u.binders:
                inner.pop(nm, None)
            out = inner
        else:
            out = {}
            for a in u.args:
                out.update(go(a))
        seen[u.uid] = out
        return out

    return go(t)


def is_nonlinear(t: Term) -> bool:
    seen: set[int] = set()
    found = [False]

    def varish(u: Term) -> bool:
        if u.node in ("var", "quant"):
            return True
        if u.node == "app":
            return any(varish(a) for a in u.args)
        return False

    def go(u: Term) -> None:
        if u.uid in seen or found[0]:
            return
        seen.add(u.uid)
        if u.node == "app":
            if u.op == "*" and sum(1 for a in u.args if varish(a)) > 1:
                found[0] = True
                return
            if u.op == "/" and varish(u.args[-1]):
                found[0] = True
                return
            for a in u.args:
                go(a)
        elif u.node == "quant":
            go(u.args[0])

    go(t)
    return found[0]


def has_quantifier(t: Term) -> bool:
    seen: set[int] = set()

    def go(u: Term) -> bool:
        if u.uid in seen:
            return False
        seen.add(u.uid)
        if u.node == "quant":
            return True
        return any(go(a) for a in u.args)

    return go(t)


def pick_logic(asserts: list[Term]) -> str:
    nonlin = any(is_nonlinear(t) for t in asserts)
    quantified = any(has_quantifier(t) for t in asserts)
    ints = any(s == "Int" for t in asserts for s in free_vars(t).values())
    if quantified:
        if ints:
            return "ALL"
        return "NRA" if nonlin else "LRA"
    base = ("NIRA" if nonlin else "LIRA") if ints else ("NRA" if nonlin else "LRA")
    return "QF_" + base


# ---------------------------------------------------------------------------
# serialization

def _format_const(value: Union[Fraction, bool], sort: str) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if sort == "Int":
        n = value.numerator
        return str(n) if n >= 0 else f"(- {-n})"
    p, q = value.numerator, value.denominator
    core = f"{abs(p)}.0" if q == 1 else f"(/ {abs(p)}.0 {q}.0)"
    return core if p >= 0 else f"(- {core})"


def serialize(t: Term, shared_min_refs: int = 2) -> str:
    """Render one term, let-binding multiply-referenced closed subterms."""
    refs: dict[int, int] = {}
    order: list[Term] = []

    def count(u: Term, under_binders: frozenset) -> None:
        refs[u.uid] = refs.get(u.uid, 0) + 1
        if refs[u.uid] > 1:
            return
        order.append(u)
        if u.node == "quant":
            count(u.args[0], under_binders | {nm for nm, _ in u.binders})
        else:
            for a in u.args:
                count(a, under_binders)

    count(t, frozenset())

    shareable: set[int] = set()
    for u in order:
        if refs[u.uid] >= shared_min_refs and u.node == "app" and len(u.args) >= 2:
            # only share subterms not mentioning quantifier-bound names
            shareable.add(u.uid)

    bound_names: set[str] = set()

    def collect_bound(u: Term, seen: set[int]) -> None:
        if u.uid in seen:
            return
        seen.add(u.uid)
        if u.node == "quant":
            bound_names.update(nm for nm, _ in u.binders)
        for a in u.args:
            collect_bound(a, seen)

    collect_bound(t, set())

    if bound_names:
        by_uid = {u.uid: u for u in order}

        def mentions_bound(u: Term, memo: dict[int, bool]) -> bool:
            if u.uid in memo:
                return memo[u.uid]
            if u.node == "var":
                res = u.name in bound_names
            else:
                res = any(mentions_bound(a, memo) for a in u.args)
            memo[u.uid] = res
            return res

        memo: dict[int, bool] = {}
        shareable = {uid for uid in shareable
                     if not mentions_bound(by_uid[uid], memo)}

    names: dict[int, str] = {}
    lets: list[tuple[str, str]] = []

    def render(u: Term) -> str:
        nm = names.get(u.uid)
        if nm is not None:
            return nm
        if u.node == "var":
            return u.name
        if u.node == "const":
            return _format_const(u.value, u.sort)
        if u.node == "quant":
            bs = " ".join(f"({n} {s})" for n, s in u.binders)
            return f"({u.op} ({bs}) {render(u.args[0])})"
        body = f"({u.op} " + " ".join(render(a) for a in u.args) + ")"
        if u.uid in shareable:
            nm = f".s{len(lets)}"
            lets.append((nm, body))
            names[u.uid] = nm
            return nm
        return body

    body = render(t)
    for nm, expr in reversed(lets):
        body = f"(let (({nm} {expr})) {body})"
    return body


def emit_smtlib(asserts: list[Term], logic: Optional[str] = None,
                get_model: bool = True, commands: Optional[list[str]] = None,
                post_commands: Optional[list[str]] = None,
                timeout_ms: Optional[int] = None) -> str:
    decls: dict[str, str] = {}
    for t in asserts:
        for name, sort in free_vars(t).items():
            if decls.setdefault(name, sort) != sort:
                raise SortError(f"variable {name!r} used at two sorts")
    lines = []
    if timeout_ms:
        lines.append(f"(set-option :timeout {timeout_ms})")
    if get_model:
        lines.append("(set-option :produce-models true)")
    lines.append(f"(set-logic {logic or pick_logic(asserts)})")
    for name in sorted(decls):
        lines.append(f"(declare-const {name} {decls[name]})")
    for t in asserts:
        lines.append(f"(assert {serialize(t)})")
    for extra in commands or []:
        lines.append(extra)
    lines.append("(check-sat)")
    if get_model:
        lines.append("(get-model)")
    for extra in post_commands or []:
        lines.append(extra)
    return "\n".join(lines) + "\n"
