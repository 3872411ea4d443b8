"""Symbolic values for the verification procedure.

A value is a DAG; case-analysis constructs build If nodes rather than
branching, and list results of compare are If trees over lists. Polyhedral
and noise expressions keep explicit term structure (the "expanded" form)
whenever the program needs to look inside them.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Union

from .values import RuntimeErrorCF


class NotExpanded(Exception):
    """Internal: a structural operation reached an opaque placeholder."""


@dataclass(frozen=True)
class SV:
    pass


@dataclass(frozen=True)
class SConst(SV):
    value: Union[Fraction, bool]


@dataclass(frozen=True)
class SVar(SV):
    name: str
    sort: str                      # Real | Int | Bool


@dataclass(frozen=True)
class SNeuron(SV):
    nid: str


@dataclass(frozen=True)
class SEps(SV):
    eid: str


@dataclass(frozen=True)
class SUn(SV):
    op: str                        # not | -
    a: SV


@dataclass(frozen=True)
class SBin(SV):
    op: str                        # + - * / <= >= == < > and or => <>
    a: SV
    b: SV


@dataclass(frozen=True)
class SIte(SV):
    c: SV
    t: SV
    e: SV


@dataclass(frozen=True)
class SPoly(SV):
    const: SV
    terms: tuple[tuple[str, SV], ...]    # (neuron id, coefficient)


@dataclass(frozen=True)
class SSym(SV):
    const: SV
    terms: tuple[tuple[str, SV], ...]    # (noise id, coefficient)


@dataclass(frozen=True)
class SList(SV):
    items: tuple[SV, ...]


@dataclass(frozen=True)
class SListIte(SV):
    c: SV
    t: SV                          # list-sorted
    e: SV


@dataclass(frozen=True)
class SListCons(SV):
    head: SV
    tail: SV                       # list-sorted; keeps shared tails shared


ZERO = SConst(Fraction(0))
ONE = SConst(Fraction(1))
TRUE = SConst(True)
FALSE = SConst(False)


def sconst(v) -> SConst:
    if isinstance(v, bool):
        return SConst(v)
    return SConst(Fraction(v))


def is_list_value(v: SV) -> bool:
    return isinstance(v, (SList, SListIte, SListCons))


def _is_zero(v: SV) -> bool:
    return isinstance(v, SConst) and v.value == 0


def _rat(v: SV) -> Optional[Fraction]:
    if isinstance(v, SConst) and isinstance(v.value, Fraction):
        return v.value
    return None


# ---------------------------------------------------------------------------
# arithmetic

def _as_terms(v: SV) -> Optional[tuple[str, SV, tuple[tuple[str, SV], ...]]]:
    """(space, const, terms) when v has explicit affine structure."""
    if isinstance(v, SPoly):
        return "neuron", v.const, v.terms
    if isinstance(v, SSym):
        return "sym", v.const, v.terms
    if isinstance(v, SNeuron):
        return "neuron", ZERO, ((v.nid, ONE),)
    if isinstance(v, SEps):
        return "sym", ZERO, ((v.eid, ONE),)
    return None


def _make_affine(space: str, const: SV, terms: dict[str, SV]) -> SV:
    items = tuple(sorted(terms.items()))
    if not items:
        return const
    if space == "neuron":
        return SPoly(const, items)
    return SSym(const, items)


def _scalarish(v: SV) -> bool:
    return not is_list_value(v) and _as_terms(v) is None


def s_add(a: SV, b: SV) -> SV:
    ra, rb = _rat(a), _rat(b)
    if ra is not None and rb is not None:
        return SConst(ra + rb)
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    ta, tb = _as_terms(a), _as_terms(b)
    if ta and tb and ta[0] == tb[0]:
        space, ca, terms_a = ta
        _, cb, terms_b = tb
        acc = dict(terms_a)
        for k, c in terms_b:
            acc[k] = s_add(acc[k], c) if k in acc else c
        acc = {k: c for k, c in acc.items() if not _is_zero(c)}
        return _make_affine(space, s_add(ca, cb), acc)
    if ta and _scalarish(b):
        space, ca, terms_a = ta
        return _make_affine(space, s_add(ca, b), dict(terms_a))
    if tb and _scalarish(a):
        space, cb, terms_b = tb
        return _make_affine(space, s_add(cb, a), dict(terms_b))
    return SBin("+", a, b)


def s_neg(a: SV) -> SV:
    return s_mul(sconst(-1), a)


def s_sub(a: SV, b: SV) -> SV:
    return s_add(a, s_neg(b))


def s_mul(a: SV, b: SV) -> SV:
    ra, rb = _rat(a), _rat(b)
    if ra is not None and rb is not None:
        return SConst(ra * rb)
    if _is_zero(a) or _is_zero(b):
        return ZERO
    if isinstance(a, SConst) and a.value == 1:
        return b
    if isinstance(b, SConst) and b.value == 1:
        return a
    ta, tb = _as_terms(a), _as_terms(b)
    if ta and tb:
        raise RuntimeErrorCF("TypeMismatch", "product of two structured expressions")
    if ta and _scalarish(b):
        space, c, terms = ta
        return _make_affine(space, s_mul(c, b), {k: s_mul(v, b) for k, v in terms})
    if tb and _scalarish(a):
        space, c, terms = tb
        return _make_affine(space, s_mul(c, a), {k: s_mul(v, a) for k, v in terms})
    return SBin("*", a, b)


def s_div(a: SV, b: SV) -> SV:
    ra, rb = _rat(a), _rat(b)
    if rb is not None and rb == 0:
        raise RuntimeErrorCF("DivisionByZero", "division by a zero constant")
    if ra is not None and rb is not None:
        return SConst(ra / rb)
    ta = _as_terms(a)
    if ta and _scalarish(b):
        space, c, terms = ta
        return _make_affine(space, s_div(c, b), {k: s_div(v, b) for k, v in terms})
    if _as_terms(b):
        raise RuntimeErrorCF("TypeMismatch", "division by a structured expression")
    return SBin("/", a, b)


def s_cmp(op: str, a: SV, b: SV) -> SV:
    ra, rb = _rat(a), _rat(b)
    if ra is not None and rb is not None:
        return SConst({"<=": ra <= rb, ">=": ra >= rb, "==": ra == rb,
                       "<": ra < rb, ">": ra > rb}[op])
    return SBin(op, a, b)


def s_embed(a: SV, b: SV) -> SV:
    return SBin("<>", a, b)


def s_not(a: SV) -> SV:
    if isinstance(a, SConst) and isinstance(a.value, bool):
        return SConst(not a.value)
    return SUn("not", a)


def s_boolop(op: str, a: SV, b: SV) -> SV:
    if isinstance(a, SConst) and isinstance(a.value, bool):
        if op == "and":
            return b if a.value else FALSE
        return TRUE if a.value else b
    if isinstance(b, SConst) and isinstance(b.value, bool):
        return s_boolop(op, b, a)
    return SBin(op, a, b)


def s_and_all(items) -> SV:
    acc: SV = TRUE
    for it in items:
        acc = s_boolop("and", acc, it)
    return acc


def s_ite(c: SV, t: SV, e: SV) -> SV:
    if isinstance(c, SConst) and isinstance(c.value, bool):
        return t if c.value else e
    if is_list_value(t) or is_list_value(e):
        return SListIte(c, t, e)
    return SIte(c, t, e)


def s_max2(a: SV, b: SV) -> SV:
    return s_ite(s_cmp(">=", a, b), a, b)


def s_min2(a: SV, b: SV) -> SV:
    return s_ite(s_cmp("<=", a, b), a, b)


# ---------------------------------------------------------------------------
# list structure (memoized over the DAG)

def _memo_list(fn: Callable) -> Callable:
    cache: dict[int, SV] = {}

    def wrapper(v: SV, *args):
        key = id(v)
        if key in cache:
            return cache[key]
        out = fn(v, *args)
        cache[key] = out
        return out

    return wrapper


def list_height(v: SV) -> int:
    if isinstance(v, SList):
        return 0
    if isinstance(v, SListCons):
        return list_height(v.tail)
    if isinstance(v, SListIte):
        return 1 + max(list_height(v.t), list_height(v.e))
    raise NotExpanded("height of a non-list value")


def s_len(v: SV, memo: Optional[dict] = None) -> SV:
    memo = {} if memo is None else memo
    key = id(v)
    if key in memo:
        return memo[key]
    if isinstance(v, SList):
        out: SV = sconst(len(v.items))
    elif isinstance(v, SListCons):
        out = s_add(ONE, s_len(v.tail, memo))
    elif isinstance(v, SListIte):
        out = s_ite(v.c, s_len(v.t, memo), s_len(v.e, memo))
    else:
        raise NotExpanded("len of a non-list value")
    memo[key] = out
    return out


def s_sum_list(v: SV, memo: Optional[dict] = None) -> SV:
    memo = {} if memo is None else memo
    key = id(v)
    if key in memo:
        return memo[key]
    if isinstance(v, SList):
        acc: SV = ZERO
        for item in v.items:
            acc = s_add(acc, item)
        out = acc
    elif isinstance(v, SListCons):
        out = s_add(v.head, s_sum_list(v.tail, memo))
    elif isinstance(v, SListIte):
        out = s_ite(v.c, s_sum_list(v.t, memo), s_sum_list(v.e, memo))
    else:
        raise NotExpanded("sum of a non-list value")
    memo[key] = out
    return out


def max_len(v: SV, memo: Optional[dict] = None) -> int:
    memo = {} if memo is None else memo
    key = id(v)
    if key in memo:
        return memo[key]
    if isinstance(v, SList):
        out = len(v.items)
    elif isinstance(v, SListCons):
        out = 1 + max_len(v.tail, memo)
    elif isinstance(v, SListIte):
        out = max(max_len(v.t, memo), max_len(v.e, memo))
    else:
        raise NotExpanded("length bound of a non-list value")
    memo[key] = out
    return out


def s_avg_list(v: SV, memo: Optional[dict] = None) -> SV:
    """Average per branch; empty branches yield an unconstrained-but-total 0.

    For If lists the division is case-split over the finitely many possible
    lengths so every divisor is a constant and queries stay linear."""
    memo = {} if memo is None else memo
    key = id(v)
    if key in memo:
        return memo[key]
    if isinstance(v, SList):
        if not v.items:
            out: SV = ZERO
        else:
            out = s_div(s_sum_list(v), sconst(len(v.items)))
    elif isinstance(v, (SListCons, SListIte)):
        total = s_sum_list(v)
        length = s_len(v)
        out = ZERO
        for k in range(max_len(v), 0, -1):
            out = s_ite(s_cmp("==", length, sconst(k)),
                        s_div(total, sconst(k)), out)
    else:
        raise NotExpanded("avg of a non-list value")
    memo[key] = out
    return out


def s_max_list(v: SV, memo: Optional[dict] = None) -> SV:
    memo = {} if memo is None else memo
    key = id(v)
    if key in memo:
        return memo[key]
    if isinstance(v, SList):
        if not v.items:
            out: SV = ZERO
        else:
            acc = v.items[-1]
            for item in reversed(v.items[:-1]):
                acc = s_ite(s_cmp(">=", item, acc), item, acc)
            out = acc
    elif isinstance(v, SListCons):
        rest = s_max_list(v.tail, memo)
        out = s_ite(s_cmp(">=", v.head, rest), v.head, rest)
    elif isinstance(v, SListIte):
        out = s_ite(v.c, s_max_list(v.t, memo), s_max_list(v.e, memo))
    else:
        raise NotExpanded("max of a non-list value")
    memo[key] = out
    return out


def s_min_list(v: SV, memo: Optional[dict] = None) -> SV:
    memo = {} if memo is None else memo
    key = id(v)
    if key in memo:
        return memo[key]
    if isinstance(v, SList):
        if not v.items:
            out: SV = ZERO
        else:
            acc = v.items[-1]
            for item in reversed(v.items[:-1]):
                acc = s_ite(s_cmp("<=", item, acc), item, acc)
            out = acc
    elif isinstance(v, SListCons):
        rest = s_min_list(v.tail, memo)
        out = s_ite(s_cmp("<=", v.head, rest), v.head, rest)
    elif isinstance(v, SListIte):
        out = s_ite(v.c, s_min_list(v.t, memo), s_min_list(v.e, memo))
    else:
        raise NotExpanded("min of a non-list value")
    memo[key] = out
    return out


def s_dot(a: SV, b: SV) -> SV:
    if isinstance(a, SListIte):
        return s_ite(a.c, s_dot(a.t, b), s_dot(a.e, b))
    if isinstance(b, SListIte):
        return s_ite(b.c, s_dot(a, b.t), s_dot(a, b.e))
    if isinstance(a, SList) and isinstance(b, SList):
        acc: SV = ZERO
        for x, y in zip(a.items, b.items):
            acc = s_add(acc, s_mul(x, y))
        return acc
    raise NotExpanded("dot of non-list values")


def s_concat(a: SV, b: SV) -> SV:
    if isinstance(a, SListIte):
        return SListIte(a.c, s_concat(a.t, b), s_concat(a.e, b))
    if isinstance(b, SListIte):
        return SListIte(b.c, s_concat(a, b.t), s_concat(a, b.e))
    if isinstance(a, SList) and isinstance(b, SList):
        return SList(a.items + b.items)
    raise NotExpanded("concat of non-list values")


def s_map_elems(v: SV, fn: Callable[[SV], SV],
                memo: Optional[dict] = None) -> SV:
    """mapList over a possibly-If list; shared tails map once."""
    memo = {} if memo is None else memo
    key = id(v)
    if key in memo:
        return memo[key]
    if isinstance(v, SList):
        out: SV = SList(tuple(fn(x) for x in v.items))
    elif isinstance(v, SListCons):
        out = SListCons(fn(v.head), s_map_elems(v.tail, fn, memo))
    elif isinstance(v, SListIte):
        out = SListIte(v.c, s_map_elems(v.t, fn, memo), s_map_elems(v.e, fn, memo))
    else:
        raise NotExpanded("mapList of a non-list value")
    memo[key] = out
    return out


def s_compare_list(v: SV, pred: Callable[[SV, SV], SV]) -> SV:
    """All elements at least as large as every other, per the user predicate.

    The result enumerates every winning combination as an If tree over lists;
    the shared-tail construction keeps the DAG linear in the list length.
    """
    if isinstance(v, SListIte):
        return SListIte(v.c, s_compare_list(v.t, pred), s_compare_list(v.e, pred))
    if not isinstance(v, SList):
        raise NotExpanded("compare of a non-list value")
    items = v.items
    if len(items) <= 1:
        return v
    acc: SV = SList(())
    for i in range(len(items) - 1, -1, -1):
        wins = s_and_all(pred(items[i], items[j])
                         for j in range(len(items)) if j != i)
        with_me = _cons(items[i], acc)
        acc = s_ite(wins, with_me, acc)
    return acc


def _cons(head: SV, tail: SV) -> SV:
    if isinstance(tail, SList):
        return SList((head,) + tail.items)
    if isinstance(tail, (SListIte, SListCons)):
        return SListCons(head, tail)
    raise NotExpanded("cons onto a non-list value")


def expanded(v: SV) -> bool:
    if isinstance(v, (SPoly, SSym, SNeuron, SEps, SConst, SVar)):
        return True
    if isinstance(v, SIte):
        return expanded(v.t) and expanded(v.e)
    if isinstance(v, SList):
        return all(expanded(x) for x in v.items)
    if isinstance(v, SListCons):
        return expanded(v.head) and expanded(v.tail)
    if isinstance(v, SListIte):
        return expanded(v.t) and expanded(v.e)
    if isinstance(v, SBin):
        return expanded(v.a) and expanded(v.b)
    if isinstance(v, SUn):
        return expanded(v.a)
    return False


def walk_eps_ids(v: SV) -> set[str]:
    seen: set[int] = set()
    out: set[str] = set()

    def go(u: SV) -> None:
        if id(u) in seen:
            return
        seen.add(id(u))
        if isinstance(u, SEps):
            out.add(u.eid)
        elif isinstance(u, SSym):
            out.update(k for k, _ in u.terms)
            go(u.const)
            for _, c in u.terms:
                go(c)
        elif isinstance(u, SPoly):
            go(u.const)
            for _, c in u.terms:
                go(c)
        elif isinstance(u, SBin):
            go(u.a)
            go(u.b)
        elif isinstance(u, SUn):
            go(u.a)
        elif isinstance(u, (SIte, SListIte)):
            go(u.c)
            go(u.t)
            go(u.e)
        elif isinstance(u, SList):
            for x in u.items:
                go(x)
        elif isinstance(u, SListCons):
            go(u.head)
            go(u.tail)

    go(v)
    return out
