"""Subtyping lattice over the base kinds, plus one-level list types."""
from __future__ import annotations

from .ast import BOT, TOP, TypeExpr, list_of

# Hasse edges, child -> parent
_EDGES = {
    "Bot": ("Bool", "Sym", "Int", "Neuron"),
    "Bool": ("Ct",),
    "Sym": ("SymExp",),
    "Int": ("Real",),
    "Neuron": ("PolyExp",),
    "Real": ("SymExp", "PolyExp"),
    "Ct": ("Top",),
    "SymExp": ("Top",),
    "PolyExp": ("Top",),
    "Top": (),
}

KINDS = tuple(_EDGES)


def _ancestors() -> dict[str, frozenset[str]]:
    memo: dict[str, frozenset[str]] = {}

    def up(k: str) -> frozenset[str]:
        if k not in memo:
            acc = {k}
            for p in _EDGES[k]:
                acc |= up(p)
            memo[k] = frozenset(acc)
        return memo[k]

    for k in KINDS:
        up(k)
    return memo


_UP = _ancestors()


def _kind_leq(a: str, b: str) -> bool:
    return b in _UP[a]


def _kind_join(a: str, b: str) -> str:
    common = _UP[a] & _UP[b]
    # least element of the common upper set
    for c in common:
        if all(_kind_leq(c, d) for d in common):
            return c
    return "Top"


def is_subtype(a: TypeExpr, b: TypeExpr) -> bool:
    if a.is_list and b.is_list:
        return is_subtype(a.elem, b.elem)
    if a.is_list or b.is_list:
        return a.kind == "Bot" or b.kind == "Top"
    return _kind_leq(a.kind, b.kind)


def join(a: TypeExpr, b: TypeExpr) -> TypeExpr:
    if a.is_list and b.is_list:
        e = join(a.elem, b.elem)
        if e.kind == "Top":
            return TOP
        return list_of(e)
    if a.is_list or b.is_list:
        if a.kind == "Bot":
            return b
        if b.kind == "Bot":
            return a
        return TOP
    return TypeExpr(_kind_join(a.kind, b.kind))


def is_proper(t: TypeExpr) -> bool:
    """Strictly between bottom and top."""
    return t.kind not in ("Bot", "Top")


def proper_subtype(a: TypeExpr, b: TypeExpr) -> bool:
    return is_subtype(a, b) and a != b


def meet_exists(a: TypeExpr, b: TypeExpr) -> bool:
    return is_subtype(a, b) or is_subtype(b, a)
