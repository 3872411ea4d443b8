"""Encoding of runtime values and symbolic values into formula terms.

The embedding constraint (a polyhedral value lies in the set a noise
expression denotes) is encoded per side: assumptions pin the shared noise
witness, so it becomes an equality over the free noise variables; proof
goals re-quantify, so it becomes an existential over fresh bounded copies.
"""
from __future__ import annotations

from fractions import Fraction
from typing import Optional, Union

from . import formula as F
from .formula import Term
from .solver import Infeasible, SolverConfig, SolverSession, Unbounded
from .symval import (
    SBin, SConst, SEps, SIte, SList, SListIte, SNeuron, SPoly, SSym, SV, SUn,
    SVar, walk_eps_ids,
)
from .values import (
    Affine, BoolOpCt, CmpCt, EmbedCt, RuntimeErrorCF, Value,
)

fnot = F.neg
fand = F.conj

_OPMAP = {"==": "=", "<=": "<=", ">=": ">=", "<": "<", ">": ">",
          "+": "+", "-": "-", "*": "*", "/": "/",
          "and": "and", "or": "or", "=>": "=>"}


class Encoder:
    """Symbolic-value encoder bound to one symbolic network."""

    def __init__(self, sdnn):
        self.sdnn = sdnn
        # values are (sv, term): holding sv keeps its id stable for the key
        self._memo: dict[tuple, tuple] = {}
        self._fresh = 0

    def assume(self, sv: SV) -> Term:
        return self._enc(sv, "assume", None)

    def goal(self, sv: SV) -> Term:
        return self._enc(sv, "goal", None)

    def _neuron_var(self, nid: str) -> Term:
        v = self.sdnn.value_var(nid)
        return F.var(v.name, v.sort)

    def _eps_var(self, eid: str, subst: Optional[dict]) -> Term:
        if subst is not None and eid in subst:
            return subst[eid]
        v = self.sdnn.eps_var(eid)
        return F.var(v.name, v.sort)

    def _enc(self, sv: SV, mode: str, subst: Optional[dict]) -> Term:
        if subst is None:
            key = (id(sv), mode)
            hit = self._memo.get(key)
            if hit is not None:
                return hit[1]
        out = self._build(sv, mode, subst)
        if subst is None:
            self._memo[(id(sv), mode)] = (sv, out)
        return out

    def _build(self, sv: SV, mode: str, subst: Optional[dict]) -> Term:
        if isinstance(sv, SConst):
            if isinstance(sv.value, bool):
                return F.const(sv.value)
            return F.const(sv.value, "Real")
        if isinstance(sv, SVar):
            return F.var(sv.name, sv.sort)
        if isinstance(sv, SNeuron):
            return self._neuron_var(sv.nid)
        if isinstance(sv, SEps):
            return self._eps_var(sv.eid, subst)
        if isinstance(sv, SUn):
            a = self._enc(sv.a, mode, subst)
            if sv.op == "not":
                return F.neg(a)
            return F.app("-", F.const(0, a.sort if a.sort != "Bool" else "Real"), a)
        if isinstance(sv, SIte):
            return F.app("ite", self._enc(sv.c, mode, subst),
                         self._enc(sv.t, mode, subst),
                         self._enc(sv.e, mode, subst))
        if isinstance(sv, SPoly):
            acc = self._enc(sv.const, mode, subst)
            for nid, coeff in sv.terms:
                acc = F.app("+", acc, F.app("*", self._enc(coeff, mode, subst),
                                            self._neuron_var(nid)))
            return acc
        if isinstance(sv, SSym):
            acc = self._enc(sv.const, mode, subst)
            for eid, coeff in sv.terms:
                acc = F.app("+", acc, F.app("*", self._enc(coeff, mode, subst),
                                            self._eps_var(eid, subst)))
            return acc
        if isinstance(sv, SBin):
            if sv.op == "<>":
                return self._embed(sv.a, sv.b, mode, subst)
            a = self._enc(sv.a, mode, subst)
            b = self._enc(sv.b, mode, subst)
            return F.app(_OPMAP[sv.op], a, b)
        if isinstance(sv, (SList, SListIte)):
            raise RuntimeErrorCF("Internal", "a bare list reached the encoder")
        raise RuntimeErrorCF("Internal", f"cannot encode {type(sv).__name__}")

    def _embed(self, poly: SV, symexp: SV, mode: str, subst: Optional[dict]) -> Term:
        lhs = self._enc(poly, mode, subst)
        if mode == "assume":
            rhs = self._enc(symexp, mode, subst)
            return F.app("=", lhs, rhs)
        return self._embed_goal(lhs, symexp, mode, subst)

    def _embed_goal(self, lhs: Term, symexp: SV, mode: str,
                    subst: Optional[dict]) -> Term:
        if subst is None:
            key = (id(symexp), "embed", lhs.uid)
            hit = self._memo.get(key)
            if hit is not None:
                return hit[1]
            out = self._embed_goal_raw(lhs, symexp, mode, subst)
            self._memo[key] = (symexp, out)
            return out
        return self._embed_goal_raw(lhs, symexp, mode, subst)

    def _embed_goal_raw(self, lhs: Term, symexp: SV, mode: str,
                        subst: Optional[dict]) -> Term:
        """Re-quantified membership: some assignment in [-1,1] to the
        expression's own noise symbols makes both sides equal. Since the
        symbols range independently, this is the interval
        |lhs - const| <= sum |coeff|, which stays quantifier-free."""
        if isinstance(symexp, SIte):
            return F.app("ite", self._enc(symexp.c, mode, subst),
                         self._embed_goal(lhs, symexp.t, mode, subst),
                         self._embed_goal(lhs, symexp.e, mode, subst))
        if isinstance(symexp, SEps):
            symexp = SSym(SConst(Fraction(0)),
                          ((symexp.eid, SConst(Fraction(1))),))
        if isinstance(symexp, SSym):
            c0 = self._enc(symexp.const, mode, subst)
            radius: Optional[Term] = None
            for _, coeff in symexp.terms:
                c = self._enc(coeff, mode, subst)
                a = F.app("ite", F.app(">=", c, F.const(0, "Real")), c,
                          F.app("-", F.const(0, "Real"), c))
                radius = a if radius is None else F.app("+", radius, a)
            if radius is None:
                return F.app("=", lhs, c0)
            return F.app("and",
                         F.app("<=", F.app("-", c0, radius), lhs),
                         F.app("<=", lhs, F.app("+", c0, radius)))
        eids = sorted(walk_eps_ids(symexp))
        if not eids:
            # opaque placeholders pin the shared witness; equality is exact
            rhs = self._enc(symexp, mode, subst)
            return F.app("=", lhs, rhs)
        # general fallback: explicit existential over fresh bounded copies
        binders = []
        inner_subst = dict(subst or {})
        bounds = []
        for eid in eids:
            self._fresh += 1
            name = f"q_eps_{self._fresh}"
            binders.append((name, "Real"))
            tv = F.var(name, "Real")
            inner_subst[eid] = tv
            bounds.append(F.app("<=", F.const(Fraction(-1), "Real"), tv))
            bounds.append(F.app("<=", tv, F.const(Fraction(1), "Real")))
        rhs = self._enc(symexp, mode, inner_subst)
        body = F.conj(bounds + [F.app("=", lhs, rhs)])
        return F.quant("exists", binders, body)


# ---------------------------------------------------------------------------
# concrete-value encoding (solver construct during concrete runs)

def _affine_term(v: Affine) -> Term:
    acc = F.const(v.const, "Real")
    for key, coeff in v.terms:
        vname = f"n_{key}" if v.space == "neuron" else f"e_{key}"
        acc = F.app("+", acc, F.app("*", F.const(coeff, "Real"), F.var(vname, "Real")))
    return acc


def encode_concrete(v: Value) -> Term:
    if isinstance(v, bool):
        return F.const(v)
    if isinstance(v, Fraction):
        return F.const(v, "Real")
    if isinstance(v, Affine):
        return _affine_term(v)
    if isinstance(v, CmpCt):
        return F.app(_OPMAP[v.op], encode_concrete(v.left), encode_concrete(v.right))
    if isinstance(v, BoolOpCt):
        return F.app(v.op, encode_concrete(v.left), encode_concrete(v.right))
    if isinstance(v, EmbedCt):
        # noise symbols act as free, bounded existentials on this side
        return F.app("=", encode_concrete(v.poly), encode_concrete(v.sym))
    raise RuntimeErrorCF("TypeMismatch", f"cannot encode {type(v).__name__}")


def _eps_bounds(v: Value, acc: set) -> None:
    if isinstance(v, Affine) and v.space == "sym":
        acc.update(v.keys())
    elif isinstance(v, CmpCt):
        _eps_bounds(v.left, acc)
        _eps_bounds(v.right, acc)
    elif isinstance(v, BoolOpCt):
        _eps_bounds(v.left, acc)
        _eps_bounds(v.right, acc)
    elif isinstance(v, EmbedCt):
        _eps_bounds(v.poly, acc)
        _eps_bounds(v.sym, acc)


def solve_concrete(op: str, objective: Value, constraint: Value,
                   config: Optional[SolverConfig]) -> Fraction:
    obj = encode_concrete(objective)
    asserts = [encode_concrete(constraint)]
    eps: set = set()
    _eps_bounds(constraint, eps)
    _eps_bounds(objective, eps)
    for eid in sorted(eps):
        ev = F.var(f"e_{eid}", "Real")
        asserts.append(F.app("<=", F.const(Fraction(-1), "Real"), ev))
        asserts.append(F.app("<=", ev, F.const(Fraction(1), "Real")))
    session = SolverSession(config)
    try:
        return session.optimize(obj, asserts, op)
    except Infeasible:
        raise RuntimeErrorCF("Infeasible", "solver constraints are unsatisfiable")
    except Unbounded:
        raise RuntimeErrorCF("Unbounded", "solver objective is unbounded")


# ---------------------------------------------------------------------------
# multiplication lemmas: valid facts that let the core solver reason about
# sign-monotonicity of products without full nonlinear search

def _collect_products(t: Term, acc: dict, seen: set) -> None:
    if t.uid in seen:
        return
    seen.add(t.uid)
    if t.node == "app":
        if t.op == "*" and len(t.args) == 2:
            a, b = t.args
            if a.node != "const" and b.node != "const":
                acc.setdefault(a.uid, (a, {}))[1][b.uid] = (b, t)
                acc.setdefault(b.uid, (b, {}))[1][a.uid] = (a, t)
        for arg in t.args:
            _collect_products(arg, acc, seen)
    elif t.node == "quant":
        _collect_products(t.args[0], acc, seen)


def multiplication_lemmas(asserts: list[Term], limit: int = 4000) -> list[Term]:
    """For every pair of products a*b, a*c sharing the factor a, the four
    sign-monotonicity implications. All are valid over the reals, so adding
    them preserves satisfiability while making the instances available to
    linear reasoning."""
    groups: dict = {}
    seen: set = set()
    for t in asserts:
        _collect_products(t, groups, seen)
    zero = F.const(0, "Real")
    out: list[Term] = []
    for _, (a, partners) in sorted(groups.items()):
        items = sorted(partners.items())
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                (_, (b, ab)), (_, (c, ac)) = items[i], items[j]
                a_pos = F.app(">=", a, zero)
                a_neg = F.app("<=", a, zero)
                b_le_c = F.app("<=", b, c)
                c_le_b = F.app("<=", c, b)
                out.append(F.implies(F.app("and", a_pos, b_le_c), F.app("<=", ab, ac)))
                out.append(F.implies(F.app("and", a_pos, c_le_b), F.app("<=", ac, ab)))
                out.append(F.implies(F.app("and", a_neg, b_le_c), F.app(">=", ab, ac)))
                out.append(F.implies(F.app("and", a_neg, c_le_b), F.app(">=", ac, ab)))
                if len(out) >= limit:
                    return out
    return out


def _rewrite_products(t: Term, table: dict, fresh: list) -> Term:
    """Replace variable products with fresh names (outside quantifiers)."""
    memo: dict[int, Term] = {}

    def go(u: Term) -> Term:
        hit = memo.get(u.uid)
        if hit is not None:
            return hit
        if u.node in ("var", "const"):
            out = u
        elif u.node == "quant":
            out = u  # products under binders stay exact
        else:
            args = tuple(go(a) for a in u.args)
            if (u.op == "*" and len(args) == 2
                    and args[0].node != "const" and args[1].node != "const"):
                key = tuple(sorted((args[0].uid, args[1].uid)))
                cached = table.get(key)
                if cached is None:
                    name = f"prod_{len(table)}"
                    cached = F.var(name, "Real")
                    table[key] = cached
                    fresh.append((cached, args[0], args[1]))
                out = cached
            else:
                out = F.app(u.op, *args) if args != u.args else u
        memo[u.uid] = out
        return out

    return go(t)


def _ite_product_lemmas(asserts: list[Term]) -> list[Term]:
    """Fused monotonicity facts for sign-selected products.

    For T = ite(a>=0, a*x, a*y) and any other product a*z in the query:
    (x<=z and z<=y) implies T <= a*z, and (y<=z and z<=x) implies a*z <= T.
    Both are valid over the reals regardless of the sign of a, so they
    sharpen the solver without changing satisfiability."""
    products: dict = {}
    ites: list[tuple[Term, Term, Term, Term]] = []   # (ite, a, x, y)
    seen: set = set()

    def scan(t: Term) -> None:
        if t.uid in seen:
            return
        seen.add(t.uid)
        if t.node == "app":
            if t.op == "ite" and len(t.args) == 3:
                c, p, q = t.args
                if (c.node == "app" and c.op in (">=", ">") and len(c.args) == 2
                        and c.args[1].node == "const" and c.args[1].value == 0
                        and p.node == "app" and p.op == "*" and len(p.args) == 2
                        and q.node == "app" and q.op == "*" and len(q.args) == 2):
                    a = c.args[0]
                    px = _other_factor(p, a)
                    qy = _other_factor(q, a)
                    if px is not None and qy is not None:
                        ites.append((t, a, px, qy))
            if t.op == "*" and len(t.args) == 2                     and t.args[0].node != "const" and t.args[1].node != "const":
                for side in (0, 1):
                    products.setdefault(t.args[side].uid, []).append(
                        (t.args[1 - side], t))
            for arg in t.args:
                scan(arg)
        elif t.node == "quant":
            scan(t.args[0])

    for t in asserts:
        scan(t)
    out: list[Term] = []
    for ite_t, a, x, y in ites:
        for z, az in products.get(a.uid, []):
            if az.uid in (ite_t.args[1].uid, ite_t.args[2].uid):
                continue
            lo = F.app("and", F.app("<=", x, z), F.app("<=", z, y))
            hi = F.app("and", F.app("<=", y, z), F.app("<=", z, x))
            out.append(F.implies(lo, F.app("<=", ite_t, az)))
            out.append(F.implies(hi, F.app("<=", az, ite_t)))
    return out


def _other_factor(prod: Term, a: Term) -> Optional[Term]:
    if prod.args[0].uid == a.uid:
        return prod.args[1]
    if prod.args[1].uid == a.uid:
        return prod.args[0]
    return None


def _all_products(asserts: list[Term]) -> list[Term]:
    out: list[Term] = []
    seen: set = set()

    def go(t: Term) -> None:
        if t.uid in seen:
            return
        seen.add(t.uid)
        if t.node == "app":
            if t.op == "*" and len(t.args) == 2                     and t.args[0].node != "const" and t.args[1].node != "const":
                out.append(t)
            for a in t.args:
                go(a)
        elif t.node == "quant":
            go(t.args[0])

    for t in asserts:
        go(t)
    return out


def linear_abstraction(asserts: list[Term]) -> Optional[list[Term]]:
    """A sound weakening with no variable products: each product becomes a
    fresh variable, constrained by every pairwise shared-factor monotonicity
    lemma. Unsatisfiability of the result implies unsatisfiability of the
    original; satisfiability implies nothing. Declines when some product has
    no lemma connecting it, since the weakening could not close then."""
    lemmas = multiplication_lemmas(asserts) + _ite_product_lemmas(asserts)
    if not lemmas:
        return None
    products = _all_products(asserts)
    covered: set = set()
    for t in lemmas:
        for prod in _all_products([t]):
            covered.add(prod.uid)
    isolated = [p for p in products if p.uid not in covered]
    if isolated and len(products) <= 12:
        # small enough for exact search, and the weakening cannot relate the
        # isolated products, so it would likely be a wasted round-trip
        return None
    table: dict = {}
    fresh: list = []
    rewritten = [_rewrite_products(t, table, fresh) for t in asserts + lemmas]
    if not table:
        return None
    zero = F.const(0, "Real")
    # sign information for the abstracted products
    for m, a, b in fresh:
        a_pos, b_pos = F.app(">=", a, zero), F.app(">=", b, zero)
        a_neg, b_neg = F.app("<=", a, zero), F.app("<=", b, zero)
        rewritten.append(F.implies(F.app("and", a_pos, b_pos), F.app(">=", m, zero)))
        rewritten.append(F.implies(F.app("and", a_neg, b_neg), F.app(">=", m, zero)))
        rewritten.append(F.implies(F.app("and", a_pos, b_neg), F.app("<=", m, zero)))
        rewritten.append(F.implies(F.app("and", a_neg, b_pos), F.app("<=", m, zero)))
        rewritten.append(F.implies(F.app("=", a, zero), F.app("=", m, zero)))
        rewritten.append(F.implies(F.app("=", b, zero), F.app("=", m, zero)))
    return rewritten


def check_obligation(config, asserts: list[Term], tag: str):
    """Staged discharge for nonlinear queries: linear counterexample probes
    (a model there is a genuine model), then a sound linear weakening (its
    unsat verdict transfers), then the exact query."""
    from .formula import pick_logic
    session = SolverSession(config)
    logic = pick_logic(asserts)
    if "N" in logic.replace("QF_", "")[:1]:
        probed = _sat_probe(session, asserts, tag)
        if probed is not None:
            return probed
        weak = linear_abstraction(asserts)
        if weak is not None:
            res = session.check(weak, get_model=False, tag=tag + "_lin")
            if res.status == "unsat":
                return res
    return session.check(asserts, tag=tag)


def _subst_vars(t: Term, mapping: dict) -> Term:
    memo: dict[int, Term] = {}

    def go(u: Term) -> Term:
        hit = memo.get(u.uid)
        if hit is not None:
            return hit
        if u.node == "var":
            out = mapping.get(u.name, u)
        elif u.node == "const":
            out = u
        elif u.node == "quant":
            body = go(u.args[0])
            out = u if body is u.args[0] else F.quant(u.op, list(u.binders), body)
        else:
            args = tuple(go(a) for a in u.args)
            out = u if args == u.args else F.app(u.op, *args)
        memo[u.uid] = out
        return out

    return go(t)


def _sat_probe(session, asserts: list[Term], tag: str):
    """Linear strengthenings that pin product factors to +-1.

    A model of a strengthened query is a genuine model; disproving a
    transformer usually only needs generic parameter values, so a cheap
    linear search often ends bug-finding before any nonlinear work."""
    factor_names: set = set()
    for prod in _all_products(asserts):
        for side in prod.args:
            if side.node == "var":
                factor_names.add(side.name)
                break
    if not factor_names:
        return None
    for pin in (Fraction(1), Fraction(-1)):
        mapping = {name: F.const(pin, "Real") for name in sorted(factor_names)}
        probed = [_subst_vars(t, mapping) for t in asserts]
        res = session.check(probed, tag=f"{tag}_probe")
        if res.status == "sat":
            for name in factor_names:
                res.model.setdefault(name, pin)
            return res
    return None
