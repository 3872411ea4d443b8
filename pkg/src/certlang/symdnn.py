"""Symbolic network templates for verification.

A template holds curr, the op-appropriate prev neurons, fresh variables for
every shape member and metadata field touched, and a constraint conjunction
assuming the declared property on every neuron plus the operation's
input/output relation. Expansion rewrites polyhedral/noise members into
explicit width-bounded affine forms over fresh neurons or the shared noise
pool, recording a defining equality.

Variable classes: X holds per-network constants (coefficients, metadata),
Y holds neuron values and noise symbols, Z holds opaque placeholders for
polyhedral/noise members and stored constraints.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .ast import ShapeDecl, TypeExpr
from .typecheck import prev_arity
from .symval import (
    FALSE, SBin, SConst, SEps, SList, SNeuron, SPoly, SSym, SV, SVar, TRUE,
    s_and_all, s_boolop, s_cmp, s_mul, sconst,
)


class UnsupportedOp(Exception):
    pass


@dataclass(frozen=True)
class Bounds:
    n_prev: int = 2
    n_sym: int = 2


@dataclass
class SymbolicDNN:
    shape: ShapeDecl
    op: str
    bounds: Bounds
    curr: str = "curr"
    prevs: list[str] = field(default_factory=list)
    neurons: list[str] = field(default_factory=list)
    table: dict[tuple[str, str], SV] = field(default_factory=dict)
    constraints: list[SV] = field(default_factory=list)
    var_class: dict[str, str] = field(default_factory=dict)
    var_sort: dict[str, str] = field(default_factory=dict)
    eps_pool: list[str] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)
    prop_eval: Optional[object] = None          # callable(sdnn, nid) -> SV
    _origins: dict[str, tuple[str, str]] = field(default_factory=dict)

    def placeholder_origin(self, varname: str) -> Optional[tuple[str, str]]:
        return self._origins.get(varname)

    # -- fresh names --------------------------------------------------------

    def fresh_var(self, cls: str, sort: str) -> SVar:
        k = self.counters.get(cls, 0)
        self.counters[cls] = k + 1
        name = f"mu_{cls.lower()}_{k}"
        self.var_class[name] = cls
        self.var_sort[name] = sort
        return SVar(name, sort)

    def fresh_neuron_id(self, prefix: str = "t") -> str:
        k = self.counters.get("neuron", 0)
        self.counters["neuron"] = k + 1
        return f"{prefix}{k:03d}"

    def value_var(self, nid: str) -> SVar:
        key = (nid, "!value")
        sv = self.table.get(key)
        if sv is None:
            sv = self.fresh_var("Y", "Real")
            self.table[key] = sv
        return sv

    def noise_pool(self) -> list[str]:
        while len(self.eps_pool) < self.bounds.n_sym:
            i = len(self.eps_pool)
            eid = f"pool{i}"
            self.eps_pool.append(eid)
            v = self.eps_var(eid)
            self.constraints.append(s_cmp("<=", sconst(-1), SEps(eid)))
            self.constraints.append(s_cmp("<=", SEps(eid), sconst(1)))
        return list(self.eps_pool)

    def eps_var(self, eid: str) -> SVar:
        key = ("!eps", eid)
        sv = self.table.get(key)
        if sv is None:
            sv = self.fresh_var("Y", "Real")
            self.table[key] = sv
        return sv

    def mint_eps(self, prefix: str = "e") -> str:
        k = self.counters.get("eps", 0)
        self.counters["eps"] = k + 1
        eid = f"{prefix}{k}"
        self.eps_var(eid)
        self.constraints.append(s_cmp("<=", sconst(-1), SEps(eid)))
        self.constraints.append(s_cmp("<=", SEps(eid), sconst(1)))
        return eid

    # -- table access -------------------------------------------------------

    def _member_placeholder(self, t: TypeExpr) -> SV:
        if t.kind in ("Int",):
            return self.fresh_var("X", "Int")
        if t.kind in ("Real",):
            return self.fresh_var("X", "Real")
        if t.kind == "Bool":
            return self.fresh_var("X", "Bool")
        if t.kind in ("PolyExp", "SymExp"):
            return self.fresh_var("Z", "Real")
        if t.kind == "Ct":
            return self.fresh_var("Z", "Bool")
        raise UnsupportedOp(f"cannot model a shape member of type {t}")

    def member(self, nid: str, name: str) -> SV:
        key = (nid, name)
        sv = self.table.get(key)
        if sv is None:
            t = self.shape.member_type(name)
            if t is None:
                raise KeyError(f"unknown shape member {name!r}")
            sv = self._member_placeholder(t)
            self.table[key] = sv
            if isinstance(sv, SVar):
                self._origins[sv.name] = key
        return sv

    def metadata(self, nid: str, name: str) -> SV:
        key = (nid, name)
        sv = self.table.get(key)
        if sv is not None:
            return sv
        if name == "bias":
            sv = self.fresh_var("X", "Real")
        elif name == "layer":
            sv = self.fresh_var("X", "Int")
        elif name == "weight":
            sv = SList(tuple(self.fresh_var("X", "Real")
                             for _ in range(max(len(self.prevs), 1))))
        elif name == "equations":
            items = []
            for _ in range(max(len(self.prevs), 1)):
                v = self.fresh_var("Z", "Bool")
                # stored equations hold on every concrete network by
                # construction, so the template assumes them
                self.constraints.append(v)
                items.append(v)
            sv = SList(tuple(items))
        else:
            raise KeyError(f"unknown metadata {name!r}")
        self.table[key] = sv
        return sv

    # -- structure ----------------------------------------------------------

    def add_neuron(self, prefix: str = "t") -> str:
        nid = self.fresh_neuron_id(prefix)
        self.neurons.append(nid)
        self.value_var(nid)
        for mname, _ in self.shape.members:
            self.member(nid, mname)
        if self.prop_eval is not None:
            self.constraints.append(self.prop_eval(self, nid))
        return nid

    def is_expanded(self, nid: str, name: str) -> bool:
        sv = self.table.get((nid, name))
        return isinstance(sv, (SPoly, SSym, SNeuron, SEps, SConst))

    def dump(self) -> str:
        """Textual table `neuron.member = term` plus the constraint list;
        stable ordering for golden tests."""
        from .symval import SV
        lines = []
        for (nid, member), sv in sorted(self.table.items()):
            if member == "!value":
                lines.append(f"{nid}.<value> = {sv_text(sv)}")
            elif nid == "!eps":
                lines.append(f"noise {member} = {sv_text(sv)}")
            else:
                lines.append(f"{nid}.{member} = {sv_text(sv)}")
        lines.append("constraints:")
        for c in self.constraints:
            lines.append("  " + sv_text(c))
        return "\n".join(lines) + "\n"

    def expand_member(self, nid: str, name: str) -> None:
        """Rewrite a polyhedral/noise member placeholder into explicit form.

        Polyhedral members get n_sym fresh neurons with assumed properties;
        noise members range over the shared pool. The old placeholder stays
        pinned to the expanded form, so prior constraint references remain
        meaningful. Idempotent."""
        t = self.shape.member_type(name)
        if t is None or t.kind not in ("PolyExp", "SymExp"):
            return
        if self.is_expanded(nid, name):
            return
        old = self.member(nid, name)
        if t.kind == "PolyExp":
            fresh = [self.add_neuron() for _ in range(self.bounds.n_sym)]
            const = self.fresh_var("X", "Real")
            terms = {tid: self.fresh_var("X", "Real") for tid in fresh}
            sv: SV = SPoly(const, tuple(sorted(terms.items())))
        else:
            pool = self.noise_pool()
            const = self.fresh_var("X", "Real")
            terms = {eid: self.fresh_var("X", "Real") for eid in pool}
            sv = SSym(const, tuple(sorted(terms.items())))
        self.table[(nid, name)] = sv
        self.constraints.append(SBin("==", old, sv))


# ---------------------------------------------------------------------------
# operation relations

def _relu_rel(c: SV, p: SV) -> SV:
    z = sconst(0)
    return s_boolop("and",
                    SBin("=>", s_cmp("<=", p, z), s_cmp("==", c, z)),
                    SBin("=>", s_cmp(">", p, z), s_cmp("==", c, p)))


def op_relation(op: str, c: SV, prevs: list[SV], sdnn: SymbolicDNN) -> SV:
    z = sconst(0)
    if op == "ReLU":
        return _relu_rel(c, prevs[0])
    if op == "Affine":
        w = sdnn.metadata(sdnn.curr, "weight")
        b = sdnn.metadata(sdnn.curr, "bias")
        assert isinstance(w, SList) and len(w.items) == len(prevs)
        acc: SV = b
        from .symval import s_add
        for wi, pi in zip(w.items, prevs):
            acc = s_add(acc, s_mul(wi, pi))
        return s_cmp("==", c, acc)
    if op == "MaxPool":
        ge = s_and_all(s_cmp(">=", c, p) for p in prevs)
        eq = FALSE
        for p in prevs:
            eq = s_boolop("or", eq, s_cmp("==", c, p))
        return s_boolop("and", ge, eq)
    if op == "Max":
        p0, p1 = prevs
        return s_and_all([s_cmp(">=", c, p0), s_cmp(">=", c, p1),
                          s_boolop("or", s_cmp("==", c, p0), s_cmp("==", c, p1))])
    if op == "Min":
        p0, p1 = prevs
        return s_and_all([s_cmp("<=", c, p0), s_cmp("<=", c, p1),
                          s_boolop("or", s_cmp("==", c, p0), s_cmp("==", c, p1))])
    if op == "Add":
        from .symval import s_add
        return s_cmp("==", c, s_add(prevs[0], prevs[1]))
    if op == "Mult":
        return s_cmp("==", c, SBin("*", prevs[0], prevs[1]))
    if op == "rev_ReLU":
        return _relu_rel(prevs[0], c)
    if op == "rev_Max":
        p0, p1 = prevs
        return s_and_all([s_cmp(">=", p0, c), s_cmp(">=", p0, p1),
                          s_boolop("or", s_cmp("==", p0, c), s_cmp("==", p0, p1))])
    if op == "rev_Min":
        p0, p1 = prevs
        return s_and_all([s_cmp("<=", p0, c), s_cmp("<=", p0, p1),
                          s_boolop("or", s_cmp("==", p0, c), s_cmp("==", p0, p1))])
    if op == "rev_Add":
        from .symval import s_add
        return s_cmp("==", prevs[0], s_add(c, prevs[1]))
    if op == "rev_Mult":
        return s_cmp("==", prevs[0], SBin("*", c, prevs[1]))
    if op == "rev_MaxPool":
        return s_and_all(s_cmp(">=", p, c) for p in prevs)
    if op == "rev_Affine":
        # the relation lives in the assumed equations metadata
        return TRUE
    raise UnsupportedOp(f"no semantic relation for operation {op!r}")


def sym_prev_count(op: str, bounds: Bounds) -> int:
    if op == "rev_MaxPool":
        return 1
    arity = prev_arity(op)
    if arity == "single":
        return 1
    if arity == "pair":
        return 2
    return bounds.n_prev


def create_symbolic_dnn(shape: ShapeDecl, op: str, bounds: Bounds,
                        prop_eval) -> SymbolicDNN:
    if op.replace("rev_", "") in ("Sigmoid", "Tanh"):
        raise UnsupportedOp(f"{op}: transcendental relations are out of the "
                            "verified fragment")
    sdnn = SymbolicDNN(shape=shape, op=op, bounds=bounds, prop_eval=None)
    k = sym_prev_count(op, bounds)
    sdnn.neurons.append("curr")
    sdnn.value_var("curr")
    sdnn.prevs = [f"p{i:02d}" for i in range(k)]
    for pid in sdnn.prevs:
        sdnn.neurons.append(pid)
        sdnn.value_var(pid)
    for nid in ["curr"] + sdnn.prevs:
        for mname, _ in shape.members:
            sdnn.member(nid, mname)
    # property assumptions for the initial neurons, then keep the evaluator
    # around for neurons added later by expansion
    for nid in ["curr"] + sdnn.prevs:
        sdnn.constraints.append(prop_eval(sdnn, nid))
    sdnn.prop_eval = prop_eval
    rel = op_relation(op, SNeuron("curr"), [SNeuron(p) for p in sdnn.prevs], sdnn)
    sdnn.constraints.append(rel)
    return sdnn


def sv_text(sv) -> str:
    from .symval import (SBin, SConst, SEps, SIte, SList, SListCons, SListIte,
                         SNeuron, SPoly, SSym, SUn, SVar)
    if isinstance(sv, SConst):
        return str(sv.value).lower() if isinstance(sv.value, bool) else str(sv.value)
    if isinstance(sv, SVar):
        return sv.name
    if isinstance(sv, SNeuron):
        return sv.nid
    if isinstance(sv, SEps):
        return f"eps:{sv.eid}"
    if isinstance(sv, SUn):
        return f"({sv.op} {sv_text(sv.a)})"
    if isinstance(sv, SBin):
        return f"({sv_text(sv.a)} {sv.op} {sv_text(sv.b)})"
    if isinstance(sv, SIte):
        return f"if({sv_text(sv.c)}, {sv_text(sv.t)}, {sv_text(sv.e)})"
    if isinstance(sv, SPoly):
        terms = " + ".join(f"{sv_text(c)}*{n}" for n, c in sv.terms)
        return f"({sv_text(sv.const)} + {terms})" if terms else sv_text(sv.const)
    if isinstance(sv, SSym):
        terms = " + ".join(f"{sv_text(c)}*eps:{e}" for e, c in sv.terms)
        return f"({sv_text(sv.const)} + {terms})" if terms else sv_text(sv.const)
    if isinstance(sv, SList):
        return "[" + ", ".join(sv_text(x) for x in sv.items) + "]"
    if isinstance(sv, SListCons):
        return f"cons({sv_text(sv.head)}, {sv_text(sv.tail)})"
    if isinstance(sv, SListIte):
        return f"if({sv_text(sv.c)}, {sv_text(sv.t)}, {sv_text(sv.e)})"
    return repr(sv)
