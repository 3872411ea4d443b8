"""AST for certifier programs: types, expressions, statements."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    end_line: int
    end_col: int

    @staticmethod
    def point(line: int, col: int) -> "Span":
        return Span(line, col, line, col)

    def to(self, other: "Span") -> "Span":
        return Span(self.line, self.col, other.end_line, other.end_col)


DUMMY = Span(1, 1, 1, 1)

# ---------------------------------------------------------------------------
# Types

BASE_KINDS = ("Int", "Real", "Bool", "Neuron", "Sym", "PolyExp", "SymExp", "Ct")


@dataclass(frozen=True)
class TypeExpr:
    kind: str                      # one of BASE_KINDS, "Bot", "Top", or "List"
    elem: Optional["TypeExpr"] = None   # set iff kind == "List"

    def __post_init__(self):
        if self.kind == "List":
            if self.elem is None or self.elem.kind == "List":
                raise ValueError("lists nest at most one level over base types")
        elif self.elem is not None:
            raise ValueError("elem only valid for List")

    def __str__(self) -> str:
        if self.kind == "List":
            return f"{self.elem}[]"
        return self.kind

    @property
    def is_list(self) -> bool:
        return self.kind == "List"


INT = TypeExpr("Int")
REAL = TypeExpr("Real")
BOOL = TypeExpr("Bool")
NEURON = TypeExpr("Neuron")
SYM = TypeExpr("Sym")
POLYEXP = TypeExpr("PolyExp")
SYMEXP = TypeExpr("SymExp")
CT = TypeExpr("Ct")
BOT = TypeExpr("Bot")
TOP = TypeExpr("Top")


def list_of(t: TypeExpr) -> TypeExpr:
    return TypeExpr("List", t)


@dataclass(frozen=True)
class FuncType:
    args: tuple[TypeExpr, ...]
    ret: TypeExpr

    def __str__(self) -> str:
        return "(" + " x ".join(map(str, self.args)) + ") -> " + str(self.ret)


# ---------------------------------------------------------------------------
# Expressions

class Expr:
    span: Span


@dataclass
class Const(Expr):
    value: Union[Fraction, bool]
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class Var(Expr):
    name: str
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class SymFresh(Expr):
    """The `sym` keyword; each evaluation mints a fresh noise symbol."""
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class Unary(Expr):
    op: str                         # "not" | "-"
    operand: Expr
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class Binary(Expr):
    op: str   # + - * / and or <= >= == < > <>
    left: Expr
    right: Expr
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class Ternary(Expr):
    cond: Expr
    then: Expr
    other: Expr
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class MetadataAccess(Expr):
    base: Expr
    name: str                       # weight | bias | layer | equations
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class ShapeAccess(Expr):
    base: Expr
    member: str
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class FnRef:
    """Reference to a function in call-by-name argument position.

    `kind` is "name" for a plain function name, "neg" for a negated
    priority function (written `-f`), or "const" for the literal
    true/false stopping conditions the corpus uses.
    """
    kind: str
    name: str = ""
    value: bool = False
    span: Span = field(default=DUMMY, compare=False)

    def __str__(self) -> str:
        if self.kind == "name":
            return self.name
        if self.kind == "neg":
            return "-" + self.name
        return "true" if self.value else "false"


@dataclass
class Traverse(Expr):
    subject: Expr                   # syntactically a Var
    direction: str                  # forward | backward
    priority: FnRef
    stop: FnRef
    replace: FnRef
    invariant: Expr
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class Solver(Expr):
    op: str                         # maximize | minimize
    objective: Expr
    constraint: Expr
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class ListOp(Expr):
    op: str                         # max | min | sum | avg | len
    operand: Expr
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class MinMax2(Expr):
    """Binary max/min: max(e1, e2)."""
    op: str
    left: Expr
    right: Expr
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class Dot(Expr):
    left: Expr
    right: Expr
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class Concat(Expr):
    left: Expr
    right: Expr
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class CompareOp(Expr):
    operand: Expr
    fn: FnRef
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class Map(Expr):
    operand: Expr
    fn: FnRef
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class MapList(Expr):
    operand: Expr
    fn: FnRef
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class Call(Expr):
    fn: str
    args: list[Expr]
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class ListLit(Expr):
    """[e1, e2, ...] — needed for e.g. min([a*c, a*d, b*c, b*d])."""
    items: list[Expr]
    span: Span = field(default=DUMMY, compare=False)


# ---------------------------------------------------------------------------
# Transformer return trees

@dataclass
class RetTuple:
    exprs: list[Expr]
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class RetGuard:
    cond: Expr
    then: "RetNode"
    other: "RetNode"
    span: Span = field(default=DUMMY, compare=False)


RetNode = Union[RetTuple, RetGuard]


def ret_leaves(node: RetNode) -> list[RetTuple]:
    if isinstance(node, RetTuple):
        return [node]
    return ret_leaves(node.then) + ret_leaves(node.other)


# ---------------------------------------------------------------------------
# Statements

class Statement:
    span: Span


@dataclass
class FuncDef(Statement):
    name: str
    params: list[tuple[TypeExpr, str]]
    body: Expr
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class TransformerDef(Statement):
    name: str
    cases: dict[str, RetNode]       # DNN op name -> return tree, insertion order
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class Flow(Statement):
    direction: str
    priority: FnRef
    stop: FnRef
    transformer: str
    span: Span = field(default=DUMMY, compare=False)


@dataclass
class ShapeDecl:
    members: list[tuple[str, TypeExpr]]
    property: Expr
    span: Span = field(default=DUMMY, compare=False)

    def member_type(self, name: str) -> Optional[TypeExpr]:
        for n, t in self.members:
            if n == name:
                return t
        return None

    @property
    def member_names(self) -> list[str]:
        return [n for n, _ in self.members]


@dataclass
class Program:
    shape: ShapeDecl
    statements: list[Statement] = field(default_factory=list)


METADATA_TYPES = {
    "weight": list_of(REAL),
    "bias": REAL,
    "layer": INT,
    "equations": list_of(CT),
}

METADATA_ALIASES = {"w": "weight", "b": "bias"}


def resolve_metadata(name: str) -> Optional[str]:
    if name in METADATA_TYPES:
        return name
    return METADATA_ALIASES.get(name)
