"""Bundled certifier programs, their seeded-bug variants, and fixtures.

Each bug is a token-level substitution against the correct program; the
mutants/ directories carry the same change as a reviewable unified diff.
"""
from __future__ import annotations

import difflib
from dataclasses import dataclass, field
from pathlib import Path

CORPUS_DIR = Path(__file__).with_name("corpus")


@dataclass(frozen=True)
class Mutant:
    name: str
    ops: tuple[str, ...]            # operations expected to falsify
    find: str
    replace: str
    count: int = 1                  # expected number of occurrences replaced


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    transformers: tuple[str, ...]
    verify_ops: tuple[str, ...]     # expected VERIFIED operations
    mutants: tuple[Mutant, ...] = ()
    check_only: bool = False        # parses and type-checks; not verified/run

    @property
    def path(self) -> Path:
        return CORPUS_DIR / self.name / "certifier.cf"

    def source(self) -> str:
        return self.path.read_text()

    def mutant_source(self, mutant: Mutant) -> str:
        src = self.source()
        occurrences = src.count(mutant.find)
        if occurrences != mutant.count:
            raise ValueError(
                f"{self.name}/{mutant.name}: pattern occurs {occurrences} times, "
                f"expected {mutant.count}")
        return src.replace(mutant.find, mutant.replace)

    def mutant_diff(self, mutant: Mutant) -> str:
        a = self.source().splitlines(keepends=True)
        b = self.mutant_source(mutant).splitlines(keepends=True)
        return "".join(difflib.unified_diff(
            a, b, fromfile="certifier.cf", tofile=f"mutants/{mutant.name}"))


PRIMITIVES = ("ReLU", "Max", "Min", "Add", "Mult")
REV_PRIMITIVES = ("rev_ReLU", "rev_Max", "rev_Min", "rev_Add", "rev_Mult")

_DEEPPOLY_MUTANTS = (
    Mutant("affine_sub_bias", ("Affine",),
           "prev.dot(curr[w]) + curr[b], prev.dot(curr[w]) + curr[b]);",
           "prev.dot(curr[w]) - curr[b], prev.dot(curr[w]) + curr[b]);"),
    Mutant("maxpool_sum", ("MaxPool",),
           "avg(compare(prev, f)), avg(compare(prev, f))",
           "sum(compare(prev, f)), sum(compare(prev, f))"),
    Mutant("relu_denominator", ("ReLU",),
           "((prev[u] / (prev[u] - prev[l])) * prev)",
           "((prev[u] / (prev[u] + prev[l])) * prev)"),
    Mutant("max_guard", ("Max",),
           "Max -> (prev0[l] >= prev1[u]) ?",
           "Max -> (prev0[l] <= prev1[u]) ?"),
    Mutant("min_guard", ("Min",),
           "Min -> (prev0[u] <= prev1[l]) ?",
           "Min -> (prev0[u] >= prev1[l]) ?"),
    Mutant("add_halved", ("Add",),
           "prev0 + prev1, prev0 + prev1);",
           "prev0 + prev1, (prev0 + prev1) / 2);"),
    Mutant("mult_linear", ("Mult",),
           "compute_l(prev0, prev1), compute_u(prev0, prev1), compute_l(prev0, prev1), compute_u(prev0, prev1));",
           "compute_l(prev0, prev1), compute_u(prev0, prev1), prev0[l] * prev1, prev0[u] * prev1);"),
)

_VEGAS_MUTANTS = (
    Mutant("rev_affine_minimize", ("rev_Affine",),
           "solver(maximize, curr, curr[equations].mapList(create_c))",
           "solver(minimize, curr, curr[equations].mapList(create_c))"),
    Mutant("rev_maxpool_lower", ("rev_MaxPool",),
           "rev_MaxPool -> (curr[l], min(curr[u], sum(prev[u])), curr[L], curr[U]);",
           "rev_MaxPool -> (curr[l], min(curr[u], sum(prev[u])), max(curr[l], min(prev[u])), curr[U]);"),
    Mutant("rev_relu_guard", ("rev_ReLU",),
           """rev_ReLU -> (prev[l] > 0) ?
        ((prev[u] >= 0) ? (max(prev[l], curr[l]), min(prev[u], curr[u]), curr[L], curr[U]) : (max(prev[l], curr[l]), curr[u], curr[L], curr[U])) :
        ((prev[u] >= 0) ? (curr[l], min(prev[u], curr[u]), curr[L], curr[U]) : (curr[l], curr[u], curr[L], curr[U]));""",
           """rev_ReLU -> (prev[l] >= 0) ?
        (max(prev[l], curr[l]), min(prev[u], curr[u]), curr[L], curr[U]) :
        (curr[l], min(prev[u], curr[u]), curr[L], curr[U]);"""),
    Mutant("rev_max_operand", ("rev_Max",),
           "rev_Max -> (curr[l], min(curr[u], prev0[u]), curr[L], curr[U]);",
           "rev_Max -> (curr[l], min(curr[u], prev1[u]), curr[L], curr[U]);"),
    Mutant("rev_min_upper", ("rev_Min",),
           "rev_Min -> (max(curr[l], prev0[l]), curr[u], curr[L], curr[U]);",
           "rev_Min -> (max(curr[l], prev0[l]), min(curr[u], prev0[u]), curr[L], curr[U]);"),
    Mutant("rev_add_bounds", ("rev_Add",),
           "rev_Add -> (prev0[l] - prev1[u], prev0[u] - prev1[l], curr[L], curr[U]);",
           "rev_Add -> (prev0[l] - prev1[l], prev0[u] - prev1[u], curr[L], curr[U]);"),
    Mutant("rev_mult_unguarded", ("rev_Mult",),
           "rev_Mult -> ((prev0[l] <= 0) or (prev1[l] <= 0)) ? (curr[l], curr[u], curr[L], curr[U]) : (max(curr[l], compute_l_b(prev0, prev1)), min(curr[u], compute_u_b(prev0, prev1)), curr[L], curr[U]);",
           "rev_Mult -> (max(curr[l], compute_l_b(prev0, prev1)), min(curr[u], compute_u_b(prev0, prev1)), curr[L], curr[U]);"),
)

_POLYZ_MUTANTS = (
    Mutant("simplify_lower_unsigned", ("Affine",),
           "Func simplify_lower(Neuron n, Real coeff) = (coeff >= 0) ? (coeff * n[l]) : (coeff * n[u]);",
           "Func simplify_lower(Neuron n, Real coeff) = (coeff * n[l]);"),
    Mutant("maxpool_mid", ("MaxPool",),
           "(max(prev[l]), max(prev[u]), max(prev[l]), max(prev[u]), ((max(prev[u]) + max(prev[l])) / 2)",
           "(max(prev[l]), max(prev[u]), max(prev[l]), max(prev[u]), ((max(prev[u]) - max(prev[l])) / 2)"),
    Mutant("relu_upper_halved", ("ReLU",),
           "((prev[u] * prev[l]) / (prev[u] - prev[l])), ((prev[u] + prev[l]) / 2)",
           "(((prev[u] / 2) * prev[l]) / (prev[u] - prev[l])), ((prev[u] + prev[l]) / 2)"),
    Mutant("add_lower_twice", ("Add",),
           "Add -> (add_lower(prev0, prev1), add_upper(prev0, prev1),",
           "Add -> (add_lower(prev0, prev1), add_lower(prev0, prev1),"),
    Mutant("mult_radius", ("Mult",),
           "(((compute_u(prev0, prev1) - compute_l(prev0, prev1)) / 2) * sym));\n}",
           "(((compute_u(prev0, prev1) + compute_l(prev0, prev1)) / 2) * sym));\n}"),
)

_DEEPZ_MUTANTS = (
    Mutant("affine_missing_bias", ("Affine",),
           "Affine -> ((prev.dot(curr[w]) + curr[b]).map(simplify_lower),",
           "Affine -> ((prev.dot(curr[w])).map(simplify_lower),"),
    Mutant("maxpool_radius_halved", ("MaxPool",),
           "((max(prev[u]) - max(prev[l])) / 2) * sym));\n\n    ReLU",
           "((max(prev[u]) - max(prev[l])) / 2) * (sym / 2)));\n\n    ReLU"),
    Mutant("relu_missing_noise", ("ReLU",),
           "(0, prev[u], (prev[u] / 2) + ((prev[u] / 2) * sym)));",
           "(0, prev[u], (prev[u] / 2) + (prev[u] / 2)));"),
    Mutant("max_min_swapped", ("Max", "Min"),
           """Max -> (prev0[l] >= prev1[u]) ?
        (prev0[l], prev0[u], prev0[z]) :
        ((prev1[l] >= prev0[u]) ?
            (prev1[l], prev1[u], prev1[z]) :
            (max(prev0[l], prev1[l]), max(prev0[u], prev1[u]), (0.5 * (max(prev0[l], prev1[l]) + max(prev0[u], prev1[u]))) + (0.5 * sym * (max(prev0[u], prev1[u]) - max(prev0[l], prev1[l])))));

    Min -> (prev0[l] >= prev1[u]) ?
        (prev1[l], prev1[u], prev1[z]) :
        ((prev1[l] >= prev0[u]) ?
            (prev0[l], prev0[u], prev0[z]) :
            (min(prev0[l], prev1[l]), min(prev0[u], prev1[u]), (0.5 * (min(prev0[l], prev1[l]) + min(prev0[u], prev1[u]))) + (0.5 * sym * (min(prev0[u], prev1[u]) - min(prev0[l], prev1[l])))));""",
           """Max -> (prev0[l] >= prev1[u]) ?
        (prev1[l], prev1[u], prev1[z]) :
        ((prev1[l] >= prev0[u]) ?
            (prev0[l], prev0[u], prev0[z]) :
            (min(prev0[l], prev1[l]), min(prev0[u], prev1[u]), (0.5 * (min(prev0[l], prev1[l]) + min(prev0[u], prev1[u]))) + (0.5 * sym * (min(prev0[u], prev1[u]) - min(prev0[l], prev1[l])))));

    Min -> (prev0[l] >= prev1[u]) ?
        (prev0[l], prev0[u], prev0[z]) :
        ((prev1[l] >= prev0[u]) ?
            (prev1[l], prev1[u], prev1[z]) :
            (max(prev0[l], prev1[l]), max(prev0[u], prev1[u]), (0.5 * (max(prev0[l], prev1[l]) + max(prev0[u], prev1[u]))) + (0.5 * sym * (max(prev0[u], prev1[u]) - max(prev0[l], prev1[l])))));"""),
    Mutant("add_noise_minus", ("Add",),
           "Add -> (prev0[l] + prev1[l], prev0[u] + prev1[u], prev0[z] + prev1[z]);",
           "Add -> (prev0[l] + prev1[l], prev0[u] + prev1[u], prev0[z] - prev1[z]);"),
    Mutant("mult_mid_radius_swapped", ("Mult",),
           "((compute_u(prev0, prev1) + compute_l(prev0, prev1)) / 2) + (((compute_u(prev0, prev1) - compute_l(prev0, prev1)) / 2) * sym));\n}",
           "((compute_u(prev0, prev1) - compute_l(prev0, prev1)) / 2) + (((compute_u(prev0, prev1) + compute_l(prev0, prev1)) / 2) * sym));\n}"),
)

_REFINEZONO_MUTANTS = (
    Mutant("affine_minimize_twice", ("Affine",),
           "solver(maximize, prev.dot(curr[w]) + curr[b], prev.mapList(foo)),",
           "solver(minimize, prev.dot(curr[w]) + curr[b], prev.mapList(foo)),"),
    Mutant("maxpool_strict", ("MaxPool",),
           "* sym), (curr <= max(prev[u])) and (curr >= max(prev[l])));",
           "* sym), (curr <= max(prev[u])) and (curr > max(prev[l])));"),
    Mutant("relu_negative_branch", ("ReLU",),
           "(((sum(prev) <= 0) and (curr == 0)) or ((sum(prev) > 0) and (curr == sum(prev))))));",
           "(((sum(prev) <= 0) and (curr < 0)) or ((sum(prev) > 0) and (curr == sum(prev))))));"),
    Mutant("max_inner_min", ("Max",),
           "* (max(prev0[u], prev1[u]) - max(prev0[l], prev1[l]))), (curr <= max(prev0[u], prev1[u]))",
           "* (max(prev0[u], prev1[u]) - max(prev0[l], prev1[l]))), (curr <= min(prev0[u], prev1[u]))"),
    Mutant("min_strict", ("Min",),
           "(prev1[l], prev1[u], prev1[z], (curr <= min(prev0[u], prev1[u]))",
           "(prev1[l], prev1[u], prev1[z], (curr < min(prev0[u], prev1[u]))"),
    Mutant("add_constraint", ("Add",),
           "prev0[z] + prev1[z], prev0 + prev1 == curr);",
           "prev0[z] + prev1[z], prev0 <= curr);"),
    Mutant("mult_compute_u", ("Mult",),
           "Func compute_u(Neuron n1, Neuron n2) = max([n1[l]*n2[l], n1[l]*n2[u], n1[u]*n2[l], n1[u]*n2[u]]);",
           "Func compute_u(Neuron n1, Neuron n2) = max([n1[l]*n2[u], n1[u]*n2[l], n1[u]*n2[u]]);"),
)

_RELUVAL_MUTANTS = (
    Mutant("affine_sub_bias", ("Affine",),
           "Affine -> ((prev.dot(curr[w]) + curr[b]).map(simplify_lower),",
           "Affine -> ((prev.dot(curr[w]) - curr[b]).map(simplify_lower),"),
    Mutant("maxpool_upper_for_lower", ("MaxPool",),
           "MaxPool -> (max(prev[l]), max(prev[u]));",
           "MaxPool -> (max(prev[u]), max(prev[u]));"),
    Mutant("relu_guard", ("ReLU",),
           "ReLU -> (prev[l] >= 0) ? (prev[l], prev[u]) : ((prev[u] <= 0) ? (0, 0) : (0, prev[u]));",
           "ReLU -> (prev[l] >= 0) ? (prev[l], prev[u]) : ((prev[u] >= 0) ? (0, 0) : (0, prev[u]));"),
    Mutant("max_upper", ("Max",),
           "Func max_upper(Neuron n1, Neuron n2) = n1[u] >= n2[u] ? n1[u] : n2[u];",
           "Func max_upper(Neuron n1, Neuron n2) = n1[u] <= n2[u] ? n1[u] : n2[u];"),
    Mutant("min_lower", ("Min",),
           "Func min_lower(Neuron n1, Neuron n2) = n1[l] <= n2[l] ? n1[l] : n2[l];",
           "Func min_lower(Neuron n1, Neuron n2) = n1[l] >= n2[l] ? n1[l] : n2[l];"),
    Mutant("add_crossed", ("Add",),
           "Func add_lower(Neuron n1, Neuron n2) = n1[l] + n2[l];",
           "Func add_lower(Neuron n1, Neuron n2) = n1[l] + n2[u];"),
    Mutant("mult_upper_for_lower", ("Mult",),
           "Mult -> (compute_l(prev0, prev1), compute_u(prev0, prev1));",
           "Mult -> (compute_u(prev0, prev1), compute_u(prev0, prev1));"),
)

ENTRIES = (
    CorpusEntry("deeppoly", ("DeepPoly",),
                ("Affine", "MaxPool") + PRIMITIVES, _DEEPPOLY_MUTANTS),
    CorpusEntry("vegas", ("Vegas_forward", "Vegas_backward"),
                ("Affine", "MaxPool") + PRIMITIVES
                + ("rev_Affine", "rev_MaxPool") + REV_PRIMITIVES,
                _VEGAS_MUTANTS),
    CorpusEntry("polyz", ("PolyZ",),
                ("Affine", "MaxPool") + PRIMITIVES, _POLYZ_MUTANTS),
    CorpusEntry("deepz", ("DeepZ",),
                ("Affine", "MaxPool") + PRIMITIVES, _DEEPZ_MUTANTS),
    CorpusEntry("refinezono", ("Refine_zono",),
                ("Affine", "MaxPool") + PRIMITIVES, _REFINEZONO_MUTANTS),
    CorpusEntry("reluval", ("ReluVal",),
                ("Affine", "MaxPool") + PRIMITIVES, _RELUVAL_MUTANTS),
    CorpusEntry("sigmoid_tanh", ("SShaped",), (), (), check_only=True),
)


def corpus_manifest() -> tuple[CorpusEntry, ...]:
    return ENTRIES


def entry(name: str) -> CorpusEntry:
    for e in ENTRIES:
        if e.name == name:
            return e
    raise KeyError(name)


def write_mutant_diffs() -> None:
    """Regenerate the reviewable diff files from the substitution table."""
    for e in ENTRIES:
        for m in e.mutants:
            out = CORPUS_DIR / e.name / "mutants" / f"{m.name}.diff"
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(e.mutant_diff(m))
