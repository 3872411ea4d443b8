"""Corpus integrity: manifest, golden stability, mutant diffs."""
import difflib
from pathlib import Path

from certlang.corpus import CORPUS_DIR, corpus_manifest, entry
from certlang.parser import parse
from certlang.printer import pretty_print
from certlang.typecheck import check_program


def test_manifest_counts():
    entries = corpus_manifest()
    runnable = [e for e in entries if not e.check_only]
    assert len(runnable) == 6
    assert {e.name for e in runnable} == {
        "deeppoly", "vegas", "polyz", "deepz", "refinezono", "reluval"}
    assert sum(len(e.mutants) for e in entries) == 39


def test_every_program_type_checks(corpus_entries):
    for e in corpus_entries:
        check_program(parse(e.source()))


def test_every_mutant_type_checks(corpus_entries):
    for e in corpus_entries:
        for m in e.mutants:
            check_program(parse(e.mutant_source(m)))


def test_mutants_expected_ops_exist(corpus_entries):
    for e in corpus_entries:
        program = parse(e.source())
        cases = set()
        for s in program.statements:
            if hasattr(s, "cases"):
                cases |= set(s.cases)
        for m in e.mutants:
            assert set(m.ops) <= cases, (e.name, m.name)


def test_shipped_diffs_match_substitutions(corpus_entries):
    for e in corpus_entries:
        for m in e.mutants:
            shipped = (CORPUS_DIR / e.name / "mutants" / f"{m.name}.diff")
            assert shipped.is_file(), shipped
            assert shipped.read_text() == e.mutant_diff(m)


def test_mutants_differ_only_in_intended_lines(corpus_entries):
    for e in corpus_entries:
        base = e.source().splitlines()
        for m in e.mutants:
            mut = e.mutant_source(m).splitlines()
            changed = [
                (a, b) for a, b in
                zip(base, mut)
                if a != b
            ] if len(base) == len(mut) else None
            if changed is None:
                # multi-line substitutions change the line count
                assert "\n" in m.find or "\n" in m.replace
                continue
            for a, b in changed:
                assert a.strip() != b.strip()
                assert any(tok in m.find for tok in a.split() if len(tok) > 2) or \
                    m.find in "\n".join(base)


def test_corpus_is_byte_stable_under_round_trip(corpus_entries):
    for e in corpus_entries:
        p1 = parse(e.source())
        p2 = parse(pretty_print(p1))
        assert p1.shape == p2.shape and p1.statements == p2.statements


def test_verify_ops_cover_primitives():
    for name in ("deeppoly", "deepz", "refinezono", "reluval"):
        ops = set(entry(name).verify_ops)
        assert {"ReLU", "Max", "Min", "Add", "Mult"} <= ops
    assert {"rev_ReLU", "rev_Max", "rev_Min", "rev_Add", "rev_Mult"} <= set(
        entry("vegas").verify_ops)


def test_net_fixtures_load():
    from certlang.dnn import load_dnn
    for path in CORPUS_DIR.glob("*/nets/*.json"):
        load_dnn(path)


def test_expected_shape_tables_match():
    import json
    from certlang.dnn import dump_shapes, load_dnn
    from certlang.interp import run_program
    from certlang.solver import SolverConfig

    for exp_path in CORPUS_DIR.glob("*/expected/*.json"):
        name = exp_path.parent.parent.name
        program = parse(entry(name).source())
        net = load_dnn(exp_path.parent.parent / "nets" / exp_path.name)
        run_program(program, net, solver_config=SolverConfig(timeout_s=30))
        assert dump_shapes(net) == json.loads(exp_path.read_text()), exp_path
