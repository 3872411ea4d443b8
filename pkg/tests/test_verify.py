"""Obligation assembly, statuses, counterexample decoding and replay."""
from fractions import Fraction

import pytest

from certlang.ast import TransformerDef
from certlang.corpus import entry
from certlang.parser import parse
from certlang.typecheck import check_program
from certlang.solver import SolverConfig
from certlang.verify import (
    bounds_for_op, decode_counterexample, verify_certifier, verify_transformer,
)

F = Fraction


def _tdef(program, name=None):
    ts = [s for s in program.statements if isinstance(s, TransformerDef)]
    if name is None:
        return ts[0]
    return [t for t in ts if t.name == name][0]


@pytest.fixture(scope="module")
def dp():
    p = parse(entry("deeppoly").source())
    check_program(p)
    return p


def test_relu_all_paths_verified(dp, solver_config):
    obs = verify_transformer(dp, _tdef(dp), "ReLU",
                             bounds_for_op("ReLU", 4, 4), solver_config)
    sound = [o for o in obs if o.kind == "soundness"]
    assert len(sound) == 3
    assert all(o.status == "verified" for o in obs)
    assert any(o.kind == "coverage" for o in obs)


def test_affine_carries_invariant_obligations(dp, solver_config):
    obs = verify_transformer(dp, _tdef(dp), "Affine",
                             bounds_for_op("Affine", 4, 4), solver_config)
    kinds = sorted(o.kind for o in obs)
    assert kinds.count("invariant-base") == 2
    assert kinds.count("invariant-step") == 2
    assert all(o.status == "verified" for o in obs)
    assert all(o.uses_loop_or_solver for o in obs if o.kind == "soundness")


def test_unconditional_zero_relu_falsified_and_replays(solver_config):
    src = ("Def shape as (Real l, Real u, PolyExp L, PolyExp U)"
           "{(curr[l] <= curr) and (curr[u] >= curr) and (curr[L] <= curr) "
           "and (curr[U] >= curr)};\n"
           "Transformer T{ ReLU -> (0, 0, 0, 0); }")
    p = parse(src)
    check_program(p)
    obs = verify_transformer(p, _tdef(p), "ReLU",
                             bounds_for_op("ReLU", 2, 2), solver_config)
    falsified = [o for o in obs if o.status == "falsified"]
    assert falsified and falsified[0].kind == "soundness"
    cex = decode_counterexample(p, falsified[0])
    assert cex.replay_verdict == "violation"
    # the replayed fragment puts the input neuron strictly above zero
    assert cex.new_shape["u"] == F(0)


def test_unsupported_transcendental(solver_config):
    p = parse(entry("sigmoid_tanh").source())
    check_program(p)
    obs = verify_transformer(p, _tdef(p), "Sigmoid",
                             bounds_for_op("Sigmoid", 2, 2), solver_config)
    assert [o.status for o in obs] == ["unsupported"]


def test_report_shape_and_exit_codes(dp, solver_config):
    rep = verify_certifier(dp, n_prev=2, config=solver_config,
                           ops=["ReLU", "Add"], workers=2)
    data = rep.to_json()
    assert rep.exit_code == 0
    assert data["summary"] == {"DeepPoly/ReLU": "verified",
                               "DeepPoly/Add": "verified"} or \
           data["summary"] == {"DeepPoly/Add": "verified",
                               "DeepPoly/ReLU": "verified"}
    for ob in data["obligations"]:
        assert {"certifier", "op", "kind", "path", "status",
                "gen_ms", "solve_ms"} <= set(ob)


def test_falsified_exit_code(solver_config):
    e = entry("deeppoly")
    m = [x for x in e.mutants if x.name == "add_halved"][0]
    p = parse(e.mutant_source(m))
    rep = verify_certifier(p, n_prev=2, config=solver_config, ops=["Add"])
    assert rep.exit_code == 2
    assert rep.case_status()[("DeepPoly", "Add")] == "falsified"


def test_counterexample_model_satisfies_p_not_q(solver_config):
    e = entry("deeppoly")
    m = [x for x in e.mutants if x.name == "maxpool_sum"][0]
    p = parse(e.mutant_source(m))
    rep = verify_certifier(p, n_prev=3, config=solver_config, ops=["MaxPool"])
    falsified = [o for o in rep.obligations
                 if o.status == "falsified" and o.kind == "soundness"]
    assert falsified
    cex = decode_counterexample(p, falsified[0])
    assert cex.replay_verdict == "violation"


def test_rev_op_relations(solver_config):
    p = parse(entry("vegas").source())
    check_program(p)
    back = _tdef(p, "Vegas_backward")
    for op in ("rev_ReLU", "rev_Max", "rev_Add"):
        obs = verify_transformer(p, back, op, bounds_for_op(op, 2, 2),
                                 solver_config)
        assert all(o.status == "verified" for o in obs), op
