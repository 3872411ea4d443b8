"""Random network generation and sampling-based soundness checks.

Used by the fuzz command and the property-test suites: generate bounded
random graphs, run a certifier over them, then evaluate the declared
property at many sampled input points and at every neuron.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .ast import Program, ShapeDecl
from .dnn import ConcreteDNN, NeuronRecord
from .interp import Env, eval_expr, property_conjuncts, run_program
from .values import Affine, Value, ct_holds, poly_var, sym_var, RuntimeErrorCF


@dataclass
class FuzzReport:
    nets: int = 0
    points: int = 0
    violations: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.errors


def _rand_frac(rng: random.Random, lo: int = -4, hi: int = 4) -> Fraction:
    return Fraction(rng.randint(lo * 4, hi * 4), 4)


def _rand_weight(rng: random.Random) -> Fraction:
    # nonzero: zero weights make backward refinement objectives unbounded
    v = _rand_frac(rng, -2, 2)
    return v if v != 0 else Fraction(1, 2)


def random_dnn(rng: random.Random, shape: ShapeDecl, max_neurons: int = 30,
               ops: Optional[list[str]] = None, n_prev: int = 4,
               single_consumer: bool = False) -> ConcreteDNN:
    """A layered random DAG with valid input shapes for the given domain."""
    ops = ops or ["Affine", "ReLU", "Max", "Min", "Add", "Mult", "MaxPool"]
    n_inputs = rng.randint(1, 3)
    neurons: dict[str, NeuronRecord] = {}
    eps_k = [0]

    def input_shape(nid: str) -> dict[str, Value]:
        lo = _rand_frac(rng, -3, 0)
        hi = lo + abs(_rand_frac(rng, 0, 3)) + Fraction(1, 2)
        mid, rad = (lo + hi) / 2, (hi - lo) / 2
        out: dict[str, Value] = {}
        seen_real = seen_poly = 0
        for mname, mtype in shape.members:
            if mtype.kind == "Real":
                out[mname] = lo if seen_real == 0 else hi
                seen_real += 1
            elif mtype.kind == "PolyExp":
                out[mname] = lo if seen_poly == 0 else hi
                seen_poly += 1
            elif mtype.kind == "SymExp":
                eps_k[0] += 1
                out[mname] = Affine.make("sym", mid, {f"in{eps_k[0]}": rad})
            elif mtype.kind == "Ct":
                from .values import BoolOpCt, CmpCt
                out[mname] = BoolOpCt(
                    "and",
                    CmpCt("<=", lo, poly_var(nid)),
                    CmpCt(">=", hi, poly_var(nid)))
            else:
                out[mname] = Fraction(0)
        return out

    for i in range(n_inputs):
        nid = f"x{i:02d}"
        rec = NeuronRecord(nid, "Input", 0)
        rec.shape = input_shape(nid)
        neurons[nid] = rec

    total = rng.randint(n_inputs + 1, max_neurons)
    layer = 1
    frontier = list(neurons)
    idx = 0
    while len(neurons) < total:
        width = rng.randint(1, min(3, total - len(neurons)))
        fresh = []
        pool = [nid for nid in neurons
                if not single_consumer or not _consumed(neurons, nid)]
        if not pool:
            break
        for _ in range(width):
            pool = [nid for nid in neurons
                    if not single_consumer or not _consumed(neurons, nid)]
            if not pool:
                break
            op = rng.choice(ops)
            nid = f"n{idx:03d}"
            idx += 1
            if op in ("ReLU", "Sigmoid", "Tanh"):
                ins = [rng.choice(pool)]
            elif op in ("Max", "Min", "Add", "Mult"):
                if len(pool) < 2:
                    op = "ReLU"
                    ins = [rng.choice(pool)]
                else:
                    ins = rng.sample(pool, 2)
            elif op == "MaxPool":
                k = rng.randint(1, min(n_prev, len(pool)))
                ins = rng.sample(pool, k)
            else:
                k = rng.randint(1, min(n_prev, len(pool)))
                ins = rng.sample(pool, k)
            ins = sorted(ins)
            depth = 1 + max(neurons[p].layer for p in ins)
            rec = NeuronRecord(nid, op, depth, ins)
            if op == "Affine":
                rec.weight = [_rand_weight(rng) for _ in ins]
                rec.bias = _rand_frac(rng, -2, 2)
            neurons[nid] = rec
            fresh.append(nid)
        layer += 1
        if not fresh:
            break

    # round-trip through the loader so generated graphs satisfy exactly the
    # invariants user-supplied files must
    from .dnn import load_dnn_dict
    data = {"neurons": [
        {"id": nid, "op": rec.op, "layer": rec.layer, "inputs": rec.inputs,
         "weight": rec.weight, "bias": rec.bias}
        for nid, rec in neurons.items()]}
    net = load_dnn_dict(data)
    for nid, rec in neurons.items():
        net.neurons[nid].shape = rec.shape
    return net


def _consumed(neurons: dict, nid: str) -> bool:
    return any(nid in r.inputs for r in neurons.values())


FORWARD_OPS = {
    "ReLU": lambda vals: max(vals[0], Fraction(0)),
    "Max": lambda vals: max(vals),
    "Min": lambda vals: min(vals),
    "Add": lambda vals: vals[0] + vals[1],
    "Mult": lambda vals: vals[0] * vals[1],
    "MaxPool": lambda vals: max(vals),
}


def forward_execute(net: ConcreteDNN, inputs: dict[str, Fraction]) -> dict[str, Fraction]:
    point = dict(inputs)
    for nid in net.topological_order():
        rec = net.neurons[nid]
        if rec.is_input:
            continue
        vals = [point[p] for p in rec.inputs]
        if rec.op == "Affine":
            point[nid] = rec.bias + sum(w * v for w, v in zip(rec.weight, vals))
        else:
            point[nid] = FORWARD_OPS[rec.op](vals)
    return point


def input_box(net: ConcreteDNN, shape: ShapeDecl) -> dict[str, tuple[Fraction, Fraction]]:
    reals = [m for m, t in shape.members if t.kind == "Real"]
    lo_m, hi_m = reals[0], reals[1]
    out = {}
    for nid in net.input_ids:
        rec = net.neurons[nid]
        out[nid] = (rec.shape[lo_m], rec.shape[hi_m])
    return out


def sample_point(rng: random.Random, box: dict) -> dict[str, Fraction]:
    out = {}
    for nid, (lo, hi) in box.items():
        t = Fraction(rng.randint(0, 16), 16)
        out[nid] = lo + (hi - lo) * t
    return out


def check_property_at(program: Program, net: ConcreteDNN,
                      point: dict[str, Fraction]) -> list[tuple[str, str]]:
    """Property conjunct failures at one executed input point."""
    from .ast import FuncDef
    env = Env(functions={s.name: s for s in program.statements
                         if isinstance(s, FuncDef)}, shape=program.shape)
    failures = []
    for nid, rec in net.neurons.items():
        if not rec.shape:
            continue
        child = env.scoped({"curr": poly_var(nid)})
        for conjunct in property_conjuncts(program.shape):
            v = eval_expr(child, net, conjunct)
            if not ct_holds(v, point):
                from .printer import print_expr
                failures.append((nid, print_expr(conjunct)))
    return failures


def fuzz_certifier(program: Program, nets: int = 20, points: int = 20,
                   max_neurons: int = 20, ops: Optional[list[str]] = None,
                   seed: int = 0, solver_config=None,
                   single_consumer: bool = False,
                   check_value_types: bool = False) -> FuzzReport:
    rng = random.Random(seed)
    report = FuzzReport()
    shape = program.shape
    for k in range(nets):
        net = random_dnn(rng, shape, max_neurons, ops,
                         single_consumer=single_consumer)
        # the certified input region is the box the run started from;
        # backward passes may rewrite input bounds afterwards
        box = input_box(net, shape)
        try:
            run_program(program, net, solver_config=solver_config,
                        check_value_types=check_value_types)
        except RuntimeErrorCF as exc:
            report.errors.append((k, str(exc)))
            continue
        report.nets += 1
        for _ in range(points):
            point = sample_point(rng, box)
            values = forward_execute(net, point)
            bad = check_property_at(program, net, values)
            report.points += 1
            if bad:
                report.violations.append((k, point, bad))
    return report
