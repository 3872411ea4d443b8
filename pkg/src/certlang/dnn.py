"""Concrete network graphs: neurons, metadata, mutable shape records."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Union

from .values import Affine, Value, poly_var

INPUT_OP = "Input"

KNOWN_OPS = {
    "Input", "Affine", "ReLU", "MaxPool", "Max", "Min", "Add", "Mult",
    "Sigmoid", "Tanh", "DotProduct",
}


class FormatError(Exception):
    pass


@dataclass
class NeuronRecord:
    id: str
    op: str
    layer: int
    inputs: list[str] = field(default_factory=list)
    weight: list[Fraction] = field(default_factory=list)
    bias: Fraction = Fraction(0)
    shape: dict[str, Value] = field(default_factory=dict)

    @property
    def is_input(self) -> bool:
        return self.op == INPUT_OP


@dataclass
class ConcreteDNN:
    neurons: dict[str, NeuronRecord]
    input_ids: list[str]
    output_ids: list[str]
    succs: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.succs:
            self.succs = {nid: [] for nid in self.neurons}
            for nid, rec in self.neurons.items():
                for src in rec.inputs:
                    self.succs[src].append(nid)
            for lst in self.succs.values():
                lst.sort()

    def neighbours(self, ids, direction: str) -> set[str]:
        out: set[str] = set()
        for nid in ids:
            if direction == "backward":
                out.update(self.neurons[nid].inputs)
            else:
                out.update(self.succs[nid])
        return out

    def topological_order(self) -> list[str]:
        indeg = {nid: len(rec.inputs) for nid, rec in self.neurons.items()}
        ready = sorted(nid for nid, d in indeg.items() if d == 0)
        order: list[str] = []
        import heapq
        heapq.heapify(ready)
        while ready:
            nid = heapq.heappop(ready)
            order.append(nid)
            for succ in self.succs[nid]:
                indeg[succ] -= 1
                if indeg[succ] == 0:
                    heapq.heappush(ready, succ)
        if len(order) != len(self.neurons):
            raise FormatError("cycle in network graph")
        return order

    def affine_expr(self, nid: str) -> Affine:
        rec = self.neurons[nid]
        return Affine.make("neuron", rec.bias,
                           {pid: w for pid, w in zip(rec.inputs, rec.weight)})

    def equation_pairs(self, nid: str) -> list[tuple[str, Affine]]:
        """Architecture equations: for each affine successor s of nid, the
        pair (s, affine expression of s over nid's layer)."""
        out = []
        for sid in self.succs[nid]:
            srec = self.neurons[sid]
            if srec.op != "Affine":
                continue
            out.append((sid, self.affine_expr(sid)))
        return out


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise FormatError("expected a number")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise FormatError(f"expected a number, got {type(x).__name__}")


def _shape_value(raw, nid: str) -> Value:
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, (int, float, str, Fraction)):
        if raw == "inf":
            return Fraction(10) ** 9  # practical stand-in; bounds stay rational
        if raw == "-inf":
            return -(Fraction(10) ** 9)
        if raw == "self":
            return poly_var(nid)
        return _to_fraction(raw)
    if isinstance(raw, dict):
        kind = raw.get("kind", "poly")
        const = _to_fraction(raw.get("const", 0))
        terms = {str(k): _to_fraction(v) for k, v in raw.get("terms", {}).items()}
        space = "sym" if kind == "sym" else "neuron"
        return Affine.make(space, const, terms)
    raise FormatError(f"bad shape value for {nid!r}: {raw!r}")


def load_dnn_dict(data: dict) -> ConcreteDNN:
    if "neurons" not in data or not isinstance(data["neurons"], list):
        raise FormatError("missing 'neurons' list")
    neurons: dict[str, NeuronRecord] = {}
    for entry in data["neurons"]:
        nid = entry.get("id")
        if not isinstance(nid, str) or not nid:
            raise FormatError("every neuron needs a string id")
        if nid in neurons:
            raise FormatError(f"duplicate neuron id {nid!r}")
        op = entry.get("op", INPUT_OP)
        if op not in KNOWN_OPS:
            raise FormatError(f"unknown op {op!r} for neuron {nid!r}")
        inputs = list(entry.get("inputs", []))
        layer = entry.get("layer")
        if not isinstance(layer, int):
            raise FormatError(f"neuron {nid!r} needs an integer layer")
        weight = [_to_fraction(w) for w in entry.get("weight", [])]
        bias = _to_fraction(entry.get("bias", 0))
        # inputs are kept in ascending id order everywhere; weights follow
        if weight and len(weight) == len(inputs):
            pairs = sorted(zip(inputs, weight))
            inputs = [p for p, _ in pairs]
            weight = [w for _, w in pairs]
        else:
            inputs = sorted(inputs)
        rec = NeuronRecord(nid, op, layer, inputs, weight, bias)
        for member, raw in entry.get("shape_init", {}).items():
            rec.shape[member] = _shape_value(raw, nid)
        neurons[nid] = rec

    for nid, rec in neurons.items():
        for src in rec.inputs:
            if src not in neurons:
                raise FormatError(f"neuron {nid!r} references unknown input {src!r}")
            if neurons[src].layer >= rec.layer:
                raise FormatError(
                    f"edge {src!r} -> {nid!r} does not increase the layer index")
        if rec.op == INPUT_OP:
            if rec.inputs:
                raise FormatError(f"input neuron {nid!r} must not have inputs")
        else:
            if not rec.inputs:
                raise FormatError(f"neuron {nid!r} has op {rec.op} but no inputs")
            if rec.op == "Affine" and len(rec.weight) != len(rec.inputs):
                raise FormatError(
                    f"neuron {nid!r}: weight length {len(rec.weight)} != "
                    f"in-degree {len(rec.inputs)}")
            if rec.op in ("ReLU", "Sigmoid", "Tanh") and len(rec.inputs) != 1:
                raise FormatError(f"neuron {nid!r}: {rec.op} takes one input")
            if rec.op in ("Max", "Min", "Add", "Mult") and len(rec.inputs) != 2:
                raise FormatError(f"neuron {nid!r}: {rec.op} takes two inputs")

    input_ids = sorted(nid for nid, rec in neurons.items() if rec.is_input)
    with_succ = {src for rec in neurons.values() for src in rec.inputs}
    output_ids = sorted(nid for nid in neurons if nid not in with_succ)
    net = ConcreteDNN(neurons, input_ids, output_ids)
    net.topological_order()  # raises on cycles
    return net


def load_dnn(path: Union[str, Path]) -> ConcreteDNN:
    try:
        with open(path) as fh:
            data = json.load(fh, parse_float=Fraction, parse_int=Fraction)
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad JSON: {exc}") from exc
    return _postprocess_json(data)


def loads_dnn(text: str) -> ConcreteDNN:
    try:
        data = json.loads(text, parse_float=Fraction, parse_int=Fraction)
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad JSON: {exc}") from exc
    return _postprocess_json(data)


def _postprocess_json(data: dict) -> ConcreteDNN:
    # json parse hooks turn layer indices into Fractions; normalize them back
    for entry in data.get("neurons", []):
        if isinstance(entry.get("layer"), Fraction):
            f = entry["layer"]
            if f.denominator == 1:
                entry["layer"] = int(f)
    return load_dnn_dict(data)


def dump_shapes(net: ConcreteDNN) -> dict:
    from .values import value_str
    return {nid: {m: value_str(v) for m, v in rec.shape.items()}
            for nid, rec in sorted(net.neurons.items())}
