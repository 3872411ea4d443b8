import json
from fractions import Fraction
from pathlib import Path

import pytest

from certlang.parser import parse
from certlang.solver import SolverConfig
from certlang.corpus import corpus_manifest, entry

FIG1_STYLE = (Path(__file__).parent.parent
              / "src/certlang/corpus/deeppoly/certifier.cf")


@pytest.fixture(scope="session")
def solver_config():
    return SolverConfig(timeout_s=60)


@pytest.fixture(scope="session")
def deeppoly_program():
    return parse(entry("deeppoly").source())


@pytest.fixture(scope="session")
def corpus_entries():
    return corpus_manifest()


def toy_relu_net() -> dict:
    return {
        "neurons": [
            {"id": "x1", "op": "Input", "layer": 0,
             "shape_init": {"l": -1, "u": 1, "L": -1, "U": 1}},
            {"id": "x2", "op": "Input", "layer": 0,
             "shape_init": {"l": -1, "u": 1, "L": -1, "U": 1}},
            {"id": "n3", "op": "Affine", "layer": 1, "inputs": ["x1", "x2"],
             "weight": [1, 1], "bias": 0},
            {"id": "n4", "op": "ReLU", "layer": 2, "inputs": ["n3"]},
        ]
    }


@pytest.fixture
def toy_net_dict():
    return toy_relu_net()
