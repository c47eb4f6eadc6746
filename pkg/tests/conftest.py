import json
from pathlib import Path

import pytest

from deepsafe.network import load_network
from deepsafe.synthetic import make_band_dataset

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def tiny_net_path():
    return FIXTURES / "tiny_net.json"


@pytest.fixture(scope="session")
def tiny_net(tiny_net_path):
    return load_network(tiny_net_path)


@pytest.fixture(scope="session")
def tiny_queries():
    with open(FIXTURES / "tiny_queries.json") as fh:
        return json.load(fh)["queries"]


@pytest.fixture(scope="session")
def band_dataset():
    return make_band_dataset()


def scalar_forward(net_doc, x):
    """Independent pure-python forward pass over a network JSON document.

    Test-side oracle: shares no code with the package's evaluators.
    """
    z = [float(v) for v in x]
    for layer in net_doc["layers"]:
        out = []
        for row, b in zip(layer["weights"], layer["bias"]):
            s = float(b)
            for w, v in zip(row, z):
                s += float(w) * v
            if layer["activation"] == "relu":
                s = max(s, 0.0)
            out.append(s)
        z = out
    return z


@pytest.fixture(scope="session")
def tiny_net_doc(tiny_net_path):
    with open(tiny_net_path) as fh:
        return json.load(fh)
