import json
import pathlib
import sys
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pytest

from ruinkit.absorbing import greens_function, restrict
from ruinkit.models import ModelSpec, generate
from ruinkit.spectral import perron_pair

FIXTURES = pathlib.Path(__file__).with_name("fixtures")


@lru_cache(maxsize=None)
def built(kind, N, n=2, margin=1, lazy=None):
    """(graph, domain, sub, greens, pair) for a model, cached across tests."""
    g, d = generate(ModelSpec(kind, N, n, margin, lazy))
    sub = restrict(None, d)
    return g, d, sub, greens_function(sub), perron_pair(sub)


@lru_cache(maxsize=None)
def oracles():
    return json.loads((FIXTURES / "oracles.json").read_text())


def exact_law(rows):
    """{coords: float} from an oracle table of [coords, "p/q"] rows."""
    return {tuple(c): float(Fraction(v)) for c, v in rows}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS, key=lambda k: (int(k.rstrip("b")), k)):
        terminalreporter.write_line(mod.RESULTS[key])
