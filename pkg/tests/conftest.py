import numpy as np
import pytest

from primalsense.corpus import Expression, Sense, SynthSpec, generate_synthetic


def make_expr(eid="e", surface="ab", descs=("alpha", "beta", "gamma"), first=0, gold=None, tf=None, split=None):
    """Expression whose sense ``first`` is listed first and ``gold`` (if any) is the gold primal."""
    order = [first] + [k for k in range(len(descs)) if k != first]
    senses = tuple(
        Sense(f"{eid}-s{k}", d, order.index(k) + 1, None if gold is None else k == gold)
        for k, d in enumerate(descs)
    )
    return Expression(eid, surface, senses, term_frequency=tf, split=split)


@pytest.fixture
def expr_factory():
    return make_expr


@pytest.fixture(scope="session")
def small_split():
    spec = SynthSpec(n_train=80, n_validation=30, n_test=30)
    return generate_synthetic(spec, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
