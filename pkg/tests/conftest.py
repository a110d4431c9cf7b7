import numpy as np
import pytest

from vmcp.generator import GenParams, generate_basic
from vmcp.model import make_instance


def tiny_params(index: int, *, alpha=None) -> GenParams:
    """The tiny-instance family: 3..6 servers, 2..3 VM types, alpha 0.2 or 0.4."""
    rng = np.random.default_rng([7919, index])
    ns = int(rng.integers(3, 7))
    nt = int(rng.integers(2, 4))
    vm_ids = tuple(int(i) for i in sorted(rng.choice(5, nt, replace=False) + 1))
    srv_ids = tuple(int(i) for i in rng.choice(10, ns) + 1)
    a = (0.2, 0.4)[index % 2] if alpha is None else alpha
    return GenParams(ns, a, seed=index, vm_type_ids=vm_ids, server_type_ids=srv_ids)


def tiny_instance(index: int, **kw):
    return generate_basic(tiny_params(index, **kw))


@pytest.fixture
def toy():
    """Two servers, two VM types, two resources."""
    return make_instance(
        demand=[[1, 2], [2, 1]],
        capacity=[[4, 4], [6, 6]],
        placement=[[1, 1], [1, 0]],
        cost_run=[10.0, 12.0],
        cost_alloc=[[1.0, 2.0], [1.5, 2.5]],
        resource_names=["CPU", "RAM"],
    )


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
