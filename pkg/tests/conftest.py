import numpy as np
import pytest

from dhcn.data import Batch, LabeledSequence
from dhcn.hypergraph import build_incidence, propagation_operator
from dhcn.model import DHCN, ModelConfig, ModelParams


def toy_model(seed=0, **overrides):
    """N=6, d=4, L=1, beta=0.02 over three training sessions."""
    sessions = [[0, 1, 2], [2, 3, 4], [4, 5, 1, 0]]
    config = ModelConfig(**{"d": 4, "n_layers": 1, "beta": 0.02, "max_len": 5, **overrides})
    params = ModelParams.init(6, config, seed=seed)
    prop = propagation_operator(build_incidence(sessions, 6))
    batch = Batch.from_sequences([
        LabeledSequence((0, 1), 2),
        LabeledSequence((2, 3), 4),
        LabeledSequence((4, 5, 1), 0),
    ])
    return DHCN(params, config, prop), batch


@pytest.fixture
def toy():
    return toy_model()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_tsv(path, sessions):
    """Write RawSession objects in the three-column input format."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            fh.write(f"{s.session_id}\t{' '.join(s.items)}\t{s.timestamp}\n")
    return path


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
