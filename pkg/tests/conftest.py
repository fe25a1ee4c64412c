import pytest

from erbp.snn import build_network, checkpoint_bytes, load_checkpoint
from erbp.toy import fit, toy_task

TOY_NET_SEED = 7


@pytest.fixture(scope="session")
def toy():
    return toy_task()


@pytest.fixture(scope="session")
def converged(toy):
    """Toy network trained until the clean accuracy targets are met, plus its history."""
    net = build_network(toy.layers, seed=TOY_NET_SEED)
    result = fit(net, toy, max_epochs=20)
    return net, result


@pytest.fixture
def converged_copy(converged, tmp_path):
    """Independent copy of the converged network (tests may mutate it)."""
    path = tmp_path / "toy.ckpt"
    path.write_bytes(checkpoint_bytes(converged[0]))
    return load_checkpoint(path)[0]


def pytest_terminal_summary(terminalreporter):
    from helpers import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
