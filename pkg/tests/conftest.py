import pytest

from infcanvas.layers import LayerSpec
from infcanvas.netspec import NetworkSpec
from infcanvas.network import bind, reference_g0
from infcanvas.weights import init_random

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def g0():
    return reference_g0()


@pytest.fixture(scope="session")
def g0_params(g0):
    return bind(g0, init_random(g0, 3))


def small_net(width: int = 4) -> NetworkSpec:
    """A narrow network using every consistent layer kind."""
    layers = (
        LayerSpec.napn("n1", width, 1),
        LayerSpec.bilinear("up1"),
        LayerSpec.conv("c1", width, width),
        LayerSpec.act("a1", "leaky_relu"),
        LayerSpec.pixel_norm("pn"),
        LayerSpec.nearest("up2", 2),
        LayerSpec.conv("c2", width, width, k=5),
        LayerSpec.act("a2", "sigmoid"),
    )
    head = (LayerSpec.conv1x1("head.conv", width, 3), LayerSpec.act("head.tanh", "tanh"))
    return NetworkSpec("small", layers, width, head)


@pytest.fixture(scope="session")
def small():
    return small_net()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
