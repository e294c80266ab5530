import numpy as np
import pytest

from barkemo import nn
from barkemo.model import BarkNet, BarkNetConfig

MICRO = dict(fragment_len=64, conv1_channels=2, conv1_kernel=8, conv1_stride=2,
             conv2_channels=3, conv2_kernel=4, conv2_stride=2)


def micro_net(seed=0, randomize=True):
    """Micro BarkNet with parameters spread away from the init regime.

    BN scales stay near 1 and shifts near 0 so every ReLU sees mixed signs;
    otherwise a BN shift can become exactly inert and its gradient pure noise.
    """
    net = BarkNet.init(BarkNetConfig(seed=seed, **MICRO))
    if randomize:
        rng = np.random.default_rng(10_000 + seed)
        for bn in (net.bn1, net.bn2):
            bn.gamma[:] = 1.0 + 0.2 * rng.standard_normal(bn.gamma.shape)
            bn.beta[:] = 0.2 * rng.standard_normal(bn.beta.shape)
        for layer in (net.conv1, net.conv2):
            layer.bias[:] = rng.standard_normal(layer.bias.shape)
        net.head.weight[:] = rng.standard_normal(net.head.weight.shape) * np.sqrt(2 / net.head.weight.shape[1])
        net.head.bias[:] = 0.1 * rng.standard_normal(net.head.bias.shape)
    return net


def full_net_grad_errors(seed, h=1e-5):
    """Relative errors per parameter for the train-mode loss of a micro BarkNet.

    Returns ``(relative, inert)``: ``relative`` maps parameter name to the max
    relative error; ``inert`` maps the conv biases (which feed train-mode batch
    norm, so their true gradient is identically zero) to the max absolute
    analytic and numeric gradient.
    """
    net = micro_net(seed)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((4, 1, MICRO["fragment_len"]))
    y = rng.integers(0, 5, 4)

    def loss():
        out, _ = net.logits(x, "train")
        return nn.cross_entropy(nn.softmax(out), y)[0]

    _, grads = net.loss_and_grads(x, y)
    names = ["conv1.w", "conv1.b", "bn1.gamma", "bn1.beta", "conv2.w", "conv2.b",
             "bn2.gamma", "bn2.beta", "head.w", "head.b"]
    relative, inert = {}, {}
    for name, p, g in zip(names, net.parameters(), grads):
        num = nn.numeric_grad(loss, p, h)
        if name in ("conv1.b", "conv2.b"):
            inert[name] = (float(np.abs(g).max()), float(np.abs(num).max()))
        else:
            relative[name] = float(nn.relative_error(g, num).max())
    return relative, inert


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
