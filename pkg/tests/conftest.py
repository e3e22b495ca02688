import numpy as np
import pytest

from protoprior.data import SynthConfig, build_synthetic
from protoprior.experiment import load_preset, make_network, preset_hog, preset_schedule
from protoprior.net import train
from protoprior.proto import build


def vertical_edge(side=100):
    img = np.zeros((side, side))
    img[:, side // 2 :] = 1.0
    return img


@pytest.fixture(scope="session")
def desk_preset():
    return load_preset("desk")


@pytest.fixture(scope="session")
def small_synthetic(desk_preset):
    """10 classes x 30 samples, with its prototype set under the desk HOG config."""
    hog = preset_hog(desk_preset)
    ds, templates = build_synthetic(SynthConfig(num_classes=10, samples_per_class=30, template_seed=3), hog)
    return ds, templates, build(templates, hog)


@pytest.fixture(scope="session")
def trained_desk_net(desk_preset):
    """Prototype-head desk network trained for 8 epochs on 10 synthetic classes."""
    hog = preset_hog(desk_preset)
    ds, templates = build_synthetic(SynthConfig(num_classes=10, samples_per_class=60, template_seed=11), hog)
    protos = build(templates, hog)
    net = make_network(desk_preset, ds.images.shape[1:], prototypes=protos, seed=1)
    train(net, *ds.select("train"), preset_schedule(desk_preset, epochs=8, seed=1))
    return net, ds, templates, protos


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
