import pytest
import torch

from cyclegan_qp.data import UnpairedDataset
from cyclegan_qp.models import CriticSpec, GeneratorSpec
from cyclegan_qp.synthetic import write_domain_pair
from cyclegan_qp.trainer import TrainConfig

TINY_G = GeneratorSpec(base_width=4, n_residual_blocks=1)
TINY_C = CriticSpec(base_width=4, n_layers=3)


def tiny_config(out_dir, data_root="unused", **overrides):
    kw = dict(total_iterations=10, crop_size=32, batch_size=2, checkpoint_every=5, seed=0,
              data_root=str(data_root), out_dir=str(out_dir), generator=TINY_G, critic=TINY_C, prefetch=1)
    kw.update(overrides)
    return TrainConfig(**kw)


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    write_domain_pair(root, "vangogh", n_photos=6, n_paintings=6, size=(40, 36), seed=0)
    return root


@pytest.fixture()
def toy_ds(toy_root):
    return UnpairedDataset.from_root(toy_root, "vangogh", crop_size=32)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
