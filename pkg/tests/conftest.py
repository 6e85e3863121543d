import os

# must happen before numpy is imported anywhere: deterministic single-thread
# BLAS, and every tensor op validates finiteness during tests
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")
os.environ["HYBRIDMAP_CHECK_FINITE"] = "1"

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")

from hybridmap.dataset import Dataset, DatasetSpec, generate_synthetic
from hybridmap.model import Network
from hybridmap.network import build_network
from hybridmap.optim import OptimizerConfig
from hybridmap.trainer import TrainingConfig, pretrain_float


def tiny_net(classes: int = 4):
    """Two convs + two fc on 8x8 inputs; fast enough for mapper tests."""
    return build_network(
        [
            {"kind": "conv", "filters": 4, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "conv", "filters": 8, "kernel": 3, "stride": 1, "padding": 1, "pool": 2},
            {"kind": "fc", "out_features": 16, "activation": "relu"},
            {"kind": "fc", "out_features": classes},
        ],
        (1, 8, 8),
        classes,
    )


def tiny_spec(**kw):
    base = dict(classes=4, train=320, val=120, test=120, height=8, width=8,
                channels=1, separation=8.0, noise_level=1.0, seed=3)
    base.update(kw)
    return DatasetSpec(**base)


def quick_train_cfg(t_max: int = 8, batch: int = 128) -> TrainingConfig:
    return TrainingConfig(
        digital=OptimizerConfig(learning_rate=0.03, momentum=0.9, t_max=t_max, batch_size=batch),
        analog=OptimizerConfig(learning_rate=0.015, momentum=0.9, t_max=t_max, batch_size=batch),
        pretrain_max_epochs=20,
        pretrain_window=3,
    )


def converged_train_cfg(batch: int = 128) -> TrainingConfig:
    """Budget that trains the tiny task to convergence."""
    return TrainingConfig(
        digital=OptimizerConfig(learning_rate=0.05, momentum=0.9, t_max=20, batch_size=batch),
        analog=OptimizerConfig(learning_rate=0.025, momentum=0.9, t_max=20, batch_size=batch),
        pretrain_max_epochs=30,
        pretrain_window=5,
    )


@pytest.fixture(scope="session")
def tiny_data() -> Dataset:
    return generate_synthetic(tiny_spec())


@pytest.fixture(scope="session")
def tiny_pretrained(tiny_data):
    """A converged float model on the tiny task; copy before mutating."""
    model = Network.build(tiny_net(), seed=11)
    pretrain_float(model, tiny_data.train_x, tiny_data.train_y, converged_train_cfg(), seed=11)
    return model


@pytest.fixture()
def tiny_model(tiny_pretrained):
    return tiny_pretrained.copy()
