"""Shared tiny fixtures: fast 1-epoch checkpoints for contract tests.

These are deliberately undertrained — contract/shape/determinism tests only.
The acceptance suite trains its own properly converged models.
"""

import pytest

from sketchdiff.data import generate_toy_dataset
from sketchdiff.networks import NoiseEstimatorConfig, SequenceEncoderConfig, SetEncoderConfig
from sketchdiff.training import TrainConfig, fit


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_toy_dataset("two-class", 40, 12, 0.02, 7)


def _tiny_config(mode):
    return TrainConfig(
        epochs=1,
        batch_size=16,
        seed=0,
        mode=mode,
        T=20,
        estimator=NoiseEstimatorConfig(layers=1, hidden=16, time_dim=8),
        seq_encoder=SequenceEncoderConfig(hidden=16, latent_dim=8),
        set_encoder=SetEncoderConfig(hidden=16, blocks=1, latent_dim=8),
    )


@pytest.fixture(scope="session")
def tiny_uncond_ckpt(tiny_dataset):
    ckpt, _ = fit(tiny_dataset, _tiny_config("none"))
    return ckpt


@pytest.fixture(scope="session")
def tiny_seq_ckpt(tiny_dataset):
    ckpt, _ = fit(tiny_dataset, _tiny_config("sequence-encoder"))
    return ckpt


@pytest.fixture(scope="session")
def tiny_set_ckpt(tiny_dataset):
    ckpt, _ = fit(tiny_dataset, _tiny_config("set-encoder"))
    return ckpt


@pytest.fixture(scope="session")
def ckpt_paths(tmp_path_factory, tiny_uncond_ckpt, tiny_seq_ckpt, tiny_set_ckpt):
    from sketchdiff.training import save_checkpoint

    root = tmp_path_factory.mktemp("ckpts")
    paths = {}
    for name, ckpt in (
        ("uncond", tiny_uncond_ckpt),
        ("seq", tiny_seq_ckpt),
        ("set", tiny_set_ckpt),
    ):
        path = root / f"{name}.ckpt"
        save_checkpoint(ckpt, path)
        paths[name] = str(path)
    return paths
