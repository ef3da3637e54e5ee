import numpy as np
import pytest
import torch

from graspdiff.conditions import ConditionSet
from graspdiff.denoiser import DenoiserConfig, build_model

torch.set_num_threads(1)


TINY = DenoiserConfig(image_size=8, base_channels=8, channel_multiples=(1,),
                      resblocks_per_level=1, context_dim=8, context_tokens=4)


@pytest.fixture(scope="session")
def tiny_config():
    return TINY


@pytest.fixture()
def tiny_model():
    return build_model(TINY, seed=0)


def random_condition_set(rng, resolution=8):
    skeleton = rng.uniform(0, 1, size=(3, resolution, resolution)).astype(np.float32)
    labels = rng.integers(0, 3, size=(resolution, resolution))
    seg = np.zeros((3, resolution, resolution), dtype=np.float32)
    seg[1] = labels == 1
    seg[2] = labels == 2
    normal = rng.normal(size=(3, resolution, resolution))
    normal /= np.linalg.norm(normal, axis=0, keepdims=True)
    normal[2] = -np.abs(normal[2])
    return ConditionSet(skeleton, seg, normal.astype(np.float32))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
