import numpy as np
import pytest

import helpers


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def text_label_dataset(tmp_path_factory):
    """60 prompts x 4 noise images; labels depend on prompt content only."""
    root = tmp_path_factory.mktemp("text_label_ds")
    return helpers.build_synthetic_dataset(
        str(root), n_prompts=60, images_per_prompt=4, label_mode="text", seed=0
    )


@pytest.fixture(scope="session")
def fused_label_dataset(tmp_path_factory):
    """10 prompts x 4 images; labels are a linear functional of the fused feature."""
    root = tmp_path_factory.mktemp("fused_label_ds")
    return helpers.build_synthetic_dataset(
        str(root), n_prompts=10, images_per_prompt=4, label_mode="fused", seed=3
    )
