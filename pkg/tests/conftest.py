import pytest

from shipprompt.model import EncoderSet
from shipprompt.synthdata import SynthSpec, generate_dataset
from shipprompt.taxonomy import make_base_new_split
from shipprompt.training import TrainConfig


@pytest.fixture(scope="session")
def synth_spec():
    return SynthSpec()


@pytest.fixture(scope="session")
def ships(synth_spec):
    return generate_dataset(synth_spec)


@pytest.fixture(scope="session")
def ships_split(ships):
    return make_base_new_split(ships)


@pytest.fixture(scope="session")
def random_encoders():
    return EncoderSet.from_seed(1, backbone="random")


@pytest.fixture(scope="session")
def pretrained_encoders():
    return EncoderSet.from_seed(1)


@pytest.fixture
def short_config():
    return TrainConfig(epochs=3, n_seeds=1, backbone="random")
