import numpy as np
import pytest

from kinepipe.kinematics import default_model, load_model

ONE_LINK = """
segment link parent=none offset=0,0,0
dof link revolute-z
site tip link offset=1,0,0
"""


@pytest.fixture(scope="session")
def model():
    return default_model()


@pytest.fixture(scope="session")
def one_link():
    return load_model(ONE_LINK)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
