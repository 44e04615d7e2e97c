import numpy as np
import pytest

from softpinn.dynamics import RobotModel, default_robot_model


@pytest.fixture
def robot() -> RobotModel:
    return default_robot_model(5)


@pytest.fixture
def small_robot() -> RobotModel:
    return default_robot_model(2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
