import numpy as np
import pytest

from glucorl.meals import load_meal_profile
from glucorl.patient import load_cohort


@pytest.fixture(scope="session")
def cohort():
    return load_cohort()


@pytest.fixture(scope="session")
def profile():
    return load_meal_profile()


@pytest.fixture(scope="session")
def adult(cohort):
    return cohort["adult-1"]


@pytest.fixture(scope="session")
def child(cohort):
    return cohort["child-1"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
