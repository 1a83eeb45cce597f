from pathlib import Path

import numpy as np
import pytest

from dosetc.certify import GainSet
from dosetc.config import ScenarioConfig
from dosetc.plant import PlantModel

FIXTURES = Path(__file__).parent / "fixtures"


def load_fixture(name: str) -> ScenarioConfig:
    return ScenarioConfig.load(FIXTURES / f"{name}.json")


def unit_scalar_gains(**kw) -> GainSet:
    base = dict(K=[[1.0]], L=[[[1.0]]], P_p=[[[1.0]]], P_e=[[[1.0]]], psi1=1.0, psi2=1.0, eps1=[1.0], eps2=[1.0])
    base.update(kw)
    return GainSet(**base)


@pytest.fixture(scope="session")
def scalar_cfg():
    return load_fixture("scalar")


@pytest.fixture(scope="session")
def dint_cfg():
    return load_fixture("dint")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def dint_plant():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    return PlantModel(A, B, (np.array([[1.0, 0.0]]), np.array([[1.0, 1.0]])))
