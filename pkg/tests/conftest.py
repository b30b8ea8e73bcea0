import pytest

from pedbench.dataset import select_motion_changes
from pedbench.predictors import ConstantVelocityPredictor, KinematicEnsemble
from pedbench.synth import generate_corpus

CANONICAL_SEED = 42
CANONICAL_N = 2000


@pytest.fixture(scope="session")
def corpus42():
    """The canonical synthetic corpus: seed 42, 2000 scenarios."""
    instances, scenarios = generate_corpus(CANONICAL_N, seed=CANONICAL_SEED)
    return instances, scenarios


@pytest.fixture(scope="session")
def variant42(corpus42):
    instances, _ = corpus42
    return list(select_motion_changes(instances, seed=CANONICAL_SEED).variant)


@pytest.fixture(scope="session")
def cv_predictions42(variant42):
    return ConstantVelocityPredictor().predict(variant42)


@pytest.fixture(scope="session")
def ensemble_predictions42(variant42):
    return KinematicEnsemble().predict(variant42)
