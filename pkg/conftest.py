import numpy as np
import pytest

from models import SingleSpinParams, build_model_liouvillian, random_lindblad_model, single_spin_model


@pytest.fixture
def single_spin():
    """Spin precessing about x at omega_x = 1 with gamma = 0.1, weak-measurement mode, beta = 1."""
    model = single_spin_model(SingleSpinParams(omega=(1.0, 0.0, 0.0), gamma=0.1))
    return build_model_liouvillian(model, beta=1.0, include_measurement_damping=False)


@pytest.fixture
def random_liouvillian():
    """Factory for random ergodic Liouvillians of a given dimension."""
    def make(seed, dim=4, beta=1.0):
        return build_model_liouvillian(random_lindblad_model(dim, seed=seed), beta=beta)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
