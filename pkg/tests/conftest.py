"""Shared fixtures: small meshes and models reused across test modules."""

import numpy as np
import pytest

from postpert.darcy import build_darcy, darcy_noise_covariance
from postpert.fem import build_unit_square_mesh
from postpert.lv import build_lotka_volterra
from postpert.toy import ConjugateGaussianModel, PolynomialToyModel
from postpert.prior import AffineExpansion, CoefficientLaw


@pytest.fixture(scope="session")
def mesh_level_2():
    return build_unit_square_mesh(2)


@pytest.fixture(scope="session")
def mesh_level_3():
    return build_unit_square_mesh(3)


@pytest.fixture(scope="session")
def darcy_level_2():
    """Coarse centered Darcy model, shared read-only by fast tests."""
    return build_darcy(2, kle_tol=1e-2, centered=True, prediction="r1")


@pytest.fixture(scope="session")
def darcy_level_3():
    return build_darcy(3, kle_tol=1e-3, centered=True, prediction="r1")


@pytest.fixture(scope="session")
def lv_small():
    """Short-grid predator-prey model for derivative and estimator tests."""
    return build_lotka_volterra(n_modes=8, sigma_scale=10.0, n_steps=200)


@pytest.fixture
def toy_pair():
    """Two-mode cubic model with the uncentered laws used in expansion tests."""
    model = PolynomialToyModel()
    expansion = AffineExpansion(
        x0=np.array([0.2, -0.1]),
        modes=np.array([[1.0, 0.3], [-0.2, 0.8]]),
        laws=(
            CoefficientLaw.uniform_shifted(1.0, 0.3),
            CoefficientLaw.uniform_shifted(1.0, -0.2),
        ),
    )
    return model, expansion


@pytest.fixture
def toy_pair_centered():
    model = PolynomialToyModel()
    expansion = AffineExpansion(
        x0=np.array([0.2, -0.1]),
        modes=np.array([[1.0, 0.3], [-0.2, 0.8]]),
        laws=(
            CoefficientLaw.uniform_symmetric(1.0),
            CoefficientLaw.uniform_symmetric(1.0),
        ),
    )
    return model, expansion


@pytest.fixture
def scalar_conjugate():
    """1D linear model with Gaussian coefficient, posterior known exactly."""

    def make(q0=0.0, q1=1.0, noise_var=1.0, prior_std=0.1):
        model = ConjugateGaussianModel(q0, q1, noise_var)
        expansion = AffineExpansion(
            x0=np.zeros(1),
            modes=np.ones((1, 1)),
            laws=(CoefficientLaw.standard_normal(),),
            alpha=prior_std,
        )
        return model, expansion

    return make
