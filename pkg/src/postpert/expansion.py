"""Second-order expansions of posterior mean, correlation, and covariance.

For the affine perturbation model x = x0 + alpha * sum_j mode_j z_j with
pairwise uncorrelated coefficients z_j, the posterior moments of a smooth
prediction R admit expansions around the reference whose terms involve only
the model solves collected in ModelEvaluations:

  mean  = r0
        + alpha   * sum_j E[z_j] dr_j
        + alpha^2 * ( sum_j Var[z_j] d2r_j + d2r_mean ) / 2
        + alpha^2 * sum_j Var[z_j] dr_j <delta - q0, dq_j>_Sigma

with matching tensor-valued formulas for the second moments below.  The
truncation error is O(alpha^3) in general and O(alpha^4) when every law is
centered and skewless.  Because all stored derivatives are for unit modes,
alpha enters each term analytically with one power per derivative order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .model_api import MeasurementSetup, ModelEvaluations, residual_weighted
from .prior import CoefficientLaw

_SOURCES = ("expansion", "qmc", "mc", "quadrature")


@dataclass
class PosteriorMoments:
    """Posterior mean, second moment (correlation), and covariance of R."""

    mean: np.ndarray
    correlation: np.ndarray
    covariance: np.ndarray
    centered: bool
    source: str

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.correlation = np.asarray(self.correlation, dtype=float)
        self.covariance = np.asarray(self.covariance, dtype=float)
        z = self.mean.shape[0]
        if self.correlation.shape != (z, z) or self.covariance.shape != (z, z):
            raise DimensionMismatch("moment shapes are inconsistent")
        if self.source not in _SOURCES:
            raise DimensionMismatch(f"unknown moment source {self.source!r}")


def _law_arrays(laws) -> tuple[np.ndarray, np.ndarray]:
    means = np.array([law.mean for law in laws])
    variances = np.array([law.variance for law in laws])
    return means, variances


def _data_coupling(evals: ModelEvaluations, meas: MeasurementSetup) -> np.ndarray:
    """Per-mode weighted residual products <delta - q0, dq_j>_Sigma."""
    residual = meas.data - evals.q0
    return evals.dq_modes @ residual_weighted(meas, residual)


def expand_posterior_mean(
    evals: ModelEvaluations,
    meas: MeasurementSetup,
    laws: tuple[CoefficientLaw, ...],
    alpha: float,
) -> np.ndarray:
    means, variances = _law_arrays(laws)
    s = _data_coupling(evals, meas)
    first = means @ evals.dr_modes
    second = 0.5 * (variances @ evals.second_diag() + evals.second_meandir())
    coupled = (variances * s) @ evals.dr_modes
    return evals.r0 + alpha * first + alpha ** 2 * (second + coupled)


def expand_posterior_correlation(
    evals: ModelEvaluations,
    meas: MeasurementSetup,
    laws: tuple[CoefficientLaw, ...],
    alpha: float,
) -> np.ndarray:
    means, variances = _law_arrays(laws)
    s = _data_coupling(evals, meas)
    r0 = evals.r0
    dr = evals.dr_modes
    dr_mean = means @ dr
    d2_sum = variances @ evals.second_diag() + evals.second_meandir()
    coupled = (variances * s) @ dr

    out = np.outer(r0, r0)
    out += alpha * (np.outer(dr_mean, r0) + np.outer(r0, dr_mean))
    out += 0.5 * alpha ** 2 * (np.outer(d2_sum, r0) + np.outer(r0, d2_sum))
    out += alpha ** 2 * (variances[:, None] * dr).T @ dr
    out += alpha ** 2 * np.outer(dr_mean, dr_mean)
    out += alpha ** 2 * (np.outer(coupled, r0) + np.outer(r0, coupled))
    return 0.5 * (out + out.T)


def expand_posterior_covariance(
    evals: ModelEvaluations,
    laws: tuple[CoefficientLaw, ...],
    alpha: float,
) -> np.ndarray:
    """Leading covariance term; carries no data dependence at this order."""
    _, variances = _law_arrays(laws)
    dr = evals.dr_modes
    out = alpha ** 2 * (variances[:, None] * dr).T @ dr
    return 0.5 * (out + out.T)


def expand_posterior_moments(
    evals: ModelEvaluations,
    meas: MeasurementSetup,
    laws: tuple[CoefficientLaw, ...],
    alpha: float,
) -> PosteriorMoments:
    """All three moment expansions bundled, tagged with their source."""
    centered = all(law.mean == 0.0 for law in laws)
    return PosteriorMoments(
        mean=expand_posterior_mean(evals, meas, laws, alpha),
        correlation=expand_posterior_correlation(evals, meas, laws, alpha),
        covariance=expand_posterior_covariance(evals, laws, alpha),
        centered=centered,
        source="expansion",
    )
