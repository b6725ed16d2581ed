"""Independent numerical routines used as cross-checks in the tests.

Everything here is deliberately written from scratch with plain loops and
textbook algorithms, avoiding the library's own linear algebra and any
numpy.linalg decompositions, so that agreement between a library result and
an oracle result is evidence rather than tautology.
"""

from __future__ import annotations

import math

import numpy as np


def gauss_solve(a, b):
    """Solve a dense system by Gaussian elimination with partial pivoting."""
    a = np.array(a, dtype=float)
    x = np.array(b, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or x.shape != (n,):
        raise ValueError("gauss_solve expects a square matrix and a vector")
    for col in range(n):
        pivot = col + int(np.argmax(np.abs(a[col:, col])))
        if abs(a[pivot, col]) == 0.0:
            raise ValueError("singular matrix")
        if pivot != col:
            a[[col, pivot]] = a[[pivot, col]]
            x[[col, pivot]] = x[[pivot, col]]
        for row in range(col + 1, n):
            factor = a[row, col] / a[col, col]
            a[row, col:] -= factor * a[col, col:]
            x[row] -= factor * x[col]
    for col in range(n - 1, -1, -1):
        x[col] = (x[col] - a[col, col + 1 :] @ x[col + 1 :]) / a[col, col]
    return x


def cholesky_lower(a):
    """Plain-loop Cholesky factor of a symmetric positive definite matrix."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    low = np.zeros_like(a)
    for i in range(n):
        for j in range(i + 1):
            acc = a[i, j] - low[i, :j] @ low[j, :j]
            if i == j:
                if acc <= 0.0:
                    raise ValueError("matrix is not positive definite")
                low[i, i] = math.sqrt(acc)
            else:
                low[i, j] = acc / low[j, j]
    return low


def jacobi_eigenvalues(a, sweeps=50, tol=1e-13):
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    for _ in range(sweeps):
        off = math.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off <= tol * max(1.0, float(np.max(np.abs(np.diag(a))))):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = 0.5 * math.atan2(2.0 * a[p, q], a[q, q] - a[p, p])
                c, s = math.cos(theta), math.sin(theta)
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))[::-1]


def generalized_eigenvalues(a, m):
    """Generalized symmetric eigenvalues a v = lam m v via explicit reduction.

    Reduces with the plain-loop Cholesky of m, then runs the Jacobi oracle on
    the transformed matrix; returns values sorted descending.
    """
    low = cholesky_lower(m)
    n = low.shape[0]
    # forward substitutions implement inv(L) a inv(L)^T without any solver
    work = np.array(a, dtype=float)
    for col in range(n):
        work[:, col] = _forward_sub(low, work[:, col])
    for row in range(n):
        work[row, :] = _forward_sub(low, work[row, :])
    work = 0.5 * (work + work.T)
    return jacobi_eigenvalues(work)


def _forward_sub(low, b):
    x = np.array(b, dtype=float)
    for i in range(low.shape[0]):
        x[i] = (x[i] - low[i, :i] @ x[:i]) / low[i, i]
    return x


def fourier_poisson_center(n_terms=100):
    """Center value of -laplace(u) = 1 on the unit square, zero boundary.

    Double sine series summed at (1/2, 1/2); even indices drop out and the
    odd ones alternate in sign.
    """
    total = 0.0
    for j in range(1, 2 * n_terms, 2):
        sj = 1.0 if (j % 4) == 1 else -1.0
        for k in range(1, 2 * n_terms, 2):
            sk = 1.0 if (k % 4) == 1 else -1.0
            total += 16.0 * sj * sk / (math.pi ** 4 * j * k * (j * j + k * k))
    return total


def observed_order(step_sizes, errors):
    """Least-squares slope of log(error) against log(step size)."""
    lx = np.log(np.asarray(step_sizes, dtype=float))
    ly = np.log(np.asarray(errors, dtype=float))
    design = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    return float(coef[0])


def conjugate_posterior_1d(q0, q1, prior_var, noise_var, delta):
    """Closed-form posterior of z ~ N(0, prior_var) under delta = q0 + q1 z + noise.

    Returns (mean, variance) of the exact Gaussian posterior.
    """
    gain = prior_var * q1 / (noise_var + q1 * q1 * prior_var)
    mean = gain * (delta - q0)
    var = prior_var * noise_var / (noise_var + q1 * q1 * prior_var)
    return mean, var


def predator_prey_invariant(y1, y2):
    """Conserved quantity of the unperturbed predator-prey flow."""
    return 0.15 * y1 - 7.5 * math.log(y1) + 0.075 * y2 - 7.5 * math.log(y2)
