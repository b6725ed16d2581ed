"""Reference estimators for posterior moments.

All three estimators are self-normalizing: with likelihood weights
nu(x) = exp(-0.5 ||delta - Q(x)||^2_Sigma) and prior points x_k,

    mean ~ sum_k W_k nu_k R_k / sum_k W_k nu_k,

where W_k are sampling weights (1 for (Q)MC, quadrature weights for the
tensor grid).  Weights are handled in log space with a running maximum so
large misfits cannot underflow the ratio.  Sample streams are deterministic
for a fixed budget: plain Halton points for uniform coefficient laws,
antithetic normal draws from a counter-based generator for Gaussian laws.
Accumulation order is fixed (sequential batches of constant size), so
results are bitwise reproducible regardless of how callers schedule work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import CostGuard, DegenerateWeights, DimensionMismatch
from .expansion import PosteriorMoments
from .model_api import ForwardModel, MeasurementSetup
from .prior import AffineExpansion

_BATCH = 4096
_BUDGET_KINDS = ("halton", "antithetic-mc", "tensor-grid")
_MAX_GRID_POINTS = 4_000_000


@dataclass(frozen=True)
class SampleBudget:
    """How many samples to spend and how to generate them.

    count means: Halton points for "halton", antithetic pairs for
    "antithetic-mc", and nodes per dimension for "tensor-grid".
    """

    kind: str
    count: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _BUDGET_KINDS:
            raise DimensionMismatch(f"unknown budget kind {self.kind!r}")
        if self.count < 2:
            raise DimensionMismatch("sample budget must be at least 2")

    @property
    def source(self) -> str:
        return {"halton": "qmc", "antithetic-mc": "mc", "tensor-grid": "quadrature"}[
            self.kind
        ]


def first_primes(k: int) -> np.ndarray:
    """The k smallest primes, by trial division (k stays small here)."""
    out = []
    cand = 2
    while len(out) < k:
        if all(cand % p for p in out if p * p <= cand):
            out.append(cand)
        cand += 1
    return np.asarray(out, dtype=np.int64)


def _radical_inverse(indices, base: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).copy()
    out = np.zeros(idx.shape, dtype=float)
    f = 1.0 / base
    while np.any(idx > 0):
        out += f * (idx % base)
        idx //= base
        f /= base
    return out


def halton_point(index: int, dim: int) -> np.ndarray:
    """Halton point in [0,1)^dim; indexing starts at 1 (0 maps to the origin)."""
    if index < 1:
        raise DimensionMismatch("Halton indices start at 1")
    bases = first_primes(dim)
    return np.array([_radical_inverse(index, int(b)) for b in bases])


class _MomentAccumulator:
    """Streaming weighted sums with a running log-max for stability."""

    def __init__(self, dim: int, second_moment: bool):
        self.logmax = -np.inf
        self.wsum = 0.0
        self.rsum = np.zeros(dim)
        self.rrsum = np.zeros((dim, dim)) if second_moment else None
        self.count = 0

    def add(self, logw: np.ndarray, r: np.ndarray) -> None:
        self.count += logw.size
        bmax = float(logw.max()) if logw.size else -np.inf
        newmax = max(self.logmax, bmax)
        if newmax == -np.inf:
            return
        rescale = np.exp(self.logmax - newmax) if np.isfinite(self.logmax) else 0.0
        w = np.exp(logw - newmax)
        self.wsum = self.wsum * rescale + float(w.sum())
        self.rsum = self.rsum * rescale + w @ r
        if self.rrsum is not None:
            self.rrsum = self.rrsum * rescale + (r * w[:, None]).T @ r
        self.logmax = newmax

    def mean(self) -> np.ndarray:
        if not np.isfinite(self.wsum) or self.wsum <= 0.0:
            raise DegenerateWeights(
                f"likelihood weights vanished across {self.count} samples"
            )
        return self.rsum / self.wsum

    def moments(self, centered: bool, source: str) -> PosteriorMoments:
        mean = self.mean()
        corr = self.rrsum / self.wsum
        corr = 0.5 * (corr + corr.T)
        cov = corr - np.outer(mean, mean)
        cov = 0.5 * (cov + cov.T)
        return PosteriorMoments(mean, corr, cov, centered, source)


def _misfit_logweights(q: np.ndarray, meas: MeasurementSetup) -> np.ndarray:
    resid = meas.data[None, :] - q
    solved = meas.sigma.solve(resid.T)
    return -0.5 * np.einsum("bk,kb->b", resid, solved)


def _native_batches(expansion: AffineExpansion, budget: SampleBudget):
    """Yield (native_draws, half_mask) blocks in a fixed deterministic order.

    half_mask marks the rows belonging to the first half of the budget,
    which downstream code uses for a self-consistency error estimate.
    """
    kinds = {law.kind for law in expansion.laws}
    m = expansion.n_modes
    if budget.kind == "halton":
        if not all(k.startswith("uniform") for k in kinds):
            raise DimensionMismatch("Halton sampling requires uniform coefficient laws")
        bases = first_primes(m)
        half = (budget.count + 1) // 2
        start = 1
        while start <= budget.count:
            stop = min(start + _BATCH, budget.count + 1)
            idx = np.arange(start, stop)
            u = np.column_stack([_radical_inverse(idx, int(b)) for b in bases])
            yield 2.0 * u - 1.0, idx <= half
            start = stop
    elif budget.kind == "antithetic-mc":
        if kinds != {"standard-normal"}:
            raise DimensionMismatch("antithetic sampling requires standard-normal laws")
        rng = np.random.Generator(np.random.Philox(budget.seed))
        half_pairs = (budget.count + 1) // 2
        done = 0
        pair_batch = _BATCH // 2
        while done < budget.count:
            npairs = min(pair_batch, budget.count - done)
            u = rng.random((npairs, m))
            z = ndtri(np.clip(u, 1e-300, 1.0 - 1e-16))
            native = np.empty((2 * npairs, m))
            native[0::2] = z
            native[1::2] = -z
            pair_ids = done + np.arange(npairs)
            mask = np.repeat(pair_ids < half_pairs, 2)
            yield native, mask
            done += npairs
    else:
        raise DimensionMismatch(f"budget kind {budget.kind!r} has no sample stream")


def _quadrature_batches(expansion: AffineExpansion, nodes_per_dim: int):
    """Yield (native_draws, log_quadrature_weight) blocks of the tensor grid."""
    m = expansion.n_modes
    if m > 6:
        raise CostGuard(f"tensor grid in {m} dimensions is deliberately refused")
    if nodes_per_dim < 4:
        raise DimensionMismatch("tensor grids need at least 4 nodes per dimension")
    if nodes_per_dim ** m > _MAX_GRID_POINTS:
        raise CostGuard("tensor grid would exceed the point budget")

    axes = []
    logws = []
    for law in expansion.laws:
        if law.kind == "standard-normal":
            x, w = np.polynomial.hermite_e.hermegauss(nodes_per_dim)
            axes.append(x)
            logws.append(np.log(w) - 0.5 * np.log(2.0 * np.pi))
        else:
            x, w = np.polynomial.legendre.leggauss(nodes_per_dim)
            axes.append(x)
            logws.append(np.log(0.5 * w))

    grids = np.meshgrid(*axes, indexing="ij")
    native = np.column_stack([g.ravel() for g in grids])
    wgrids = np.meshgrid(*logws, indexing="ij")
    logw = sum(g.ravel() for g in wgrids)
    for start in range(0, len(native), _BATCH):
        stop = start + _BATCH
        yield native[start:stop], logw[start:stop]


def estimate_posterior_sweep(
    models: list[ForwardModel],
    expansion: AffineExpansion,
    meas_list: list[MeasurementSetup],
    budget: SampleBudget,
    second_moment: bool = True,
    half_split: bool = False,
):
    """Posterior moments for several predictions and noise setups at once.

    All models must share their solve and observation maps (they may differ
    only in the prediction); each sample is solved once and every
    (model, measurement) pair gets its own weighted accumulators.  Returns a
    grid indexed [model][measurement]; with half_split=True a second grid
    built from only the first half of the budget is returned as well, which
    gives a cheap estimate of the estimator's own error.
    """
    if budget.kind == "tensor-grid":
        if len(models) != 1 or len(meas_list) != 1 or half_split:
            raise DimensionMismatch("the tensor-grid oracle handles a single study")
        return [[tensor_grid_oracle(models[0], expansion, meas_list[0], budget.count)]]

    base = models[0]
    kdims = {m.observation_dim for m in models}
    if len(kdims) != 1:
        raise DimensionMismatch("models in one sweep must share the observation map")

    acc = [
        [_MomentAccumulator(m.prediction_dim, second_moment) for _ in meas_list]
        for m in models
    ]
    half_acc = None
    if half_split:
        half_acc = [
            [_MomentAccumulator(m.prediction_dim, second_moment) for _ in meas_list]
            for m in models
        ]

    for native, half_mask in _native_batches(expansion, budget):
        xs = expansion.realize_batch(native)
        states = base.solve_state_batch(xs)
        q = base.observe_state_batch(states)
        logw = [_misfit_logweights(q, meas) for meas in meas_list]
        for i, model in enumerate(models):
            r = model.predict_state_batch(states)
            for j in range(len(meas_list)):
                acc[i][j].add(logw[j], r)
                if half_acc is not None and half_mask.any():
                    half_acc[i][j].add(logw[j][half_mask], r[half_mask])

    def collect(grid):
        if second_moment:
            return [
                [a.moments(expansion.centered, budget.source) for a in row]
                for row in grid
            ]
        return [[a.mean() for a in row] for row in grid]

    if half_split:
        return collect(acc), collect(half_acc)
    return collect(acc)


def estimate_posterior(
    model: ForwardModel,
    expansion: AffineExpansion,
    meas: MeasurementSetup,
    budget: SampleBudget,
) -> PosteriorMoments:
    """Self-normalized posterior moments of one prediction map."""
    grid = estimate_posterior_sweep([model], expansion, [meas], budget)
    return grid[0][0]


def tensor_grid_oracle(
    model: ForwardModel,
    expansion: AffineExpansion,
    meas: MeasurementSetup,
    nodes_per_dim: int,
) -> PosteriorMoments:
    """Deterministic low-dimensional reference by tensorized Gauss rules.

    Gauss-Legendre nodes cover uniform coefficient laws, probabilists'
    Gauss-Hermite nodes cover standard-normal ones.
    """
    acc = _MomentAccumulator(model.prediction_dim, second_moment=True)
    for native, logw_quad in _quadrature_batches(expansion, nodes_per_dim):
        xs = expansion.realize_batch(native)
        states = model.solve_state_batch(xs)
        q = model.observe_state_batch(states)
        r = model.predict_state_batch(states)
        acc.add(logw_quad + _misfit_logweights(q, meas), r)
    return acc.moments(expansion.centered, "quadrature")
