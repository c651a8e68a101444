"""Score-function gradient estimation on the chain-rule sampling distribution.

The expected-cost objective is estimated from K sampled solutions; its
gradient uses the REINFORCE identity with the batch-mean cost as baseline.
With the mean baseline the per-sample advantages are summed with a
1/(K-1) normalization, which makes the estimator exactly unbiased (the
self-referential mean otherwise shrinks the expectation by (K-1)/K).
Advantages are optionally divided by their standard deviation to keep the
gradient scale comparable across instance sizes; tests that assert exact
unbiasedness switch that off.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels, net, solution_space
from .errors import EstimatorError, ParameterError

STD_EPS = 1e-8


@dataclass
class RolloutBatch:
    problem: str
    instance_id: str
    tau: float
    costs: np.ndarray  # (K,)
    logps: np.ndarray  # (K,)
    tours: np.ndarray = None  # (K, n) for tours
    orders: np.ndarray = None  # (K, n) padded with -1 for node sets
    sizes: np.ndarray = None  # (K,) for node sets

    @property
    def K(self):
        return len(self.costs)

    @property
    def mean_cost(self):
        return float(self.costs.mean())


def rollout(theta, inst, K, tau, rng):
    """K independent samples; mean cost estimates the expected-cost objective."""
    if theta.problem == "tsp":
        tours, logps, costs = solution_space.sample_tour_batch(theta, inst, rng, K, tau)
        return RolloutBatch("tsp", inst.id, float(tau), costs, logps, tours=tours)
    orders, sizes, logps = solution_space.sample_mis_batch(theta, inst, rng, K, tau)
    costs = -sizes.astype(np.float64)
    return RolloutBatch("mis", inst.id, float(tau), costs, logps, orders=orders, sizes=sizes)


def reinforce_grad_theta(batch, theta, inst, standardize=True, baseline="mean"):
    """Estimate d E[cost] / d theta from one rollout batch (flat array)."""
    if batch.K < 2:
        raise EstimatorError("gradient needs K >= 2 samples (baseline degenerates)")
    costs = batch.costs
    if baseline == "mean":
        adv = costs - costs.mean()
        norm = batch.K - 1
    elif baseline == "none":
        adv = costs.copy()
        norm = batch.K
    else:
        raise ParameterError(f"unknown baseline {baseline!r}")
    if standardize:
        adv = adv / (costs.std() + STD_EPS)
    weights = adv / norm
    if batch.problem == "tsp":
        grid = theta.grid(inst)
        out = np.zeros_like(grid)
        kernels.tsp_logq_grad(inst.nbr, grid, batch.tau, batch.tours, weights, out)
        return out.reshape(-1)
    theta.validate(inst)
    indptr, indices = inst.csr()
    out = np.zeros(inst.n)
    kernels.mis_logq_grad(indptr, indices, theta.values, batch.tau, batch.orders, batch.sizes, weights, out)
    return out


def grad_params(batch, theta, inst, params, trace, scope, standardize=True):
    """Chain the theta-gradient through the network: parameter-shaped grads."""
    dtheta = reinforce_grad_theta(batch, theta, inst, standardize=standardize)
    return net.backward(params, trace, dtheta, scope)
