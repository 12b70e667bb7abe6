"""Independent brute-force references used across the test suite.

Nothing here imports the package's likelihood code: every quantity is
rebuilt from plain Python arithmetic over explicit networks.
"""

import itertools
import math

import numpy as np


def pairs_of(n):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def bern(rate, e, t):
    # python's 0.0 ** 0 == 1.0 gives the zero-trials convention for free
    return rate ** e * (1.0 - rate) ** (t - e)


def enumerate_networks(pair_likelihoods, prior):
    """Exhaustive sum over every assignment of a level to every pair.

    ``pair_likelihoods[k][w]`` is the data likelihood of pair ``k`` at level
    ``w``; ``prior[w]`` the prior of level ``w``. Returns the per-pair
    marginals (P, W) and ``log Z``.
    """
    P = len(pair_likelihoods)
    W = len(prior)
    marg = np.zeros((P, W))
    Z = 0.0
    for assignment in itertools.product(range(W), repeat=P):
        weight = 1.0
        for k, w in enumerate(assignment):
            weight *= prior[w] * pair_likelihoods[k][w]
        Z += weight
        for k, w in enumerate(assignment):
            marg[k, w] += weight
    return marg / Z, math.log(Z)


def iid_oracle(E, N, alpha, beta, rho):
    n = E.shape[0]
    lik = [[bern(beta, E[i, j], N[i, j]), bern(alpha, E[i, j], N[i, j])] for i, j in pairs_of(n)]
    marg, logz = enumerate_networks(lik, [1 - rho, rho])
    return marg[:, 1], logz


def multimodal_oracle(E, N, alpha, beta, rho):
    n, _, M = E.shape
    lik = []
    for i, j in pairs_of(n):
        on = math.prod(bern(alpha[m], E[i, j, m], N[i, j, m]) for m in range(M))
        off = math.prod(bern(beta[m], E[i, j, m], N[i, j, m]) for m in range(M))
        lik.append([off, on])
    marg, logz = enumerate_networks(lik, [1 - rho, rho])
    return marg[:, 1], logz


def multilevel_oracle(E, N, alpha, rho):
    n = E.shape[0]
    lik = [[bern(a, E[i, j], N[i, j]) for a in alpha] for i, j in pairs_of(n)]
    return enumerate_networks(lik, list(rho))


def pernode_oracle(E, N, alpha, beta, rho):
    n = E.shape[0]
    lik = []
    for i, j in pairs_of(n):
        on = bern(alpha[i], E[i, j], N[i, j]) * bern(alpha[j], E[j, i], N[j, i])
        off = bern(beta[i], E[i, j], N[i, j]) * bern(beta[j], E[j, i], N[j, i])
        lik.append([off, on])
    marg, logz = enumerate_networks(lik, [1 - rho, rho])
    return marg[:, 1], logz


def random_symmetric_counts(rng, n, max_trials, modes=None):
    shape = (n, n) if modes is None else (n, n, modes)
    N = rng.integers(0, max_trials + 1, size=shape)
    E = rng.integers(0, max_trials + 1, size=shape) % (N + 1)
    iu = np.tril_indices(n, -1)
    for A in (E, N):
        A[iu] = A.transpose(1, 0, *range(2, A.ndim))[iu]
        A[np.diag_indices(n)] = 0
    return E, N


def random_directed_counts(rng, n, max_trials):
    N = rng.integers(0, max_trials + 1, size=(n, n))
    E = rng.integers(0, max_trials + 1, size=(n, n)) % (N + 1)
    np.fill_diagonal(N, 0)
    np.fill_diagonal(E, 0)
    return E, N


def grid_argmax(objective, grid):
    values = np.array([objective(x) for x in grid])
    return grid[int(np.argmax(values))]
