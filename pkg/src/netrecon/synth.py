"""Seeded generators for ground-truth networks and noisy observations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .models import PerNodeParams
from .obsdata import NodeUniverse, ObservationCounts, pair_endpoints
from .posterior import NetworkSample

__all__ = ["SynthSpec", "generate_ground_truth", "generate_observations", "synthesize"]


@dataclass(frozen=True, eq=False)
class SynthSpec:
    """What to simulate.

    ``trials`` is the number of observations per pair (per ordered pair for
    the per-node model); for multimodal parameters it may be a sequence with
    one entry per mode.
    """

    n: int
    params: object
    trials: int | tuple[int, ...] = 1
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("need at least 2 nodes")
        trials = tuple(int(t) for t in np.atleast_1d(self.trials))
        if any(t < 0 for t in trials):
            raise ValidationError("trial counts must be nonnegative")
        if self.kind == "multimodal":
            if len(trials) == 1:
                trials = trials * self.params.modes
            if len(trials) != self.params.modes:
                raise ValidationError("need one trial count per mode")
        elif len(trials) != 1:
            raise ValidationError("only the multimodal model takes per-mode trial counts")
        object.__setattr__(self, "trials", trials)
        _check_ranges(self.params)
        if self.kind == "pernode" and len(self.params.alpha) != self.n:
            raise ValidationError("per-node parameters must cover every node")

    @property
    def kind(self):
        return self.params.kind

    @property
    def universe(self):
        return NodeUniverse(tuple(str(k) for k in range(self.n)))


def _check_ranges(params):
    for name, val in params.to_dict().items():
        arr = np.asarray(val, dtype=float)
        if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
            raise ValidationError(f"{name} must lie in [0, 1]")
    if params.kind == "multilevel" and abs(params.rho.sum() - 1.0) > 1e-12:
        raise ValidationError("level priors must sum to 1")


def _rngs(seed):
    truth, obs = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(truth), np.random.default_rng(obs)


def generate_ground_truth(spec: SynthSpec) -> NetworkSample:
    """Every pair independently an edge with probability ``rho`` (or level ``w`` w.p. ``rho[w]``)."""
    rng, _ = _rngs(spec.seed)
    universe = spec.universe
    P = universe.n_pairs
    if spec.kind == "multilevel":
        level = rng.choice(len(spec.params.rho), size=P, p=spec.params.rho)
        present = np.flatnonzero(level > 0)
        return NetworkSample(universe, present, level[present], spec.seed)
    present = np.flatnonzero(rng.random(P) < spec.params.rho)
    return NetworkSample(universe, present, None, spec.seed)


def _binomial(rng, rate, trials):
    # N Bernoulli trials per cell
    if trials == 0:
        return np.zeros(rate.shape, dtype=np.int64)
    return (rng.random(rate.shape + (trials,)) < rate[..., None]).sum(axis=-1)


def generate_observations(truth: NetworkSample, spec: SynthSpec) -> ObservationCounts:
    """Noisy counts for ``truth`` under the model in ``spec``."""
    _, rng = _rngs(spec.seed)
    universe = spec.universe
    n = spec.n
    if truth.universe.n != n:
        raise ValidationError("ground truth and spec disagree on the number of nodes")
    params = spec.params
    state = truth.indicator()
    entries = {}

    if spec.kind == "pernode":
        A = truth.adjacency() > 0
        rate = np.where(A, params.alpha[:, None], params.beta[:, None])
        E = _binomial(rng, rate, spec.trials[0])
        np.fill_diagonal(E, 0)
        for i, j in zip(*np.nonzero(E)):
            entries[(int(i), int(j), 0)] = (int(E[i, j]), spec.trials[0])
        return ObservationCounts(universe, entries, spec.trials, directed=True)

    rows, cols = pair_endpoints(n)
    if spec.kind == "multilevel":
        rates = [params.alpha[state]]
    elif spec.kind == "iid":
        rates = [np.where(state > 0, params.alpha, params.beta)]
    else:
        rates = [np.where(state > 0, params.alpha[m], params.beta[m]) for m in range(params.modes)]
    for m, rate in enumerate(rates):
        E = _binomial(rng, rate, spec.trials[m])
        for k in np.flatnonzero(E):
            entries[(int(rows[k]), int(cols[k]), m)] = (int(E[k]), spec.trials[m])
    return ObservationCounts(universe, entries, spec.trials, directed=False)


def synthesize(spec: SynthSpec):
    """``(truth, counts)`` for ``spec``."""
    truth = generate_ground_truth(spec)
    return truth, generate_observations(truth, spec)


def random_pernode_params(n, alpha_range, beta_range, rho, seed=0):
    """Per-node rates drawn uniformly from the given ranges."""
    rng = np.random.default_rng(seed)
    return PerNodeParams(rng.uniform(*alpha_range, n), rng.uniform(*beta_range, n), rho)
