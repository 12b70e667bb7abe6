"""Generic expectation-maximization driver with restarts and trace capture."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .exceptions import ContractError, NumericalError, ValidationError
from .models import (
    MODELS,
    IIDParams,
    MultiLevelParams,
    MultiModalParams,
    PerNodeParams,
    PosteriorEdges,
    canonicalize_levels,
    check_compatible,
)

logger = logging.getLogger(__name__)

__all__ = ["EmConfig", "EmResult", "EmTrace", "IterationRecord", "init_params", "resolve_label_swap", "run_em"]


@dataclass(frozen=True)
class EmConfig:
    tol_param: float = 1e-8
    tol_loglik: float = 1e-10
    max_iter: int = 1000
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.tol_param > 0 or not self.tol_loglik > 0:
            raise ValidationError("tolerances must be positive")
        if self.max_iter < 1 or self.restarts < 1:
            raise ValidationError("max_iter and restarts must be at least 1")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    loglik: float
    max_delta: float | None


@dataclass(frozen=True)
class EmTrace:
    records: tuple[IterationRecord, ...]
    converged: bool
    iterations_used: int
    restart_index: int
    restart_logliks: tuple[float, ...] = ()

    @property
    def logliks(self):
        return np.array([r.loglik for r in self.records])

    @property
    def final_loglik(self):
        return self.records[-1].loglik


class EmResult(NamedTuple):
    params: object
    posterior: PosteriorEdges
    trace: EmTrace


def init_params(kind, counts, seed, levels=2):
    """Random starting point; the same seed always gives the same draw.

    Binary models draw true-positive rates from [0.5, 0.99) and
    false-positive rates from [0.001, 0.5), so every start is already on
    the ``alpha > beta`` side of the label symmetry.
    """
    rng = np.random.default_rng(seed)
    if kind == "iid":
        return IIDParams(float(rng.uniform(0.5, 0.99)), float(rng.uniform(0.001, 0.5)),
                         float(rng.uniform(0.01, 0.5)))
    if kind == "pernode":
        n = counts.n
        return PerNodeParams(rng.uniform(0.5, 0.99, n), rng.uniform(0.001, 0.5, n),
                             float(rng.uniform(0.01, 0.5)))
    if kind == "multimodal":
        M = counts.modes
        return MultiModalParams(rng.uniform(0.5, 0.99, M), rng.uniform(0.001, 0.5, M),
                                float(rng.uniform(0.01, 0.5)))
    if kind == "multilevel":
        if levels is None or levels < 2:
            raise ValidationError("the multilevel model needs levels >= 2")
        return MultiLevelParams(rng.uniform(0.001, 0.99, levels), rng.dirichlet(np.ones(levels)))
    raise ContractError(f"unknown model {kind!r}")


def resolve_label_swap(params, Q: PosteriorEdges | None = None):
    """Map a fit onto the side of the edge/non-edge symmetry with ``alpha > beta``.

    Swapping every true-positive rate with its false-positive rate while
    sending ``rho -> 1 - rho`` and ``Q -> 1 - Q`` leaves the likelihood
    unchanged, so EM can land on either copy.
    """
    kind = params.kind
    if kind == "iid":
        swap = params.alpha < params.beta
    elif kind == "multimodal":
        swap = params.alpha.sum() < params.beta.sum()
    elif kind == "pernode":
        swap = params.rho > 0.5 and params.alpha.mean() < params.beta.mean()
    else:
        return params, Q
    if not swap:
        return params, Q
    params = replace(params, alpha=params.beta, beta=params.alpha, rho=1.0 - params.rho)
    if Q is not None:
        Q = Q.complement()
    return params, Q


def _fit_once(kind, counts, params, config, restart):
    model = MODELS[kind]
    Q, ll = model.evaluate(counts, params)
    if not math.isfinite(ll):
        raise NumericalError("non-finite log-likelihood at the starting point", iteration=0)
    records = [IterationRecord(0, ll, None)]
    converged = False
    for it in range(1, config.max_iter + 1):
        new = model.m_step(counts, Q, params)
        delta = float(np.max(np.abs(new.vector() - params.vector())))
        Q, ll_new = model.evaluate(counts, new)
        if not math.isfinite(ll_new):
            raise NumericalError("non-finite log-likelihood", iteration=it)
        records.append(IterationRecord(it, ll_new, delta))
        params = new
        small_step = delta < config.tol_param
        flat = abs(ll_new - ll) <= config.tol_loglik * max(abs(ll_new), 1.0)
        ll = ll_new
        if small_step or flat:
            converged = True
            break
    logger.debug("restart %d: %d iterations, loglik %.6f, converged=%s", restart, len(records) - 1, ll, converged)
    return params, Q, records, converged


def run_em(kind, counts, config: EmConfig | None = None, levels=None, initial=None) -> EmResult:
    """Fit ``kind`` to ``counts`` by alternating E- and M-steps.

    Each restart ``r`` starts from ``init_params(seed + r)`` (or from
    ``initial`` for the first restart when given) and stops when the largest
    parameter change drops below ``tol_param`` or the relative
    log-likelihood change below ``tol_loglik``. The restart with the highest
    final log-likelihood wins, earliest first on ties, and is then put into
    canonical labelling.
    """
    config = config or EmConfig()
    check_compatible(kind, counts)
    if kind == "multilevel" and levels is None:
        levels = initial.levels if initial is not None else 2

    best = None
    finals = []
    for r in range(config.restarts):
        if r == 0 and initial is not None:
            start = initial.clamped()
        else:
            start = init_params(kind, counts, config.seed + r, levels)
        params, Q, records, converged = _fit_once(kind, counts, start, config, r)
        finals.append(records[-1].loglik)
        if best is None or records[-1].loglik > best[2][-1].loglik:
            best = (params, Q, records, converged, r)

    params, Q, records, converged, r = best
    if kind == "multilevel":
        params, Q = canonicalize_levels(params, Q)
    else:
        params, Q = resolve_label_swap(params, Q)
    trace = EmTrace(tuple(records), converged, len(records) - 1, r, tuple(finals))
    return EmResult(params, Q, trace)
