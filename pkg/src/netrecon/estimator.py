"""Scikit-learn style front end over the EM engine."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .engine import EmConfig, run_em
from .exceptions import ContractError, ValidationError
from .models import MODELS, check_compatible
from .obsdata import ObservationCounts, counts_from_arrays, pair_endpoints
from .posterior import derived_rates, sample_networks

__all__ = ["NetworkReconstructor", "check_counts"]


def check_counts(X, model="iid", labels=None):
    """Validate ``X`` as input for ``model`` and return :class:`ObservationCounts`.

    ``X`` is either an ``ObservationCounts`` or a pair ``(E, N)`` of square
    arrays, optionally with a trailing mode axis. Arrays are read as
    directed reports for the per-node model and as symmetric counts
    otherwise.
    """
    if isinstance(X, ObservationCounts):
        counts = X
    elif isinstance(X, tuple) and len(X) == 2:
        E, N = (np.asarray(a) for a in X)
        if not (np.issubdtype(E.dtype, np.integer) or np.all(np.mod(E, 1) == 0)):
            raise ValidationError("E must hold integer counts")
        counts = counts_from_arrays(E.astype(np.int64), N.astype(np.int64), labels, directed=(model == "pernode"))
    else:
        raise ValidationError("expected ObservationCounts or an (E, N) pair of arrays")
    check_compatible(model, counts)
    return counts


class NetworkReconstructor(BaseEstimator):
    """Posterior network structure from repeated noisy edge observations.

    Parameters
    ----------
    model : {"iid", "pernode", "multilevel", "multimodal"}
        Observation model.
    n_levels : int
        Number of edge levels for the multilevel model.
    tol_param, tol_loglik, max_iter, restarts :
        EM stopping rules and number of random restarts.
    random_state : int
        Seed of the first restart; restart ``r`` uses ``random_state + r``.

    Attributes
    ----------
    params_ : fitted model parameters
    posterior_ : :class:`~netrecon.models.PosteriorEdges`
    trace_ : :class:`~netrecon.engine.EmTrace`
    converged_, n_iter_, loglik_ : convergence summary of the winning restart
    """

    def __init__(self, model="iid", n_levels=2, tol_param=1e-8, tol_loglik=1e-10, max_iter=1000,
                 restarts=5, random_state=0):
        self.model = model
        self.n_levels = n_levels
        self.tol_param = tol_param
        self.tol_loglik = tol_loglik
        self.max_iter = max_iter
        self.restarts = restarts
        self.random_state = random_state

    def _config(self):
        return EmConfig(self.tol_param, self.tol_loglik, self.max_iter, self.restarts, int(self.random_state))

    def fit(self, X, y=None):
        counts = check_counts(X, self.model)
        levels = self.n_levels if self.model == "multilevel" else None
        params, posterior, trace = run_em(self.model, counts, self._config(), levels=levels)
        self.params_ = params
        self.posterior_ = posterior
        self.trace_ = trace
        self.universe_ = counts.universe
        self.converged_ = trace.converged
        self.n_iter_ = trace.iterations_used
        self.loglik_ = trace.final_loglik
        if self.model == "pernode":
            E, _ = counts.dense(0)
            self.reporting_ = E.sum(axis=1) > 0
        return self

    def transform(self, X):
        """Posterior for new observations of the same nodes under the fitted rates."""
        check_is_fitted(self, "params_")
        counts = check_counts(X, self.model)
        if counts.universe.labels != self.universe_.labels:
            raise ContractError("transform needs counts over the node universe seen in fit")
        return MODELS[self.model].e_step(counts, self.params_)

    def fit_transform(self, X, y=None):
        return self.fit(X).posterior_

    def predict_proba(self):
        """Edge probability matrix (``n x n``), or ``n x n x W`` level probabilities."""
        check_is_fitted(self, "params_")
        Q = self.posterior_
        if Q.kind == "binary":
            return Q.matrix()
        n = self.universe_.n
        rows, cols = pair_endpoints(n)
        out = np.zeros((n, n, Q.levels))
        vals = Q.pair_values()
        out[rows, cols] = vals
        out[cols, rows] = vals
        return out

    def predict(self, threshold=0.5):
        """Edges whose probability of existing is at least ``threshold``.

        Returns ``(u, v, q)`` triples sorted by ``q`` descending, then by
        pair; for the multilevel model ``q`` is the probability of any
        nonzero level.
        """
        check_is_fitted(self, "params_")
        return edge_list(self.posterior_, threshold)

    def score(self, X, y=None):
        """Profile log-likelihood of ``X`` under the fitted parameters."""
        check_is_fitted(self, "params_")
        counts = check_counts(X, self.model)
        return MODELS[self.model].profile_loglik(counts, self.params_)

    def rates(self):
        check_is_fitted(self, "params_")
        return derived_rates(self.params_, getattr(self, "reporting_", None))

    def sample(self, count, seed=0):
        check_is_fitted(self, "params_")
        return sample_networks(self.posterior_, count, seed)


def edge_list(Q, threshold=0.5):
    vals = Q.pair_values()
    p_edge = vals if Q.kind == "binary" else 1.0 - vals[:, 0]
    keep = np.flatnonzero(p_edge >= threshold)
    order = keep[np.lexsort((keep, -p_edge[keep]))]
    rows, cols = pair_endpoints(Q.universe.n, order)
    labels = Q.universe.labels
    return [(labels[i], labels[j], float(p_edge[k])) for i, j, k in zip(rows.tolist(), cols.tolist(), order.tolist())]
