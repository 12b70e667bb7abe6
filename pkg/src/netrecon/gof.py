"""Goodness of fit on the distribution of per-pair observation counts.

The model-predicted number of pairs observed ``e`` times out of ``N`` is

    C(n, 2) * sum_k prior_k * Binom(e; N, rate_k)

over the mixture components (edge / non-edge, or the edge levels). Observed
and predicted histograms are compared with Pearson's chi-squared test after
pooling sparse bins; p-values come from :func:`scipy.special.gammaincc`, the
regularized upper incomplete gamma function (Cephes implementation).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import comb, gammaincc, xlog1py, xlogy

from .engine import EmConfig, run_em
from .exceptions import GofError, UnsupportedError
from .models import n_free_parameters

logger = logging.getLogger(__name__)

__all__ = [
    "FitReport",
    "LevelSelection",
    "chi_squared_gof",
    "observed_histogram",
    "pool_bins",
    "predicted_histogram",
    "select_num_levels",
]

MIN_EXPECTED = 5.0


def _components(params):
    if params.kind == "iid":
        return np.array([params.alpha, params.beta]), np.array([params.rho, 1.0 - params.rho])
    if params.kind == "multilevel":
        return params.alpha, params.rho
    if params.kind == "multimodal" and params.modes == 1:
        return np.array([params.alpha[0], params.beta[0]]), np.array([params.rho, 1.0 - params.rho])
    raise UnsupportedError(f"no count histogram for the {params.kind} model")


def predicted_histogram(params, n, N):
    """Expected number of pairs with each count ``e = 0..N``."""
    rates, priors = _components(params)
    e = np.arange(N + 1)
    # log-space pmf: scipy.stats.binom overflows for subnormal rates
    k = e[:, None]
    pmf = comb(N, k) * np.exp(xlogy(k, rates[None, :]) + xlog1py(N - k, -rates[None, :]))
    return n * (n - 1) / 2 * (pmf @ priors)


def observed_histogram(counts):
    """Number of pairs with each count ``e = 0..N``; needs a common ``N``."""
    if counts.directed or counts.modes != 1:
        raise UnsupportedError("count histograms need undirected single-mode data")
    if not counts.is_equal_trials():
        raise UnsupportedError("count histograms need the same number of trials for every pair")
    N = counts.default_N[0]
    hist = np.zeros(N + 1, dtype=np.int64)
    for cls in counts.classes:
        (e, _), = cls.signature
        hist[e] += cls.member_count
    return hist


def pool_bins(predicted, min_expected=MIN_EXPECTED):
    """Group consecutive bins until each group expects at least ``min_expected``.

    Returns a list of index arrays. A trailing group that stays short is
    merged into the one before it.
    """
    groups, current, acc = [], [], 0.0
    for k, value in enumerate(predicted):
        current.append(k)
        acc += value
        if acc >= min_expected:
            groups.append(current)
            current, acc = [], 0.0
    if current:
        if groups:
            groups[-1].extend(current)
        else:
            groups.append(current)
    return [np.array(g) for g in groups]


@dataclass(frozen=True, eq=False)
class FitReport:
    observed: np.ndarray
    predicted: np.ndarray
    groups: tuple
    chi2_statistic: float
    degrees_of_freedom: int
    p_value: float | None
    significance: float
    reject: bool

    @property
    def pooled_observed(self):
        return np.array([self.observed[g].sum() for g in self.groups])

    @property
    def pooled_predicted(self):
        return np.array([self.predicted[g].sum() for g in self.groups])

    def to_dict(self):
        return {
            "bins": [{"e": int(e), "observed": float(o), "predicted": float(p)}
                     for e, (o, p) in enumerate(zip(self.observed, self.predicted))],
            "pooled_bins": [[int(g[0]), int(g[-1])] for g in self.groups],
            "chi2_statistic": self.chi2_statistic,
            "degrees_of_freedom": self.degrees_of_freedom,
            "p_value": self.p_value,
            "significance": self.significance,
            "reject": self.reject,
        }

    def table(self):
        """Tab-separated ``e observed predicted`` dump."""
        rows = ["e\tobserved\tpredicted"]
        rows += [f"{e}\t{o:g}\t{float(p)!r}" for e, (o, p) in enumerate(zip(self.observed, self.predicted))]
        return "\n".join(rows) + "\n"


def chi_squared_gof(observed, predicted, fitted_param_count, significance=0.05, min_expected=MIN_EXPECTED):
    """Pearson chi-squared test of observed against predicted bin counts.

    Degrees of freedom are ``pooled_bins - 1 - fitted_param_count``. When
    that leaves no freedom the test cannot reject and ``p_value`` is None.
    """
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if observed.shape != predicted.shape:
        raise GofError("observed and predicted histograms need the same bins")
    groups = pool_bins(predicted, min_expected)
    if len(groups) < 2:
        raise GofError("fewer than 2 bins remain after pooling")
    obs = np.array([observed[g].sum() for g in groups])
    pred = np.array([predicted[g].sum() for g in groups])
    if np.any(pred <= 0):
        raise GofError("pooled predicted counts must be positive")
    stat = float(np.sum((obs - pred) ** 2 / pred))
    dof = len(groups) - 1 - int(fitted_param_count)
    if dof >= 1:
        p_value = float(gammaincc(dof / 2.0, stat / 2.0))
        reject = p_value < significance
    else:
        p_value, reject = None, False
    return FitReport(observed, predicted, tuple(groups), stat, dof, p_value, significance, reject)


class LevelSelection(NamedTuple):
    levels: int
    reports: dict
    fits: dict
    all_rejected: bool


def select_num_levels(counts, max_levels, significance=0.05, config: EmConfig | None = None):
    """Smallest number of edge levels whose fit the chi-squared test does not reject.

    Fits the multilevel model for ``W = 2..max_levels``. If every fit is
    rejected, ``max_levels`` is returned with ``all_rejected`` set.
    """
    if max_levels < 2:
        raise GofError("max_levels must be at least 2")
    obs = observed_histogram(counts)
    N = counts.default_N[0]
    n = counts.n
    reports, fits = {}, {}
    chosen = None
    for W in range(2, max_levels + 1):
        fit = run_em("multilevel", counts, config, levels=W)
        fits[W] = fit
        pred = predicted_histogram(fit.params, n, N)
        try:
            report = chi_squared_gof(obs, pred, n_free_parameters(fit.params), significance)
        except GofError:
            # all predicted mass in one pooled bin: nothing left to test
            groups = (np.arange(N + 1),)
            report = FitReport(obs.astype(float), pred, groups, 0.0, 0, None, significance, False)
        reports[W] = report
        if chosen is None and not report.reject:
            chosen = W
    if chosen is None:
        logger.warning("every level count up to %d was rejected", max_levels)
        return LevelSelection(max_levels, reports, fits, True)
    return LevelSelection(chosen, reports, fits, False)
