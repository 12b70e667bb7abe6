"""Bernoulli observation models: E-steps, M-steps and profile log-likelihoods.

Four variants are provided:

``iid``
    one true-positive rate ``alpha``, false-positive rate ``beta`` and edge
    prior ``rho`` shared by every pair.
``pernode``
    directed reports where each reporting node ``i`` has its own
    ``alpha[i]`` and ``beta[i]``; the ground truth stays undirected.
``multilevel``
    ``W`` unordered edge levels, each observed at rate ``alpha[w]`` and with
    prior weight ``rho[w]``.
``multimodal``
    several independent measurement channels with per-mode rates.

All likelihood factors use the convention ``0 ** 0 == 1``, so a pair with
no trials gets its prior back as posterior.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, ClassVar, NamedTuple

import numpy as np
from scipy.special import xlog1py, xlogy

from .exceptions import ContractError, DegeneratePosteriorError, ValidationError
from .obsdata import NodeUniverse, ObservationCounts, PairClass, pair_endpoints, pair_index

EPS = 1e-12

__all__ = [
    "EPS",
    "IIDParams",
    "MODELS",
    "MultiLevelParams",
    "MultiModalParams",
    "PerNodeParams",
    "PosteriorEdges",
    "canonicalize_levels",
    "check_compatible",
    "e_step",
    "m_step",
    "profile_loglik",
]


def clamp(x):
    return np.clip(x, EPS, 1.0 - EPS)


# -- parameter containers ----------------------------------------------------


@dataclass(frozen=True)
class IIDParams:
    alpha: float
    beta: float
    rho: float
    flags: tuple[str, ...] = ()

    kind: ClassVar[str] = "iid"

    def vector(self):
        return np.array([self.alpha, self.beta, self.rho], dtype=float)

    def clamped(self):
        a, b, r = clamp(self.vector())
        return replace(self, alpha=float(a), beta=float(b), rho=float(r))

    def to_dict(self):
        return {"alpha": self.alpha, "beta": self.beta, "rho": self.rho}


@dataclass(frozen=True, eq=False)
class PerNodeParams:
    alpha: np.ndarray
    beta: np.ndarray
    rho: float
    flags: tuple[str, ...] = ()

    kind: ClassVar[str] = "pernode"

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        if self.alpha.shape != self.beta.shape or self.alpha.ndim != 1:
            raise ValidationError("alpha and beta must be 1-d arrays of equal length")

    def vector(self):
        return np.concatenate([self.alpha, self.beta, [self.rho]])

    def clamped(self):
        return replace(self, alpha=clamp(self.alpha), beta=clamp(self.beta), rho=float(clamp(self.rho)))

    def to_dict(self):
        return {"alpha": self.alpha.tolist(), "beta": self.beta.tolist(), "rho": self.rho}


@dataclass(frozen=True, eq=False)
class MultiLevelParams:
    alpha: np.ndarray
    rho: np.ndarray
    flags: tuple[str, ...] = ()

    kind: ClassVar[str] = "multilevel"

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))
        if self.alpha.shape != self.rho.shape or self.alpha.ndim != 1:
            raise ValidationError("alpha and rho must be 1-d arrays of equal length")
        if len(self.alpha) < 2:
            raise ValidationError("the multilevel model needs at least 2 levels")

    @property
    def levels(self):
        return len(self.alpha)

    def vector(self):
        return np.concatenate([self.alpha, self.rho])

    def clamped(self):
        rho = clamp(self.rho)
        return replace(self, alpha=clamp(self.alpha), rho=rho / rho.sum())

    def to_dict(self):
        return {"alpha": self.alpha.tolist(), "rho": self.rho.tolist()}


@dataclass(frozen=True, eq=False)
class MultiModalParams:
    alpha: np.ndarray
    beta: np.ndarray
    rho: float
    flags: tuple[str, ...] = ()

    kind: ClassVar[str] = "multimodal"

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        if self.alpha.shape != self.beta.shape or self.alpha.ndim != 1:
            raise ValidationError("alpha and beta must be 1-d arrays of equal length")

    @property
    def modes(self):
        return len(self.alpha)

    def vector(self):
        return np.concatenate([self.alpha, self.beta, [self.rho]])

    def clamped(self):
        return replace(self, alpha=clamp(self.alpha), beta=clamp(self.beta), rho=float(clamp(self.rho)))

    def to_dict(self):
        return {"alpha": self.alpha.tolist(), "beta": self.beta.tolist(), "rho": self.rho}


# -- posterior container -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class PosteriorEdges:
    """Marginal edge probabilities over all unordered pairs.

    Exchangeable models store one value per pair class (``classes`` set);
    the per-node model stores one value per pair. ``values`` is 1-d for
    binary edges and ``(rows, W)`` for the multilevel model, where column
    ``w`` is the probability that the pair sits at level ``w``.
    """

    universe: NodeUniverse
    values: np.ndarray
    classes: tuple[PairClass, ...] | None = None
    pair_to_class: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.classes is None and len(values) != self.universe.n_pairs:
            raise ValidationError("per-pair posterior must cover every pair")

    @property
    def kind(self):
        return "multilevel" if self.values.ndim == 2 else "binary"

    @property
    def levels(self):
        return self.values.shape[1] if self.values.ndim == 2 else 2

    @property
    def by_class(self):
        return self.classes is not None

    def pair_values(self):
        """Values expanded to every linear pair index."""
        if self.classes is None:
            return self.values
        return self.values[self.pair_to_class]

    def matrix(self):
        """Symmetric ``n x n`` matrix of edge probabilities (binary only)."""
        if self.kind != "binary":
            raise ValidationError("matrix() is defined for binary posteriors; use pair_values()")
        n = self.universe.n
        rows, cols = pair_endpoints(n)
        out = np.zeros((n, n))
        q = self.pair_values()
        out[rows, cols] = q
        out[cols, rows] = q
        return out

    def get(self, u, v):
        """Posterior for the pair of node labels ``u``, ``v``."""
        i, j = self.universe.index(u), self.universe.index(v)
        if i == j:
            raise ValidationError("no posterior for a self-pair")
        k = pair_index(i, j, self.universe.n)
        if self.classes is None:
            return self.values[k]
        return self.values[self.pair_to_class[k]]

    def complement(self):
        if self.kind != "binary":
            raise ValidationError("complement is defined for binary posteriors")
        return replace(self, values=1.0 - self.values)


def _class_posterior(counts, values):
    return PosteriorEdges(counts.universe, values, counts.classes, counts.pair_to_class)


def _class_view(counts, Q=None):
    """``(E, N, weight, q)`` aligned rows for an undirected counts object.

    Rows are pair classes when ``Q`` is class-based (or absent) and single
    pairs when ``Q`` is stored per pair.
    """
    if Q is None or Q.by_class:
        E, N, w = counts.class_table
        q = None if Q is None else Q.values
        if q is not None and len(q) != len(w):
            raise ContractError("posterior does not match the pair classes of these counts")
        return E, N, w, q
    E, N = counts.pair_counts()
    return E.astype(float), N.astype(float), np.ones(len(E)), Q.values


# -- shared kernels ----------------------------------------------------------


def _bernoulli_loglik(E, N, rate):
    rate = np.asarray(rate, dtype=float)
    if np.all((rate > 0.0) & (rate < 1.0)):
        return E * np.log(rate) + (N - E) * np.log1p(-rate)
    # boundary rates: 0 * log(0) == 0 so that zero-trial factors equal one
    return xlogy(E, rate) + xlog1py(N - E, -rate)


def _mixture(log_terms, prior):
    """Normalized posterior and log normalizer of a prior-weighted mixture.

    ``log_terms`` has shape ``(rows, K)``. The largest term is factored out
    before exponentiating; when all terms are equal the prior comes back
    unchanged.
    """
    top = log_terms.max(axis=1, keepdims=True)
    weighted = prior * np.exp(log_terms - top)
    total = weighted.sum(axis=1, keepdims=True)
    post = weighted / total
    # uninformative rows: skip the division so a prior that sums to 1 - ulp stays bit-exact
    flat = np.all(log_terms == top, axis=1)
    if flat.any():
        post[flat] = np.broadcast_to(prior, log_terms.shape)[flat]
    return post, np.log(total[:, 0]) + top[:, 0]


def _binary_terms(E, N, alpha, beta):
    """Summed per-mode log-likelihoods under edge / non-edge, shape ``(rows, 2)``."""
    on = _bernoulli_loglik(E, N, alpha).sum(axis=1)
    off = _bernoulli_loglik(E, N, beta).sum(axis=1)
    return np.stack([on, off], axis=1)


def _binary_posterior(E, N, alpha, beta, rho):
    terms = _binary_terms(E, N, np.asarray(alpha), np.asarray(beta))
    post, lognorm = _mixture(terms, np.array([rho, 1.0 - rho]))
    return post[:, 0], lognorm


def _weighted_sum(w, x):
    return float(np.sum(w * x))


def _ratio(num, den, name, previous, flags):
    if den > 0.0:
        return num / den
    if previous is None:
        raise DegeneratePosteriorError(name)
    flags.append(name)
    return previous


# -- compatibility -----------------------------------------------------------


def check_compatible(kind, counts: ObservationCounts):
    """Raise :class:`ContractError` when ``counts`` cannot feed model ``kind``."""
    if kind not in MODELS:
        raise ContractError(f"unknown model {kind!r}; choose from {sorted(MODELS)}")
    if kind == "pernode":
        if not counts.directed:
            raise ContractError("the per-node model needs directed report counts")
        if counts.modes != 1:
            raise ContractError("the per-node model takes single-mode counts")
        return
    if counts.directed:
        raise ContractError(f"the {kind} model needs undirected counts")
    if kind in ("iid", "multilevel") and counts.modes != 1:
        raise ContractError(f"the {kind} model takes single-mode counts; use multimodal")


# -- iid ---------------------------------------------------------------------


def evaluate_iid(counts, params: IIDParams):
    """``(posterior, profile log-likelihood)`` in one pass."""
    E, N, w, _ = _class_view(counts)
    q, lognorm = _binary_posterior(E[:, :1], N[:, :1], [params.alpha], [params.beta], params.rho)
    return _class_posterior(counts, q), _weighted_sum(w, lognorm)


def e_step_iid(counts, params: IIDParams) -> PosteriorEdges:
    return evaluate_iid(counts, params)[0]


def m_step_iid(counts, Q: PosteriorEdges, previous: IIDParams | None = None) -> IIDParams:
    """Closed-form rate and prior updates from the current posterior.

    With ``previous`` given, a zero denominator keeps the previous value and
    records a flag; otherwise it raises :class:`DegeneratePosteriorError`.
    """
    E, N, w, q = _class_view(counts, Q)
    E, N = E[:, 0], N[:, 0]
    flags = []
    alpha = _ratio(_weighted_sum(w, E * q), _weighted_sum(w, N * q), "alpha",
                   None if previous is None else previous.alpha, flags)
    beta = _ratio(_weighted_sum(w, E * (1.0 - q)), _weighted_sum(w, N * (1.0 - q)), "beta",
                  None if previous is None else previous.beta, flags)
    rho = _weighted_sum(w, q) / counts.universe.n_pairs
    return IIDParams(alpha, beta, rho, tuple(flags)).clamped()


def profile_loglik_iid(counts, params: IIDParams) -> float:
    return evaluate_iid(counts, params)[1]


# -- multimodal --------------------------------------------------------------


def _check_modes(counts, params):
    if params.modes != counts.modes:
        raise ContractError(f"parameters cover {params.modes} mode(s), counts have {counts.modes}")


def evaluate_multimodal(counts, params: MultiModalParams):
    _check_modes(counts, params)
    E, N, w, _ = _class_view(counts)
    q, lognorm = _binary_posterior(E, N, params.alpha, params.beta, params.rho)
    return _class_posterior(counts, q), _weighted_sum(w, lognorm)


def e_step_multimodal(counts, params: MultiModalParams) -> PosteriorEdges:
    return evaluate_multimodal(counts, params)[0]


def m_step_multimodal(counts, Q, previous: MultiModalParams | None = None) -> MultiModalParams:
    E, N, w, q = _class_view(counts, Q)
    flags = []
    alpha = np.empty(counts.modes)
    beta = np.empty(counts.modes)
    for m in range(counts.modes):
        alpha[m] = _ratio(_weighted_sum(w, E[:, m] * q), _weighted_sum(w, N[:, m] * q), f"alpha[{m}]",
                          None if previous is None else previous.alpha[m], flags)
        beta[m] = _ratio(_weighted_sum(w, E[:, m] * (1.0 - q)), _weighted_sum(w, N[:, m] * (1.0 - q)),
                         f"beta[{m}]", None if previous is None else previous.beta[m], flags)
    rho = _weighted_sum(w, q) / counts.universe.n_pairs
    return MultiModalParams(alpha, beta, rho, tuple(flags)).clamped()


def profile_loglik_multimodal(counts, params: MultiModalParams) -> float:
    return evaluate_multimodal(counts, params)[1]


# -- multilevel --------------------------------------------------------------


def evaluate_multilevel(counts, params: MultiLevelParams):
    E, N, w, _ = _class_view(counts)
    terms = _bernoulli_loglik(E[:, :1], N[:, :1], params.alpha[None, :])
    post, lognorm = _mixture(terms, params.rho[None, :])
    return _class_posterior(counts, post), _weighted_sum(w, lognorm)


def e_step_multilevel(counts, params: MultiLevelParams) -> PosteriorEdges:
    return evaluate_multilevel(counts, params)[0]


def m_step_multilevel(counts, Q, previous: MultiLevelParams | None = None) -> MultiLevelParams:
    E, N, w, q = _class_view(counts, Q)
    if q.ndim != 2:
        raise ContractError("the multilevel M-step needs a multilevel posterior")
    E, N = E[:, 0], N[:, 0]
    W = q.shape[1]
    flags = []
    alpha = np.empty(W)
    rho = np.empty(W)
    for lvl in range(W):
        alpha[lvl] = _ratio(_weighted_sum(w, E * q[:, lvl]), _weighted_sum(w, N * q[:, lvl]),
                            f"alpha[{lvl}]", None if previous is None else previous.alpha[lvl], flags)
        rho[lvl] = _weighted_sum(w, q[:, lvl]) / counts.universe.n_pairs
    return MultiLevelParams(alpha, rho, tuple(flags)).clamped()


def profile_loglik_multilevel(counts, params: MultiLevelParams) -> float:
    return evaluate_multilevel(counts, params)[1]


def canonicalize_levels(params: MultiLevelParams, Q: PosteriorEdges | None = None):
    """Order levels by ascending observation rate.

    Ties in ``alpha`` put the larger prior weight at the lower level, then
    fall back to the original index. Returns ``(params, Q)``.
    """
    order = sorted(range(params.levels), key=lambda w: (params.alpha[w], -params.rho[w], w))
    order = np.array(order)
    new = replace(params, alpha=params.alpha[order], rho=params.rho[order])
    if Q is not None:
        Q = replace(Q, values=Q.values[:, order])
    return new, Q


# -- per-node ----------------------------------------------------------------


def evaluate_pernode(counts, params: PerNodeParams):
    if len(params.alpha) != counts.n:
        raise ContractError(f"parameters cover {len(params.alpha)} nodes, counts have {counts.n}")
    E, N = counts.dense_float[0]
    # row i holds what node i reported, scored with i's own rates
    on = _bernoulli_loglik(E, N, params.alpha[:, None])
    off = _bernoulli_loglik(E, N, params.beta[:, None])
    rows, cols = pair_endpoints(counts.n)
    terms = np.stack([on[rows, cols] + on[cols, rows], off[rows, cols] + off[cols, rows]], axis=1)
    post, lognorm = _mixture(terms, np.array([params.rho, 1.0 - params.rho]))
    return PosteriorEdges(counts.universe, post[:, 0]), float(np.sum(lognorm))


def e_step_pernode(counts, params: PerNodeParams) -> PosteriorEdges:
    return evaluate_pernode(counts, params)[0]


def m_step_pernode(counts, Q, previous: PerNodeParams | None = None) -> PerNodeParams:
    """Per-reporter rate updates from row sums of the directed counts.

    A node whose denominator vanishes keeps its previous rate (or gets the
    pooled rate when no previous estimate exists) and is flagged.
    """
    E, N = counts.dense_float[0]
    Qm = Q.matrix()
    Pm = 1.0 - Qm
    np.fill_diagonal(Pm, 0.0)
    num_a, den_a = (E * Qm).sum(axis=1), (N * Qm).sum(axis=1)
    num_b, den_b = (E * Pm).sum(axis=1), (N * Pm).sum(axis=1)
    if previous is None:
        keep_a = np.full(counts.n, num_a.sum() / den_a.sum() if den_a.sum() > 0 else 0.5)
        keep_b = np.full(counts.n, num_b.sum() / den_b.sum() if den_b.sum() > 0 else 0.5)
    else:
        keep_a, keep_b = previous.alpha, previous.beta
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(den_a > 0, num_a / den_a, keep_a)
        beta = np.where(den_b > 0, num_b / den_b, keep_b)
    flags = [f"alpha[{i}]" for i in np.flatnonzero(~(den_a > 0))]
    flags += [f"beta[{i}]" for i in np.flatnonzero(~(den_b > 0))]
    rho = float(np.sum(Q.pair_values())) / counts.universe.n_pairs
    return PerNodeParams(alpha, beta, rho, tuple(flags)).clamped()


def profile_loglik_pernode(counts, params: PerNodeParams) -> float:
    return evaluate_pernode(counts, params)[1]


# -- dispatch ----------------------------------------------------------------


class DataModel(NamedTuple):
    evaluate: Callable
    m_step: Callable
    params_type: type

    def e_step(self, counts, params):
        return self.evaluate(counts, params)[0]

    def profile_loglik(self, counts, params):
        return self.evaluate(counts, params)[1]


MODELS = {
    "iid": DataModel(evaluate_iid, m_step_iid, IIDParams),
    "pernode": DataModel(evaluate_pernode, m_step_pernode, PerNodeParams),
    "multilevel": DataModel(evaluate_multilevel, m_step_multilevel, MultiLevelParams),
    "multimodal": DataModel(evaluate_multimodal, m_step_multimodal, MultiModalParams),
}


def e_step(counts, params):
    return MODELS[params.kind].e_step(counts, params)


def m_step(kind, counts, Q, previous=None):
    return MODELS[kind].m_step(counts, Q, previous)


def profile_loglik(kind, counts, params):
    """Log of the prior-weighted mixture likelihood summed over pairs.

    Equals ``log P(theta | data)`` up to the constant ``log P(data)``.
    """
    if params.kind != kind:
        raise ContractError(f"expected {kind} parameters, got {params.kind}")
    return MODELS[kind].profile_loglik(counts, params)


def params_from_dict(kind, data):
    """Inverse of the ``to_dict`` methods."""
    if kind == "iid":
        return IIDParams(float(data["alpha"]), float(data["beta"]), float(data["rho"]))
    if kind == "multilevel":
        return MultiLevelParams(data["alpha"], data["rho"])
    if kind == "pernode":
        return PerNodeParams(data["alpha"], data["beta"], float(data["rho"]))
    if kind == "multimodal":
        return MultiModalParams(data["alpha"], data["beta"], float(data["rho"]))
    raise ContractError(f"unknown model {kind!r}")


def n_free_parameters(params):
    if params.kind == "iid":
        return 3
    if params.kind == "multilevel":
        return 2 * params.levels - 1
    if params.kind == "multimodal":
        return 2 * params.modes + 1
    return 2 * len(params.alpha) + 1
