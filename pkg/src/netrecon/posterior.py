"""Quantities derived from a fitted posterior.

Error rates follow directly from the parameters. Network metrics are either
read off the edge marginals (expected degree) or estimated by drawing
networks from the factorized posterior, edge by edge. A single-edge-flip
Metropolis-Hastings sampler covers targets that do not factorize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from .exceptions import DegeneratePosteriorError, NetReconError, NumericalError, ValidationError
from .models import PosteriorEdges
from .obsdata import NodeUniverse, pair_endpoints, pair_index

__all__ = [
    "DerivedRates",
    "MetricStats",
    "NetworkSample",
    "derived_rates",
    "edge_count",
    "expected_degree",
    "factorized_logweight",
    "format_samples",
    "metric_stats",
    "mh_sample",
    "sample_networks",
]


@dataclass(frozen=True, eq=False)
class NetworkSample:
    """One network drawn from a posterior.

    ``pairs`` lists the linear indices of pairs carrying an edge, sorted;
    for multilevel draws ``levels`` gives the (nonzero) level of each listed
    pair and every unlisted pair sits at level 0.
    """

    universe: NodeUniverse
    pairs: np.ndarray
    levels: np.ndarray | None = None
    seed: int | None = None
    index: int = 0

    @property
    def n_edges(self):
        return len(self.pairs)

    def edges(self):
        rows, cols = pair_endpoints(self.universe.n, self.pairs)
        labels = self.universe.labels
        return [(labels[i], labels[j]) for i, j in zip(rows.tolist(), cols.tolist())]

    def degrees(self):
        rows, cols = pair_endpoints(self.universe.n, self.pairs)
        return np.bincount(np.concatenate([rows, cols]), minlength=self.universe.n)

    def degree(self, node):
        i = self.universe.index(node)
        rows, cols = pair_endpoints(self.universe.n, self.pairs)
        return int(np.count_nonzero(rows == i) + np.count_nonzero(cols == i))

    def indicator(self):
        """Level (or 0/1) of every pair as a dense vector."""
        out = np.zeros(self.universe.n_pairs, dtype=np.int64)
        out[self.pairs] = 1 if self.levels is None else self.levels
        return out

    def adjacency(self):
        n = self.universe.n
        rows, cols = pair_endpoints(n, self.pairs)
        A = np.zeros((n, n), dtype=np.int64)
        vals = 1 if self.levels is None else self.levels
        A[rows, cols] = vals
        A[cols, rows] = vals
        return A


# -- error rates -------------------------------------------------------------


@dataclass(frozen=True)
class DerivedRates:
    """False discovery rate, precision and recall.

    Scalars for the iid model; arrays (per node or per mode) otherwise, with
    ``mean_*`` holding unweighted averages. For the per-node model the
    ``reporting_*`` averages are restricted to nodes that made at least one
    report, when that information was supplied.
    """

    false_discovery_rate: object
    precision: object
    recall: object
    mean_false_discovery_rate: float
    mean_precision: float
    mean_recall: float
    reporting_false_discovery_rate: float | None = None
    reporting_precision: float | None = None

    def to_dict(self):
        def plain(x):
            return x.tolist() if isinstance(x, np.ndarray) else x

        return {key: plain(val) for key, val in self.__dict__.items()}


def _fdr(alpha, beta, rho):
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    false_part = (1.0 - rho) * beta
    den = rho * alpha + false_part
    if np.any(den <= 0):
        raise DegeneratePosteriorError("false discovery rate (rho*alpha + (1-rho)*beta = 0)")
    return false_part / den


def derived_rates(params, reporting=None) -> DerivedRates:
    """False discovery rate ``(1-rho) beta / (rho alpha + (1-rho) beta)`` and friends.

    ``reporting`` is an optional boolean mask over nodes for the per-node
    model, selecting the nodes that count as respondents.
    """
    if params.kind == "multilevel":
        raise ValidationError("error rates are defined for binary-edge models only")
    fdr = _fdr(params.alpha, params.beta, params.rho)
    precision = 1.0 - fdr
    recall = np.asarray(params.alpha, dtype=float)
    if fdr.ndim == 0:
        f, p, r = float(fdr), float(precision), float(recall)
        return DerivedRates(f, p, r, f, p, r)
    rep_f = rep_p = None
    if reporting is not None:
        mask = np.asarray(reporting, dtype=bool)
        if mask.any():
            rep_f = float(fdr[mask].mean())
            rep_p = 1.0 - rep_f
    mean_f = float(fdr.mean())
    return DerivedRates(fdr, precision, recall, mean_f, 1.0 - mean_f, float(recall.mean()), rep_f, rep_p)


def expected_degree(Q: PosteriorEdges, node) -> float:
    """Expected degree of ``node``: the sum of its edge probabilities."""
    if Q.kind != "binary":
        raise ValidationError("expected_degree needs a binary posterior")
    i = Q.universe.index(node)
    n = Q.universe.n
    others = np.array([j for j in range(n) if j != i])
    q = Q.pair_values()[pair_index(np.full(len(others), i), others, n)]
    return float(np.sum(q))


# -- independent-edge sampling ----------------------------------------------


def _bernoulli_positions(rng, count, p):
    """Sorted positions in ``range(count)`` kept independently with probability ``p``.

    Jumps between kept positions are geometric, so the work is proportional
    to the number kept rather than to ``count``.
    """
    if count <= 0 or p <= 0.0:
        return np.empty(0, dtype=np.int64)
    if p >= 1.0:
        return np.arange(count, dtype=np.int64)
    chunks = []
    last = -1
    while True:
        size = int((count - last) * p * 1.1) + 16
        steps = np.cumsum(rng.geometric(p, size=size)) + last
        keep = steps[steps < count]
        chunks.append(keep)
        if len(keep) < size:
            break
        last = int(steps[-1])
    return np.concatenate(chunks).astype(np.int64)


class _ClassSampler:
    """Precomputed member lists for drawing from a class-based posterior."""

    def __init__(self, Q: PosteriorEdges):
        self.Q = Q
        self.members = []
        listed = [c.members for c in Q.classes if c.members is not None]
        listed = np.sort(np.concatenate(listed)) if listed else np.empty(0, np.int64)
        self.shifted = listed - np.arange(len(listed))
        for c in Q.classes:
            self.members.append(c.members)

    def class_members(self, c, positions):
        members = self.members[c]
        if members is not None:
            return members[positions]
        return positions + np.searchsorted(self.shifted, positions, side="right")

    def draw(self, rng):
        Q = self.Q
        pairs, levels = [], []
        for c, cls in enumerate(Q.classes):
            row = Q.values[c]
            if Q.kind == "binary":
                pos = _bernoulli_positions(rng, cls.member_count, float(row))
                pairs.append(self.class_members(c, pos))
            else:
                p_on = 1.0 - float(row[0])
                pos = _bernoulli_positions(rng, cls.member_count, p_on)
                pairs.append(self.class_members(c, pos))
                if len(pos):
                    cond = np.asarray(row[1:], dtype=float)
                    cond = cond / cond.sum()
                    levels.append(1 + rng.choice(len(cond), size=len(pos), p=cond))
                else:
                    levels.append(np.empty(0, dtype=np.int64))
        pairs = np.concatenate(pairs) if pairs else np.empty(0, np.int64)
        order = np.argsort(pairs, kind="stable")
        if Q.kind == "binary":
            return pairs[order], None
        return pairs[order], np.concatenate(levels).astype(np.int64)[order]


def _draw_per_pair(Q, rng):
    u = rng.random(Q.universe.n_pairs)
    if Q.kind == "binary":
        return np.flatnonzero(u < Q.values), None
    cum = np.cumsum(Q.values, axis=1)
    level = (u[:, None] >= cum[:, :-1]).sum(axis=1)
    present = np.flatnonzero(level > 0)
    return present, level[present]


def sample_networks(Q: PosteriorEdges, count: int, seed: int = 0) -> Iterator[NetworkSample]:
    """Yield ``count`` independent networks drawn from the posterior.

    Each pair is present independently with its marginal probability; for a
    multilevel posterior each pair takes level ``w`` with probability
    ``Q[w]``. The stream is fully determined by ``seed``.
    """
    if count < 1:
        raise ValidationError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    sampler = _ClassSampler(Q) if Q.by_class else None
    for k in range(count):
        if sampler is not None:
            pairs, levels = sampler.draw(rng)
        else:
            pairs, levels = _draw_per_pair(Q, rng)
        yield NetworkSample(Q.universe, pairs, levels, seed, k)


# -- metric statistics -------------------------------------------------------


@dataclass(frozen=True)
class MetricStats:
    mean: float
    variance: float | None
    count: int
    distribution: dict | None = None

    def to_dict(self):
        out = {"mean": self.mean, "variance": self.variance, "count": self.count}
        if self.distribution is not None:
            out["distribution"] = {repr(k): v for k, v in self.distribution.items()}
        return out


def metric_stats(samples: Iterable[NetworkSample], metric: Callable[[NetworkSample], float],
                 distribution=False) -> MetricStats:
    """Streaming mean, unbiased variance and optional exact-value histogram.

    The variance is ``None`` when only one sample was seen.
    """
    count = 0
    mean = 0.0
    m2 = 0.0
    tally = {} if distribution else None
    for sample in samples:
        x = float(metric(sample))
        count += 1
        d = x - mean
        mean += d / count
        m2 += d * (x - mean)
        if tally is not None:
            tally[x] = tally.get(x, 0) + 1
    if count == 0:
        raise NetReconError("metric_stats needs at least one sample")
    variance = max(m2 / (count - 1), 0.0) if count > 1 else None
    dist = None
    if tally is not None:
        dist = {k: v / count for k, v in sorted(tally.items())}
    return MetricStats(mean, variance, count, dist)


def edge_count(sample: NetworkSample) -> float:
    return float(sample.n_edges)


# -- Metropolis-Hastings -----------------------------------------------------


def factorized_logweight(Q: PosteriorEdges):
    """Log-probability of a network under the independent-edge posterior.

    The returned callable also carries a ``delta(state, k)`` attribute giving
    the change in log weight from toggling pair ``k`` of a 0/1 state vector,
    which :func:`mh_sample` uses to avoid full re-evaluation.
    """
    if Q.kind != "binary":
        raise ValidationError("factorized_logweight needs a binary posterior")
    q = Q.pair_values()
    with np.errstate(divide="ignore"):
        log_on = np.log(q)
        log_off = np.log1p(-q)

    def logweight(sample):
        state = sample.indicator().astype(bool)
        return float(np.sum(np.where(state, log_on, log_off)))

    def delta(state, k):
        return (log_off[k] - log_on[k]) if state[k] else (log_on[k] - log_off[k])

    logweight.delta = delta
    return logweight


def mh_sample(logweight, universe: NodeUniverse, steps: int, seed: int = 0, initial=None,
              burn_in: int | None = None, thin: int | None = None) -> Iterator[NetworkSample]:
    """Single-edge-flip Metropolis-Hastings over undirected networks.

    Each step toggles one uniformly chosen pair and accepts with probability
    ``min(1, w(A') / w(A))``, evaluated in log space. After ``burn_in``
    steps (default 10% of ``steps``) every ``thin``-th state (default: the
    number of pairs) is yielded.
    """
    P = universe.n_pairs
    burn_in = steps // 10 if burn_in is None else burn_in
    thin = P if thin is None else max(int(thin), 1)
    rng = np.random.default_rng(seed)
    state = np.zeros(P, dtype=bool)
    if initial is not None:
        state[np.asarray(initial.pairs if isinstance(initial, NetworkSample) else initial, dtype=np.int64)] = True

    def snapshot(k):
        return NetworkSample(universe, np.flatnonzero(state), None, seed, k)

    delta = getattr(logweight, "delta", None)
    current = logweight(snapshot(0))
    if not math.isfinite(current):
        raise NumericalError("log weight is not finite at the initial state", iteration=0)

    picks = rng.integers(0, P, size=steps)
    uniforms = rng.random(steps)
    emitted = 0
    for step in range(steps):
        k = picks[step]
        if delta is not None:
            diff = delta(state, k)
            state[k] = not state[k]
            proposed = current + diff
        else:
            state[k] = not state[k]
            proposed = logweight(snapshot(step))
        if math.isnan(proposed) or proposed == math.inf:
            raise NumericalError("log weight is not finite at a visited state", iteration=step + 1)
        diff = proposed - current
        if diff >= 0.0 or uniforms[step] < math.exp(diff):
            current = proposed
        else:
            state[k] = not state[k]
        if step + 1 > burn_in and (step + 1 - burn_in) % thin == 0:
            yield snapshot(emitted)
            emitted += 1


# -- text output -------------------------------------------------------------


def format_samples(samples: Iterable[NetworkSample], seed: int, count: int, stats=None) -> str:
    """Samples as ``sample_index u v [level]`` lines behind a manifest line."""
    out = [f"# manifest seed={seed} count={count}"]
    for s in samples:
        if s.levels is None:
            out.extend(f"{s.index} {u} {v}" for u, v in s.edges())
        else:
            out.extend(f"{s.index} {u} {v} {lvl}" for (u, v), lvl in zip(s.edges(), s.levels.tolist()))
    for name, st in (stats or {}).items():
        var = "nan" if st.variance is None else repr(st.variance)
        out.append(f"# metric {name} mean={st.mean!r} variance={var} count={st.count}")
    return "\n".join(out) + "\n"

