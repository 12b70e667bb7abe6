"""Observation ingestion: node universes, pair-indexed counts and pair classes.

Three text formats are understood:

* snapshot logs, one ``snapshot u v`` line per sighting of a pair;
* counts tables, ``[mode] u v E N`` with ``#default_N`` directives;
* directed report tables, ``reporter target E N``.

Pairs are addressed internally by their linear index in the row-major
upper triangle, the same order as ``numpy.triu_indices(n, 1)``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .exceptions import ConflictError, ParseError, SelfLoopError, ValidationError

__all__ = [
    "NodeUniverse",
    "class_index",
    "counts_from_arrays",
    "ObservationCounts",
    "PairClass",
    "format_counts",
    "pair_classes",
    "pair_endpoints",
    "pair_index",
    "parse_counts",
    "parse_reports",
    "parse_snapshot_log",
    "read_node_list",
]


@lru_cache(maxsize=32)
def _triu(n):
    rows, cols = np.triu_indices(n, 1)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def pair_endpoints(n, index=None):
    """Endpoints ``(i, j)`` with ``i < j`` of linear pair indices."""
    rows, cols = _triu(n)
    if index is None:
        return rows, cols
    return rows[index], cols[index]


def pair_index(i, j, n):
    """Linear index of the unordered pair ``{i, j}`` among ``n`` nodes."""
    i = np.asarray(i)
    j = np.asarray(j)
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    out = lo * n - lo * (lo + 1) // 2 + (hi - lo - 1)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NodeUniverse:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(lab) for lab in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValidationError(f"a network needs at least 2 nodes, got {len(labels)}")
        lookup = {lab: k for k, lab in enumerate(labels)}
        if len(lookup) != len(labels):
            raise ValidationError("node labels must be unique")
        object.__setattr__(self, "_lookup", lookup)

    @property
    def n(self):
        return len(self.labels)

    @property
    def n_pairs(self):
        return self.n * (self.n - 1) // 2

    def index(self, label):
        try:
            return self._lookup[str(label)]
        except KeyError:
            raise ValidationError(f"unknown node {label!r}") from None

    def __contains__(self, label):
        return str(label) in self._lookup

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class PairClass:
    """Node pairs sharing one observation signature.

    ``members`` holds the linear pair indices of the class, or ``None``
    for the class of never-observed pairs, whose members are every pair
    not listed in another class.
    """

    signature: tuple
    member_count: int
    representative: tuple[int, int]
    members: np.ndarray | None = field(default=None, repr=False, compare=False)


@dataclass(frozen=True, eq=False)
class ObservationCounts:
    """Immutable pair-indexed observation counts.

    ``entries`` maps ``(i, j, mode)`` to ``(E, N)``. Undirected data keys
    each pair once with ``i < j``; directed data keeps ``(i, j)`` and
    ``(j, i)`` apart, ``E[i, j]`` being what ``i`` reported about ``j``.
    Pairs without an entry are read as ``(0, default_N[mode])``.
    """

    universe: NodeUniverse
    entries: Mapping[tuple[int, int, int], tuple[int, int]]
    default_N: tuple[int, ...]
    directed: bool = False

    def __post_init__(self):
        default_N = tuple(int(v) for v in np.atleast_1d(self.default_N))
        if not default_N:
            raise ValidationError("at least one observation mode is required")
        if any(v < 0 for v in default_N):
            raise ValidationError("default_N must be nonnegative")
        n, modes = self.universe.n, len(default_N)
        clean = {}
        for (i, j, m), (e, t) in self.entries.items():
            i, j, m, e, t = int(i), int(j), int(m), int(e), int(t)
            if i == j:
                raise SelfLoopError(f"self-loop on node {self.universe.labels[i]!r}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"node index out of range in pair ({i}, {j})")
            if not 0 <= m < modes:
                raise ValidationError(f"mode {m} out of range for {modes} mode(s)")
            if not 0 <= e <= t:
                raise ValidationError(f"need 0 <= E <= N, got E={e}, N={t}")
            if not self.directed and i > j:
                i, j = j, i
            if (i, j, m) in clean:
                raise ConflictError(f"duplicate entry for pair ({i}, {j}) mode {m}")
            clean[(i, j, m)] = (e, t)
        object.__setattr__(self, "default_N", default_N)
        object.__setattr__(self, "entries", MappingProxyType(dict(sorted(clean.items()))))

    @property
    def modes(self):
        return len(self.default_N)

    @property
    def n(self):
        return self.universe.n

    def effective(self, i, j, mode=0):
        """``(E, N)`` for pair ``(i, j)`` in ``mode``, defaults included."""
        if not self.directed and i > j:
            i, j = j, i
        return self.entries.get((i, j, mode), (0, self.default_N[mode]))

    def dense(self, mode=0):
        """Square ``(E, N)`` integer matrices for one mode (zero diagonal)."""
        n = self.n
        E = np.zeros((n, n), dtype=np.int64)
        N = np.full((n, n), self.default_N[mode], dtype=np.int64)
        np.fill_diagonal(N, 0)
        for (i, j, m), (e, t) in self.entries.items():
            if m != mode:
                continue
            E[i, j], N[i, j] = e, t
            if not self.directed:
                E[j, i], N[j, i] = e, t
        return E, N

    @cached_property
    def dense_float(self):
        """Read-only float ``(E, N)`` matrices per mode, cached."""
        out = []
        for m in range(self.modes):
            E, N = (a.astype(float) for a in self.dense(m))
            E.setflags(write=False)
            N.setflags(write=False)
            out.append((E, N))
        return tuple(out)

    def pair_counts(self):
        """Per-pair ``(E, N)`` arrays of shape ``(n_pairs, modes)``."""
        if self.directed:
            raise ValidationError("pair_counts is defined for undirected data only")
        n = self.n
        P = self.universe.n_pairs
        E = np.zeros((P, self.modes), dtype=np.int64)
        N = np.tile(np.asarray(self.default_N, dtype=np.int64), (P, 1))
        for (i, j, m), (e, t) in self.entries.items():
            k = pair_index(i, j, n)
            E[k, m], N[k, m] = e, t
        return E, N

    def is_equal_trials(self):
        """True when every pair has the same trial count in every mode."""
        return all(t == self.default_N[m] for (_, _, m), (_, t) in self.entries.items())

    @cached_property
    def classes(self):
        return tuple(pair_classes(self))

    @cached_property
    def class_table(self):
        """Class signatures as arrays ``(E, N, weight)``, undirected only.

        ``E`` and ``N`` have shape ``(n_classes, modes)``; ``weight`` is the
        float member count of each class.
        """
        if self.directed:
            raise ValidationError("class tables are defined for undirected data only")
        classes = self.classes
        E = np.array([[en[0] for en in c.signature] for c in classes], dtype=float)
        N = np.array([[en[1] for en in c.signature] for c in classes], dtype=float)
        w = np.array([c.member_count for c in classes], dtype=float)
        for arr in (E, N, w):
            arr.setflags(write=False)
        return E, N, w

    @cached_property
    def pair_to_class(self):
        """Class index of every linear pair index."""
        return class_index(self.classes, self.universe.n_pairs)


def class_index(classes, n_pairs):
    """Map each linear pair index to the position of its class in ``classes``."""
    out = np.full(n_pairs, -1, dtype=np.int64)
    implicit = None
    for c, cls in enumerate(classes):
        if cls.members is None:
            implicit = c
        else:
            out[cls.members] = c
    if implicit is not None:
        out[out < 0] = implicit
    if np.any(out < 0):
        raise ValidationError("pair classes do not cover every pair")
    out.setflags(write=False)
    return out


def _signature(counts, i, j):
    # i < j
    if counts.directed:
        return tuple(counts.effective(i, j, m) + counts.effective(j, i, m) for m in range(counts.modes))
    return tuple(counts.effective(i, j, m) for m in range(counts.modes))


def pair_classes(counts):
    """Partition all unordered pairs into classes of identical signature.

    Classes come back sorted by signature. Only pairs carrying at least one
    entry are visited, so the cost is linear in the number of entries.
    """
    n = counts.n
    touched = sorted({(min(i, j), max(i, j)) for (i, j, _) in counts.entries})
    if counts.directed:
        default = tuple(2 * (0, t) for t in counts.default_N)
    else:
        default = tuple((0, t) for t in counts.default_N)

    groups = defaultdict(list)
    for i, j in touched:
        sig = _signature(counts, i, j)
        if sig != default:
            groups[sig].append(pair_index(i, j, n))

    explicit = sum(len(v) for v in groups.values())
    n_default = counts.universe.n_pairs - explicit
    out = []
    for sig, members in groups.items():
        members = np.array(sorted(members), dtype=np.int64)
        members.setflags(write=False)
        i, j = pair_endpoints(n, members[0])
        out.append(PairClass(sig, len(members), (int(i), int(j)), members))
    if n_default > 0:
        listed = np.sort(np.concatenate([c.members for c in out])) if out else np.empty(0, np.int64)
        first = _kth_missing(listed, 0)
        i, j = pair_endpoints(n, first)
        out.append(PairClass(default, n_default, (int(i), int(j)), None))
    out.sort(key=lambda c: c.signature)
    return out


def _kth_missing(sorted_excluded, k):
    """k-th (0-based) nonnegative integer not in ``sorted_excluded``; vectorized over k."""
    shifted = sorted_excluded - np.arange(len(sorted_excluded))
    return k + np.searchsorted(shifted, k, side="right")


def implicit_members(counts, k):
    """Linear pair indices of the k-th members of the never-observed class."""
    listed = [c.members for c in counts.classes if c.members is not None]
    listed = np.sort(np.concatenate(listed)) if listed else np.empty(0, np.int64)
    return _kth_missing(listed, np.asarray(k))


# -- parsing -----------------------------------------------------------------


def _lines(source):
    if isinstance(source, str):
        return source.splitlines()
    return source


class _UniverseBuilder:
    def __init__(self):
        self.labels = []
        self.lookup = {}

    def add(self, label):
        k = self.lookup.get(label)
        if k is None:
            k = self.lookup[label] = len(self.labels)
            self.labels.append(label)
        return k

    def build(self, extra=None):
        for label in extra or ():
            self.add(str(label))
        return NodeUniverse(tuple(self.labels))


def read_node_list(source):
    """Node labels from a one-label-per-line file (``#`` comments allowed)."""
    out = []
    for raw in _lines(source):
        line = raw.split("#", 1)[0].strip()
        if line:
            out.extend(line.split())
    return out


def parse_snapshot_log(source, nodes=None):
    """Aggregate a ``snapshot u v`` log into undirected counts.

    Every pair gets ``N`` equal to the number of distinct snapshots, and
    ``E`` the number of snapshots in which it appears at least once.
    """
    builder = _UniverseBuilder()
    if nodes is not None:
        nodes = list(nodes)
    seen = set()
    snapshots = set()
    for lineno, raw in enumerate(_lines(source), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ParseError(f"expected 'snapshot u v', got {len(fields)} field(s)", lineno)
        snap, u, v = fields
        if u == v:
            raise SelfLoopError(f"self-loop on node {u!r}", lineno)
        i, j = builder.add(u), builder.add(v)
        snapshots.add(snap)
        seen.add((snap, min(i, j), max(i, j)))

    universe = builder.build(nodes)
    tally = defaultdict(int)
    for _, i, j in seen:
        tally[(i, j)] += 1
    S = len(snapshots)
    entries = {(i, j, 0): (e, S) for (i, j), e in tally.items()}
    return ObservationCounts(universe, entries, (S,), directed=False)


def parse_counts(source, directed=False, modes=1, default_N=None, nodes=None):
    """Parse a ``[mode] u v E N`` counts table.

    The mode column is present only when ``modes > 1`` and holds a 0-based
    mode index. Directives: ``#default_N VALUE`` (all modes),
    ``#default_N MODE VALUE`` and ``#nodes LABEL...``. An explicit
    ``default_N`` argument overrides the directives.
    """
    builder = _UniverseBuilder()
    directive_N = [None] * modes
    entries = {}
    width = 5 if modes > 1 else 4
    for lineno, raw in enumerate(_lines(source), start=1):
        stripped = raw.strip()
        if stripped.startswith("#"):
            tokens = stripped[1:].split()
            if tokens and tokens[0] == "default_N":
                _apply_default_directive(tokens[1:], directive_N, lineno)
            elif tokens and tokens[0] == "nodes":
                for label in tokens[1:]:
                    builder.add(label)
            continue
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != width:
            raise ParseError(f"expected {width} fields, got {len(fields)}", lineno)
        if modes > 1:
            mode = _parse_int(fields[0], "mode", lineno)
            if not 0 <= mode < modes:
                raise ParseError(f"mode {mode} out of range 0..{modes - 1}", lineno)
            fields = fields[1:]
        else:
            mode = 0
        u, v = fields[0], fields[1]
        e = _parse_int(fields[2], "E", lineno)
        t = _parse_int(fields[3], "N", lineno)
        if u == v:
            raise SelfLoopError(f"self-loop on node {u!r}", lineno)
        if e < 0 or t < 0 or e > t:
            raise ValidationError(f"line {lineno}: need 0 <= E <= N, got E={e}, N={t}")
        i, j = builder.add(u), builder.add(v)
        if not directed and i > j:
            i, j = j, i
        key = (i, j, mode)
        if key in entries:
            raise ConflictError(f"line {lineno}: duplicate entry for {u} {v} (mode {mode})")
        entries[key] = (e, t)

    if default_N is None:
        if any(v is None for v in directive_N):
            raise ValidationError("default_N is required (use a #default_N directive or pass it explicitly)")
        default_N = tuple(directive_N)
    else:
        default_N = tuple(int(v) for v in np.broadcast_to(np.atleast_1d(default_N), (modes,)))
    universe = builder.build(nodes)
    return ObservationCounts(universe, entries, default_N, directed=directed)


def parse_reports(source, default_N=None, nodes=None):
    """Parse a directed ``reporter target E N`` table."""
    return parse_counts(source, directed=True, modes=1, default_N=default_N, nodes=nodes)


def _parse_int(token, what, lineno):
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{what} must be an integer, got {token!r}", lineno) from None


def _apply_default_directive(args, directive_N, lineno):
    if len(args) == 1:
        value = _parse_int(args[0], "default_N", lineno)
        directive_N[:] = [value] * len(directive_N)
    elif len(args) == 2:
        mode = _parse_int(args[0], "mode", lineno)
        if not 0 <= mode < len(directive_N):
            raise ParseError(f"default_N mode {mode} out of range", lineno)
        directive_N[mode] = _parse_int(args[1], "default_N", lineno)
    else:
        raise ParseError("malformed #default_N directive", lineno)


def format_counts(counts: ObservationCounts, nodes_per_line: int = 16) -> str:
    """Serialize counts in the table format understood by :func:`parse_counts`."""
    labels = counts.universe.labels
    out = []
    for start in range(0, len(labels), nodes_per_line):
        out.append("#nodes " + " ".join(labels[start:start + nodes_per_line]))
    if counts.modes == 1:
        out.append(f"#default_N {counts.default_N[0]}")
    else:
        for m, t in enumerate(counts.default_N):
            out.append(f"#default_N {m} {t}")
    for (i, j, m), (e, t) in counts.entries.items():
        row = f"{labels[i]} {labels[j]} {e} {t}"
        out.append(f"{m} {row}" if counts.modes > 1 else row)
    return "\n".join(out) + "\n"


def counts_from_arrays(E, N, labels: Sequence[str] | None = None, directed=False):
    """Build counts from square ``E``/``N`` arrays, optionally with a trailing mode axis.

    Every off-diagonal pair becomes an explicit entry; ``default_N`` is set
    to the most common trial count per mode so that pair classes stay small.
    """
    E = np.asarray(E)
    N = np.asarray(N)
    if E.ndim == 2:
        E, N = E[..., None], N[..., None]
    if E.shape != N.shape or E.ndim != 3 or E.shape[0] != E.shape[1]:
        raise ValidationError("E and N must be matching square arrays (n, n[, modes])")
    n, _, modes = E.shape
    if labels is None:
        labels = [str(k) for k in range(n)]
    universe = NodeUniverse(tuple(labels))
    if not directed:
        if not (np.array_equal(E, E.transpose(1, 0, 2)) and np.array_equal(N, N.transpose(1, 0, 2))):
            raise ValidationError("undirected E and N must be symmetric")
    default_N = []
    for m in range(modes):
        off = N[..., m][~np.eye(n, dtype=bool)]
        vals, freq = np.unique(off, return_counts=True)
        default_N.append(int(vals[np.argmax(freq)]))
    entries = {}
    rows, cols = np.nonzero(~np.eye(n, dtype=bool))
    for i, j in zip(rows.tolist(), cols.tolist()):
        if not directed and i > j:
            continue
        for m in range(modes):
            e, t = int(E[i, j, m]), int(N[i, j, m])
            if e != 0 or t != default_N[m]:
                entries[(i, j, m)] = (e, t)
    return ObservationCounts(universe, entries, tuple(default_N), directed=directed)

