"""Decomposable (chordal) graph machinery.

Undirected graphs on vertices 1..p restricted to the decomposable
(chordal) family: chordality testing via maximum cardinality search,
perfect clique/separator sequences, and the single-edge-flip
neighborhoods used by the Metropolis-Hastings graph move.
"""

import functools
import itertools


class GraphError(ValueError):
    """Raised for invalid vertex indices or non-chordal edge sets."""


def _normalize_edges(p, edges):
    """Validate and canonicalize an edge iterable to a sorted tuple of pairs."""
    out = set()
    for e in edges:
        i, j = e
        if not (1 <= i <= p and 1 <= j <= p):
            raise GraphError("edge (%s, %s) out of range for p=%d" % (i, j, p))
        if i == j:
            raise GraphError("self-loop at vertex %d" % i)
        out.add((min(i, j), max(i, j)))
    return tuple(sorted(out))


def _adjacency(p, edges):
    adj = [set() for _ in range(p + 1)]
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    return adj


def _mcs(p, adj, start=1):
    """Maximum cardinality search from `start`, lowest-index tie-break.

    Returns (order, preds) where order is the visit sequence and
    preds[k] is the set of neighbors of order[k] visited before it.
    """
    weight = [0] * (p + 1)
    weight[start] = 1  # force the start vertex to be picked first
    unvisited = set(range(1, p + 1))
    order = []
    preds = []
    for _ in range(p):
        v = max(sorted(unvisited), key=lambda u: weight[u])
        # max() keeps the first maximum, so sorting gives lowest-index ties
        unvisited.discard(v)
        visited_nbrs = adj[v] - unvisited
        order.append(v)
        preds.append(visited_nbrs)
        for u in adj[v] & unvisited:
            weight[u] += 1
    return order, preds


def _is_chordal(p, adj, start=1):
    """Zero-fill-in check: the reverse MCS order must eliminate perfectly."""
    order, preds = _mcs(p, adj, start)
    rank = {v: k for k, v in enumerate(order)}
    for pred in preds:
        if len(pred) <= 1:
            continue
        u = max(pred, key=rank.get)  # most recently visited predecessor
        if not (pred - {u}) <= adj[u]:
            return False
    return True


def is_decomposable(p, edges):
    """True iff the graph on {1..p} with the given edges is chordal."""
    if p < 1:
        raise GraphError("p must be >= 1, got %s" % (p,))
    edges = _normalize_edges(p, edges)
    return _is_chordal(p, _adjacency(p, edges))


class DecomposableGraph:
    """Immutable chordal graph on vertices 1..p.

    Canonical form is the lexicographically sorted edge tuple; equality
    and hashing are defined on (p, edges). The constructor rejects
    non-chordal edge sets.
    """

    __slots__ = ("p", "edges", "_adj", "_hash")

    def __init__(self, p, edges=(), _trusted=False):
        if p < 1:
            raise GraphError("p must be >= 1, got %s" % (p,))
        if _trusted:
            canon = edges
        else:
            canon = _normalize_edges(p, edges)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "edges", canon)
        adj = _adjacency(p, canon)
        object.__setattr__(self, "_adj", adj)
        object.__setattr__(self, "_hash", hash((p, canon)))
        if not _trusted and not _is_chordal(p, adj):
            raise GraphError("edge set is not chordal")

    def __setattr__(self, name, value):
        raise AttributeError("DecomposableGraph is immutable")

    def __eq__(self, other):
        return (
            isinstance(other, DecomposableGraph)
            and self.p == other.p
            and self.edges == other.edges
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return "DecomposableGraph(p=%d, edges=%r)" % (self.p, list(self.edges))

    @classmethod
    def empty(cls, p):
        return cls(p, (), _trusted=True)

    @classmethod
    def complete(cls, p):
        edges = tuple(itertools.combinations(range(1, p + 1), 2))
        return cls(p, edges, _trusted=True)

    def has_edge(self, i, j):
        return j in self._adj[i]

    def neighbors(self, i):
        return frozenset(self._adj[i])

    @property
    def n_edges(self):
        return len(self.edges)

    def to_text(self):
        """Edge-list serialization: `p <int>` header then one `i j` per line."""
        lines = ["p %d" % self.p]
        lines.extend("%d %d" % e for e in self.edges)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("p "):
            raise GraphError("missing 'p <int>' header line")
        try:
            p = int(lines[0].split()[1])
        except (IndexError, ValueError) as exc:
            raise GraphError("malformed header %r" % lines[0]) from exc
        edges = []
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != 2:
                raise GraphError("malformed edge line %r" % ln)
            edges.append((int(parts[0]), int(parts[1])))
        return cls(p, edges)


class CliqueSequence:
    """Perfect ordering of the maximal cliques with their separators.

    separators[k] = cliques[k+1] intersected with the union of earlier
    cliques; empty separators (disconnected components) are dropped from
    the public list. Running intersection holds by construction.
    """

    __slots__ = ("cliques", "separators")

    def __init__(self, cliques, separators):
        self.cliques = cliques
        self.separators = separators

    def __repr__(self):
        return "CliqueSequence(cliques=%r, separators=%r)" % (
            [sorted(c) for c in self.cliques],
            [sorted(s) for s in self.separators],
        )


def _perfect_sequence(g, start=1):
    """Maximal cliques in MCS discovery order with per-clique separators.

    Returns (cliques, separators) where separators[j] pairs with
    cliques[j] for j >= 1 and may be empty for disconnected graphs.
    """
    order, preds = _mcs(g.p, g._adj, start)
    candidates = [frozenset(pred | {v}) for v, pred in zip(order, preds)]
    cliques = []
    for cand in candidates:
        if any(cand <= c for c in cliques):
            continue
        cliques = [c for c in cliques if not c <= cand]
        cliques.append(cand)
    # restore discovery order: each maximal clique equals the candidate at
    # its representative vertex, and candidates are pairwise distinct
    discovery = {cand: idx for idx, cand in enumerate(candidates)}
    cliques.sort(key=discovery.get)
    seen = set()
    separators = [None]
    for k, c in enumerate(cliques):
        if k > 0:
            sep = frozenset(c & seen)
            if sep and not any(sep <= c2 for c2 in cliques[:k]):
                raise GraphError("running intersection violated (internal)")
            separators.append(sep)
        seen |= c
    if seen != set(range(1, g.p + 1)):
        raise GraphError("cliques do not cover all vertices (internal)")
    return cliques, separators[1:]


def decompose(g, start=1):
    """Clique/separator decomposition of a chordal graph.

    Deterministic for a fixed labeling: MCS starts at vertex `start`
    (default 1) and breaks ties by lowest index. Empty separators are
    dropped.
    """
    if not isinstance(g, DecomposableGraph):
        raise GraphError("decompose expects a DecomposableGraph")
    cliques, seps = _perfect_sequence(g, start)
    return CliqueSequence(cliques, [s for s in seps if s])


def _deletion_keeps_chordal(adj, i, j):
    """Removing edge (i, j) preserves chordality iff the common
    neighborhood of i and j induces a complete subgraph (equivalently,
    the edge lies in exactly one maximal clique)."""
    common = adj[i] & adj[j]
    for a in common:
        if not (common - {a}) <= adj[a]:
            return False
    return True


def _addition_keeps_chordal(adj, i, j):
    """Adding edge (i, j) preserves chordality iff N(i) & N(j) separates
    i from j: otherwise a chordless i-j path of length >= 3 survives and
    closes into a chordless cycle through the new edge."""
    sep = adj[i] & adj[j]
    seen = set(sep)
    seen.add(i)
    stack = [i]
    while stack:
        w = stack.pop()
        for nb in adj[w]:
            if nb == j:
                return False
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return True


def _flip_keeps_chordal(g, i, j):
    if j in g._adj[i]:
        return _deletion_keeps_chordal(g._adj, i, j)
    return _addition_keeps_chordal(g._adj, i, j)


def _flipped(g, i, j):
    """The graph with edge (i, j) flipped; caller guarantees chordality."""
    e = (i, j) if i < j else (j, i)
    if j in g._adj[i]:
        edges = tuple(t for t in g.edges if t != e)
    else:
        edges = tuple(sorted(g.edges + (e,)))
    return DecomposableGraph(g.p, edges, _trusted=True)


@functools.lru_cache(maxsize=8192)
def _neighborhood_cached(g):
    out = []
    for i, j in itertools.combinations(range(1, g.p + 1), 2):
        if _flip_keeps_chordal(g, i, j):
            out.append(_flipped(g, i, j))
    return tuple(out)


def neighborhood(g):
    """All chordal graphs differing from g by exactly one edge flip."""
    return list(_neighborhood_cached(g))


def neighborhood_size(g):
    return len(_neighborhood_cached(g))


def uniform_neighbor(g, rng):
    """Uniform draw from neighborhood(g).

    Returns (proposal, |nbd(g)|, |nbd(proposal)|); the two sizes enter
    the Metropolis-Hastings ratio of the graph move.
    """
    nbd = _neighborhood_cached(g)
    if not nbd:
        raise GraphError("graph has an empty neighborhood (p=1)")
    h = nbd[rng.integers(len(nbd))]
    return h, len(nbd), len(_neighborhood_cached(h))


def all_decomposable_graphs(p):
    """Enumerate every chordal graph on {1..p} (exponential; tests only)."""
    pairs = list(itertools.combinations(range(1, p + 1), 2))
    out = []
    for mask in range(1 << len(pairs)):
        edges = tuple(pairs[k] for k in range(len(pairs)) if mask >> k & 1)
        if is_decomposable(p, edges):
            out.append(DecomposableGraph(p, edges, _trusted=True))
    return out
