"""Synthetic data: GGM sampling and the star/cycle two-cluster design.

The simulation design pairs a star-precision cluster with a
cycle-precision cluster. The 10-cycle is deliberately non-decomposable,
so the second cluster's generating graph lies outside the searchable
family and the sampler can only approximate it.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .graph import DecomposableGraph
from .gwishart import NumericError, _chol_or_raise


class GgmSpec:
    """Mean, precision, and (optionally) the graph carrying K's zero pattern.

    graph is None when the zero pattern is not decomposable (the cycle
    cluster below); K must be positive definite either way.
    """

    __slots__ = ("mu", "K", "graph")

    def __init__(self, mu, K, graph=None):
        mu = np.asarray(mu, dtype=float)
        K = np.asarray(K, dtype=float)
        p = mu.shape[0]
        if K.shape != (p, p):
            raise ValueError("precision shape does not match mean length")
        if not np.allclose(K, K.T, rtol=0.0, atol=1e-12):
            raise ValueError("precision must be symmetric")
        _chol_or_raise(K, "precision matrix")
        if graph is not None:
            if graph.p != p:
                raise ValueError("graph order does not match dimension")
            for i in range(p):
                for j in range(i + 1, p):
                    if K[i, j] != 0.0 and not graph.has_edge(i + 1, j + 1):
                        raise ValueError(
                            "K has a nonzero entry at the missing edge (%d, %d)"
                            % (i + 1, j + 1))
        self.mu = mu
        self.K = K
        self.graph = graph

    @property
    def p(self):
        return self.mu.shape[0]


def sample_ggm(spec, n, rng):
    """n i.i.d. draws from N(mu, K^{-1}) via a triangular solve on chol(K)."""
    p = spec.p
    if n == 0:
        return np.empty((0, p))
    L = _chol_or_raise(spec.K, "precision matrix")
    z = rng.standard_normal((n, p))
    # x = mu + L^{-T} z so that cov(x) = L^{-T} L^{-1} = K^{-1}
    return spec.mu + solve_triangular(L, z.T, lower=True, trans="T").T


def star_precision(p=10, coupling=0.3):
    """Diagonal 1, first row/column 0.3: the hub-and-spokes cluster."""
    K = np.eye(p)
    K[0, 1:] = coupling
    K[1:, 0] = coupling
    return K


def cycle_precision(p=10, coupling=0.3):
    """Diagonal 1 with 0.3 on the cycle edges, including (1, p)."""
    K = np.eye(p)
    for j in range(1, p):
        K[j - 1, j] = K[j, j - 1] = coupling
    K[0, p - 1] = K[p - 1, 0] = coupling
    return K


def star_graph(p=10):
    return DecomposableGraph(p, [(1, j) for j in range(2, p + 1)])


def cycle_edges(p=10):
    """Edge set of the p-cycle (not decomposable for p >= 4)."""
    edges = {(j, j + 1) for j in range(1, p)}
    edges.add((1, p))
    return edges


def paper_simulation_dataset(rng, n_per_cluster=100):
    """Two-cluster design: star N(0.5, K1^{-1}) rows first, then cycle
    N(-0.5, K2^{-1}) rows.

    Returns (data, labels, truth) where truth maps each cluster to its
    mean, precision, and true edge set; the cycle's edge set has no
    decomposable representative.
    """
    p = 10
    k1 = star_precision(p)
    k2 = cycle_precision(p)
    spec1 = GgmSpec(np.full(p, 0.5), k1, graph=star_graph(p))
    spec2 = GgmSpec(np.full(p, -0.5), k2, graph=None)
    x1 = sample_ggm(spec1, n_per_cluster, rng)
    x2 = sample_ggm(spec2, n_per_cluster, rng)
    data = np.vstack([x1, x2])
    labels = np.repeat([0, 1], n_per_cluster)
    truth = {
        "star": {"mu": spec1.mu, "K": k1, "edges": set(spec1.graph.edges)},
        "cycle": {"mu": spec2.mu, "K": k2, "edges": cycle_edges(p)},
    }
    return data, labels, truth
