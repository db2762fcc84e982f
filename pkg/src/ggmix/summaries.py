"""Posterior post-processing and the portfolio backtest.

Everything here is label-invariant: co-clustering probabilities,
per-observation edge-inclusion probabilities, point partitions derived
from them, and the rolling minimum-variance backtest that refits the
samplers along an expanding window.
"""

import math

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from .dataio import Trace, standardize
from .graph import DecomposableGraph
from .gwishart import ClusterStats, MarginalCalculator, NumericError
from .ihmm import HmmState, run_ihmm
from .mixture import Cluster, MixtureState, run_dpm, run_single_ggm


def _assignment_array(trace):
    if isinstance(trace, Trace):
        return trace.assignments()
    arr = np.asarray(trace, dtype=np.intp)
    if arr.ndim != 2:
        raise ValueError("expected a (sweeps, n) assignment array")
    return arr


def coclustering(trace):
    """Posterior probability matrix P(xi_i = xi_j | data).

    Entry (i, j) is the fraction of retained sweeps assigning i and j to
    the same cluster; invariant under relabeling within each sweep.
    """
    xi = _assignment_array(trace)
    if xi.shape[0] == 0:
        raise ValueError("empty trace")
    n = xi.shape[1]
    out = np.zeros((n, n))
    for row in xi:
        out += row[:, None] == row[None, :]
    return out / xi.shape[0]


def edge_probabilities(trace, p):
    """Per-observation posterior edge-inclusion probabilities.

    For observation j and edge e: the fraction of retained sweeps whose
    graph for j's cluster contains e. Returns an (n, p, p) array of
    symmetric zero-diagonal matrices.
    """
    if len(trace.records) == 0:
        raise ValueError("empty trace")
    n = len(trace.records[0]["xi"])
    acc = np.zeros((n, p, p))
    for rec in trace.records:
        xi = np.asarray(rec["xi"], dtype=np.intp) - 1
        mats = np.zeros((len(rec["graphs"]), p, p))
        for l, edges in enumerate(rec["graphs"]):
            for i, j in edges:
                mats[l, i - 1, j - 1] = 1.0
                mats[l, j - 1, i - 1] = 1.0
        acc += mats[xi]
    return acc / len(trace.records)


def threshold_edges(edge_prob, threshold=0.8):
    """Edges whose inclusion probability exceeds the threshold (1-based)."""
    p = edge_prob.shape[0]
    return [(i + 1, j + 1) for i in range(p) for j in range(i + 1, p)
            if edge_prob[i, j] > threshold]


def partition_from_coclustering(cocl, k=2):
    """Point partition: average-linkage clustering of 1 - coclustering."""
    n = cocl.shape[0]
    if n == 1 or k == 1:
        return np.zeros(n, dtype=np.intp)
    dist = 1.0 - cocl
    np.fill_diagonal(dist, 0.0)
    dist = np.clip((dist + dist.T) / 2.0, 0.0, None)
    z = linkage(squareform(dist, checks=False), method="average")
    return fcluster(z, t=k, criterion="maxclust") - 1


def adjusted_rand_index(a, b):
    """Chance-corrected agreement between two labelings."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("labelings must have equal length")
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    cont = np.zeros((len(ua), len(ub)))
    np.add.at(cont, (ia, ib), 1.0)

    def comb2(x):
        return x * (x - 1.0) / 2.0

    sum_cells = comb2(cont).sum()
    sum_rows = comb2(cont.sum(axis=1)).sum()
    sum_cols = comb2(cont.sum(axis=0)).sum()
    total = comb2(float(len(a)))
    expected = sum_rows * sum_cols / total
    max_index = (sum_rows + sum_cols) / 2.0
    if max_index == expected:
        return 1.0
    return (sum_cells - expected) / (max_index - expected)


def edge_ranking_auc(edge_prob, true_edges):
    """AUC of the edge-probability ranking against a reference edge set."""
    p = edge_prob.shape[0]
    scores, labels = [], []
    truth = {(min(e), max(e)) for e in true_edges}
    for i in range(1, p + 1):
        for j in range(i + 1, p + 1):
            scores.append(edge_prob[i - 1, j - 1])
            labels.append((i, j) in truth)
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    pos = scores[labels]
    neg = scores[~labels]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("reference edge set is empty or complete")
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (
        pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


# ---------------------------------------------------------------------------
# Predictive moments and the portfolio
# ---------------------------------------------------------------------------

def _cluster_stats_from_record(rec, data):
    xi = np.asarray(rec["xi"], dtype=np.intp) - 1
    p = data.shape[1]
    graphs = [DecomposableGraph(p, [tuple(e) for e in edges], _trusted=True)
              for edges in rec["graphs"]]
    stats = []
    for l in range(len(graphs)):
        rows = np.flatnonzero(xi == l)
        stats.append(ClusterStats.from_data(data[rows]))
    return xi, graphs, stats


def predictive_moments(trace, data, config, rng=None):
    """One-step-ahead predictive mean and covariance from a trace.

    Per retained sweep: draw the next state from the collapsed
    transition weights (iHMM) or urn weights (mixture), sample that
    state's (mu, K) from its conditional posterior, and average mu and
    K^{-1} over sweeps. The averaged covariance is symmetrized and
    eigenvalue-floored before use.
    """
    if len(trace.records) == 0:
        raise ValueError("empty trace")
    data = np.asarray(data, dtype=float)
    n, p = data.shape
    if rng is None:
        from .dataio import chain_rng
        rng = chain_rng(config.seed, config.chain + 7919)
    model = trace.meta["model"]
    prior = config.make_prior(p)
    calc = MarginalCalculator(prior)
    graph_prior = config.make_graph_prior()
    mu_acc = np.zeros(p)
    sig_acc = np.zeros((p, p))
    for rec in trace.records:
        xi, graphs, stats = _cluster_stats_from_record(rec, data)
        L = len(graphs)
        if model == "ihmm":
            gamma = np.asarray(rec["gamma"])
            alpha = rec["alpha"]
            counts = np.zeros((L, L))
            for a, b in zip(xi[:-1], xi[1:]):
                counts[a, b] += 1.0
            last = int(xi[-1])
            w = np.append(counts[last] + alpha * gamma[:L], alpha * gamma[L])
        elif model == "single-ggm":
            w = np.array([1.0])
        else:
            d = config.discount
            r = np.array([float(s.n) for s in stats])
            w = np.append(r - d, rec["alpha0"] + d * L)
        w = w / w.sum()
        l = int(np.searchsorted(np.cumsum(w), rng.random(), side="right"))
        if l >= L:
            g_new = graph_prior.sample(p, rng)
            mu, K = calc.sample_posterior(ClusterStats.empty(p), g_new, rng)
        else:
            mu, K = calc.sample_posterior(stats[l], graphs[l], rng)
        mu_acc += mu
        sig_acc += np.linalg.inv(K)
    mu_hat = mu_acc / len(trace.records)
    sig_hat = sig_acc / len(trace.records)
    sig_hat = (sig_hat + sig_hat.T) / 2.0
    vals, vecs = np.linalg.eigh(sig_hat)
    vals = np.maximum(vals, 1e-10)
    sig_hat = (vecs * vals) @ vecs.T
    sig_hat = (sig_hat + sig_hat.T) / 2.0
    try:
        np.linalg.cholesky(sig_hat)
    except np.linalg.LinAlgError as exc:
        raise NumericError("projected covariance not positive definite") from exc
    return mu_hat, sig_hat


def min_variance_weights(mu_hat, sigma_hat, m):
    """Minimizer of w' Sigma w subject to w' mu = m (single constraint).

    Closed form m Sigma^{-1} mu / (mu' Sigma^{-1} mu); invariant under
    rescaling of Sigma.
    """
    mu_hat = np.asarray(mu_hat, dtype=float)
    sol = np.linalg.solve(sigma_hat, mu_hat)
    denom = float(mu_hat @ sol)
    if denom <= 1e-12:
        raise NumericError("degenerate target: mu' Sigma^{-1} mu ~ 0")
    w = m * sol / denom
    assert abs(float(w @ mu_hat) - m) <= 1e-10 * max(1.0, abs(m))
    return w


class PortfolioTrace:
    """Rolling backtest output: per-period weights, realized returns,
    and the cumulative sum."""

    __slots__ = ("model", "times", "weights", "returns", "cumulative")

    def __init__(self, model, times, weights, returns):
        self.model = model
        self.times = list(times)
        self.weights = np.asarray(weights, dtype=float)
        self.returns = np.asarray(returns, dtype=float)
        self.cumulative = np.cumsum(self.returns)

    def __len__(self):
        return len(self.times)

    @property
    def final_return(self):
        return float(self.cumulative[-1]) if len(self.times) else 0.0


def _warm_start_dpm(prev_state, data):
    """Carry assignments forward onto a longer, re-standardized window;
    new rows join the current last row's cluster."""
    n_prev = len(prev_state.xi)
    n = data.shape[0]
    xi = np.concatenate([prev_state.xi,
                         np.full(n - n_prev, prev_state.xi[-1], dtype=np.intp)])
    clusters = []
    for l, cl in enumerate(prev_state.clusters):
        members = set(np.flatnonzero(xi == l))
        clusters.append(Cluster(cl.graph, ClusterStats.from_data(
            data[sorted(members)]), members))
    return MixtureState(xi, clusters, prev_state.alpha0, prev_state.discount,
                        prev_state.iteration)


def _warm_start_hmm(prev_state, data):
    n_prev = len(prev_state.xi)
    n = data.shape[0]
    xi = np.concatenate([prev_state.xi,
                         np.full(n - n_prev, prev_state.xi[-1], dtype=np.intp)])
    states = []
    for l, st in enumerate(prev_state.states):
        members = set(np.flatnonzero(xi == l))
        states.append(Cluster(st.graph, ClusterStats.from_data(
            data[sorted(members)]), members))
    new = HmmState(xi, states, None, prev_state.gamma.copy(),
                   prev_state.alpha, prev_state.alpha0, prev_state.iteration)
    new.counts = new.recount()
    new.m = prev_state.m.copy()
    return new


_RUNNERS = {"dpm": run_dpm, "pitman-yor": run_dpm, "ihmm": run_ihmm,
            "single-ggm": run_single_ggm}


def backtest(data, model, config, warm_start=True, refit_config=None):
    """Expanding-window backtest of one model variant.

    For each T in the configured window: fit on rows 1..T (standardized
    per window), form the one-step predictive moments, map them back to
    the raw scale, build the target-return weights, and realize the
    next row's return. Warm starts reuse the previous window's final
    state with a shortened chain (refit_config).
    """
    data = np.asarray(data, dtype=float)
    n, p = data.shape
    if model not in _RUNNERS:
        raise ValueError("model must be one of %s" % sorted(_RUNNERS))
    if config.bt_end >= n:
        raise ValueError("backtest window end %d needs data beyond row %d"
                         % (config.bt_end, n))
    if config.bt_start < 2 or config.bt_start > config.bt_end:
        raise ValueError("need 2 <= start <= end")
    runner = _RUNNERS[model]
    times = list(range(config.bt_start, config.bt_end + 1, config.bt_stride))
    from .dataio import chain_rng
    rng_pred = chain_rng(config.seed, config.chain + 104729)
    weights, realized = [], []
    prev_state = None
    run_cfg = config
    for t_idx, T in enumerate(times):
        window = standardize(data[:T])
        init = None
        if warm_start and prev_state is not None:
            if model == "ihmm":
                init = _warm_start_hmm(prev_state, window.data)
            else:
                init = _warm_start_dpm(prev_state, window.data)
            if refit_config is not None:
                run_cfg = refit_config
        trace = runner(window.data, run_cfg, initial_state=init)
        prev_state = trace.final_state
        mu_s, sig_s = predictive_moments(trace, window.data, run_cfg, rng_pred)
        mu_raw, sig_raw = window.back_transform_moments(mu_s, sig_s)
        w = min_variance_weights(mu_raw, sig_raw, config.target_return)
        weights.append(w)
        realized.append(float(w @ data[T]))
    return PortfolioTrace(model, times, weights, realized)


def backtest_comparison(data, config, refit_config=None):
    """Three-way comparison: graph-search iHMM, full-graph iHMM, and the
    single-regime graph-search GGM."""
    out = {}
    out["ihmm"] = backtest(data, "ihmm", config, refit_config=refit_config)
    out["ihmm-full"] = backtest(data, "ihmm",
                                config.replace(full_graph=True),
                                refit_config=None if refit_config is None
                                else refit_config.replace(full_graph=True))
    out["single-ggm"] = backtest(data, "single-ggm", config,
                                 refit_config=refit_config)
    return out
