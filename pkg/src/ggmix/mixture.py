"""Collapsed Polya-urn Gibbs sampler for DP and Pitman-Yor mixtures of GGMs.

Mixing weights are integrated out; the state is the assignment vector,
one (graph, sufficient statistics) pair per non-empty cluster, and the
concentration/discount parameters. Graphs move by a
Metropolis-Hastings step over single-edge-flip neighborhoods.
"""

import itertools
import math

import numpy as np

from .graph import DecomposableGraph, _flip_keeps_chordal, _flipped, \
    uniform_neighbor
from .gwishart import ClusterStats, MarginalCalculator, NumericError


class GraphPrior:
    """Baseline measure on decomposable graphs: uniform or per-edge Bernoulli."""

    __slots__ = ("kind", "q")

    def __init__(self, kind="uniform", q=0.5):
        if kind not in ("uniform", "bernoulli"):
            raise ValueError("graph prior kind must be uniform or bernoulli")
        if kind == "bernoulli" and not 0.0 < q < 1.0:
            raise ValueError("edge probability q must lie in (0, 1)")
        self.kind = kind
        self.q = float(q)

    def log_pmf_unnorm(self, g):
        if self.kind == "uniform":
            return 0.0
        return g.n_edges * math.log(self.q / (1.0 - self.q))

    def _walk(self, g, rng, steps):
        """Metropolis steps targeting this prior: flip a uniformly chosen
        vertex pair when the flip keeps the graph chordal. The proposal
        is symmetric, so the uniform prior accepts every legal flip."""
        pairs = _vertex_pairs(g.p)
        idx = rng.integers(len(pairs), size=steps)
        us = rng.random(steps) if self.kind == "bernoulli" else None
        lo = math.log(self.q / (1.0 - self.q)) if self.kind == "bernoulli" else 0.0
        for t in range(steps):
            i, j = pairs[idx[t]]
            if not _flip_keeps_chordal(g, i, j):
                continue
            if us is not None:
                log_acc = -lo if g.has_edge(i, j) else lo
                if log_acc < 0.0 and math.log(us[t]) >= log_acc:
                    continue
            g = _flipped(g, i, j)
        return g

    def sample(self, p, rng, steps=None):
        """Approximate draw: a 3p-step Metropolis walk from the empty graph."""
        g = DecomposableGraph.empty(p)
        if p == 1:
            return g
        return self._walk(g, rng, 3 * p if steps is None else steps)


_pairs_cache = {}


def _vertex_pairs(p):
    pairs = _pairs_cache.get(p)
    if pairs is None:
        pairs = tuple(itertools.combinations(range(1, p + 1), 2))
        _pairs_cache[p] = pairs
    return pairs


class PriorGraphWalker:
    """Persistent prior-graph chain amortizing the baseline-measure draws.

    The urn needs a fresh candidate graph at every Gibbs step; restarting
    a full walk each time dominates the sweep cost, so one long chain is
    advanced a few flips per draw instead. Its marginal law after warmup
    is the graph prior.
    """

    __slots__ = ("gp", "p", "g")

    def __init__(self, graph_prior, p, rng, warmup=None):
        self.gp = graph_prior
        self.p = p
        if getattr(graph_prior, "kind", None) == "fixed" or p == 1:
            self.g = graph_prior.sample(p, rng)
        else:
            self.g = graph_prior._walk(DecomposableGraph.empty(p), rng,
                                       3 * p if warmup is None else warmup)

    def draw(self, rng, steps=3):
        if self.gp.kind == "fixed" or self.p == 1:
            return self.g
        self.g = self.gp._walk(self.g, rng, steps)
        return self.g


class FixedGraphPrior:
    """Degenerate baseline measure: every cluster gets the complete graph.

    Used by the restricted (full-covariance) model variants; drawing
    from it consumes no randomness.
    """

    kind = "fixed"

    def log_pmf_unnorm(self, g):
        return 0.0

    def sample(self, p, rng, steps=None):
        return DecomposableGraph.complete(p)


class Cluster:
    """One mixture component: its graph, running stats, member indices,
    and a cached log marginal likelihood."""

    __slots__ = ("graph", "stats", "members", "_lm")

    def __init__(self, graph, stats, members=None):
        self.graph = graph
        self.stats = stats
        self.members = set() if members is None else set(members)
        self._lm = None

    def invalidate(self):
        self._lm = None

    def log_marginal(self, calc, data=None):
        if self._lm is None:
            try:
                self._lm = calc.log_marginal(self.stats, self.graph)
            except NumericError:
                if data is None:
                    raise
                self.refresh_stats(data)
                self._lm = calc.log_marginal(self.stats, self.graph)
        return self._lm

    def refresh_stats(self, data):
        """Recompute stats from raw member rows (guards float drift)."""
        idx = sorted(self.members)
        self.stats = ClusterStats.from_data(data[idx])
        self._lm = None

    def set_graph(self, graph, lm=None):
        self.graph = graph
        self._lm = lm


class MixtureState:
    """Assignment vector, per-cluster graphs/stats, and urn parameters.

    Cluster labels are contiguous 0..L-1 internally (1..L in traces) and
    every cluster is non-empty.
    """

    def __init__(self, xi, clusters, alpha0, discount=0.0, iteration=0):
        self.xi = np.asarray(xi, dtype=np.intp)
        self.clusters = clusters
        self.alpha0 = float(alpha0)
        self.discount = float(discount)
        self.iteration = iteration
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.alpha0 <= -self.discount:
            raise ValueError("alpha0 must exceed -discount")

    @classmethod
    def initial(cls, data, alpha0, discount=0.0, graph=None):
        """Single-cluster start with the empty graph; the urn splits it."""
        n, p = data.shape
        if graph is None:
            graph = DecomposableGraph.empty(p)
        cl = Cluster(graph, ClusterStats.from_data(data), range(n))
        return cls(np.zeros(n, dtype=np.intp), [cl], alpha0, discount)

    @property
    def n_clusters(self):
        return len(self.clusters)

    def counts(self):
        return np.array([c.stats.n for c in self.clusters])

    def check_consistency(self, data, atol=1e-8):
        """Assert label contiguity and stats agreement with a recompute."""
        n = len(self.xi)
        assert sum(c.stats.n for c in self.clusters) == n
        for l, cl in enumerate(self.clusters):
            assert cl.stats.n >= 1, "empty cluster %d" % l
            assert cl.members == set(np.flatnonzero(self.xi == l))
            ref = ClusterStats.from_data(data[sorted(cl.members)])
            assert np.allclose(cl.stats.s, ref.s, atol=atol)
            assert np.allclose(cl.stats.Q, ref.Q, atol=atol)


def _sample_log_categorical(logw, u):
    """Inverse-CDF draw from unnormalized log weights with one uniform."""
    m = np.max(logw)
    if not np.isfinite(m):
        raise NumericError("all categorical log weights are -inf")
    w = np.exp(logw - m)
    c = np.cumsum(w)
    return int(np.searchsorted(c, u * c[-1], side="right"))


def urn_log_weights(j, state, data, prior, new_graph, calc=None):
    """Unnormalized log urn weights for observation j (already removed).

    Entry l < L: log(r_l - discount) + log predictive under cluster l;
    entry L: log(alpha0 + discount * L) + prior predictive under
    new_graph. discount = 0 recovers the DP weights.
    """
    if calc is None:
        calc = MarginalCalculator(prior)
    x = data[j]
    L = len(state.clusters)
    logw = np.empty(L + 1)
    d = state.discount
    for l, cl in enumerate(state.clusters):
        logw[l] = math.log(cl.stats.n - d) + calc.log_predictive(
            x, cl.stats, cl.graph, lm_cur=cl.log_marginal(calc, data))
    empty = ClusterStats.empty(data.shape[1])
    logw[L] = math.log(state.alpha0 + d * L) + calc.log_predictive(
        x, empty, new_graph, lm_cur=0.0)
    return logw


def _remove_obs(state, j, data):
    """Detach observation j from its cluster; delete the cluster if it
    empties (last label swapped in)."""
    l = int(state.xi[j])
    cl = state.clusters[l]
    cl.stats.remove(data[j])
    cl.members.discard(j)
    cl.invalidate()
    if cl.stats.n == 0:
        last = len(state.clusters) - 1
        if l != last:
            moved = state.clusters[last]
            state.clusters[l] = moved
            for i in moved.members:
                state.xi[i] = l
        state.clusters.pop()


def _insert_obs(state, j, l, data, new_graph):
    if l == len(state.clusters):
        x = data[j]
        st = ClusterStats(1, x.copy(), np.multiply.outer(x, x))
        state.clusters.append(Cluster(new_graph, st, {j}))
    else:
        cl = state.clusters[l]
        cl.stats.add(data[j])
        cl.members.add(j)
        cl.invalidate()
    state.xi[j] = l


def gibbs_sweep(state, data, prior, graph_prior, rng, calc=None, walker=None):
    """One full conditional pass over the assignment vector, in index order.

    New clusters receive a fresh graph drawn from the baseline measure
    (through the persistent walker when one is supplied); emptied
    clusters are deleted and labels compacted.
    """
    if calc is None:
        calc = MarginalCalculator(prior)
    n, p = data.shape
    for j in range(n):
        _remove_obs(state, j, data)
        if walker is None:
            new_graph = graph_prior.sample(p, rng)
        else:
            new_graph = walker.draw(rng)
        logw = urn_log_weights(j, state, data, prior, new_graph, calc)
        l = _sample_log_categorical(logw, rng.random())
        _insert_obs(state, j, l, data, new_graph)
    state.iteration += 1
    return state


def mh_graph_update(cluster, prior, rng, repeats=5, graph_prior=None,
                    calc=None, data=None):
    """Random-walk Metropolis over single-edge flips for one cluster graph.

    Acceptance compares marginal likelihood times graph prior, corrected
    by the neighborhood sizes of the current and candidate graphs.
    Returns (cluster, accepted_count).
    """
    if calc is None:
        calc = MarginalCalculator(prior)
    if graph_prior is None:
        graph_prior = GraphPrior("uniform")
    if cluster.graph.p == 1:
        return cluster, 0
    accepted = 0
    lm_cur = cluster.log_marginal(calc, data)
    for _ in range(repeats):
        cand, nbd_cur, nbd_cand = uniform_neighbor(cluster.graph, rng)
        try:
            lm_cand = calc.log_marginal(cluster.stats, cand)
        except NumericError:
            if data is None:
                raise
            cluster.refresh_stats(data)
            lm_cur = cluster.log_marginal(calc, data)
            lm_cand = calc.log_marginal(cluster.stats, cand)
        log_acc = (
            lm_cand - lm_cur
            + graph_prior.log_pmf_unnorm(cand)
            - graph_prior.log_pmf_unnorm(cluster.graph)
            + math.log(nbd_cur) - math.log(nbd_cand)
        )
        if log_acc >= 0.0 or math.log(rng.random()) < log_acc:
            cluster.set_graph(cand, lm_cand)
            lm_cur = lm_cand
            accepted += 1
    return cluster, accepted


def _sample_alpha0_aux(L, count, a0, b0, alpha0, rng):
    """Escobar-West auxiliary-variable update shared by DPM and iHMM."""
    eta = rng.beta(alpha0 + 1.0, count)
    c = b0 - math.log(eta)
    odds = (a0 + L - 1.0) / (count * c)
    d_eta = odds / (1.0 + odds)
    shape = a0 + L if rng.random() < d_eta else a0 + L - 1.0
    return rng.gamma(shape, 1.0 / c)


def sample_alpha0_dpm(L, n, a0, b0, alpha0, rng):
    """One auxiliary-variable Gibbs update of the DP concentration.

    eta | alpha0 ~ Beta(alpha0+1, n), then alpha0 from a two-component
    gamma mixture with odds (a0+L-1) / [n (b0 - log eta)].
    """
    if not 1 <= L <= n:
        raise ValueError("cluster count L must lie in 1..n")
    return _sample_alpha0_aux(L, n, a0, b0, alpha0, rng)


def dp_prior_cluster_count_mean(alpha0, n):
    """Prior mean cluster count E[L] = sum_i alpha0 / (alpha0 + i - 1)."""
    if alpha0 <= 0.0 or n < 1:
        raise ValueError("requires alpha0 > 0 and n >= 1")
    i = np.arange(n, dtype=float)
    return float(np.sum(alpha0 / (alpha0 + i)))


# ---------------------------------------------------------------------------
# Batch runners
# ---------------------------------------------------------------------------

def _record_mixture(state, save_params, calc, rng):
    rec = {
        "iter": state.iteration,
        "xi": [int(v) + 1 for v in state.xi],
        "graphs": [[list(e) for e in c.graph.edges] for c in state.clusters],
        "alpha0": state.alpha0,
    }
    if save_params:
        params = []
        for c in state.clusters:
            mu, K = calc.sample_posterior(c.stats, c.graph, rng)
            params.append({"mu": mu.tolist(), "K": K.tolist()})
        rec["params"] = params
    return rec


def run_dpm(data, config, initial_state=None):
    """Run the collapsed DP / Pitman-Yor mixture sampler.

    Returns a Trace of retained sweeps (burn-in discarded, thinned); the
    run is fully deterministic given config.seed. Pass initial_state to
    warm-start (the backtest path).
    """
    from .dataio import Trace, chain_rng

    data = np.ascontiguousarray(data, dtype=float)
    n, p = data.shape
    config.validate(n)
    rng = chain_rng(config.seed, config.chain)
    prior = config.make_prior(p)
    calc = MarginalCalculator(prior)
    graph_prior = config.make_graph_prior()
    repeats = 0 if config.full_graph else config.graph_mh_repeats
    if initial_state is None:
        init_graph = DecomposableGraph.complete(p) if config.full_graph else None
        state = MixtureState.initial(data, config.alpha0_init, config.discount,
                                     graph=init_graph)
    else:
        state = initial_state
    walker = PriorGraphWalker(graph_prior, p, rng)
    records = []
    accepted = proposed = 0
    for it in range(1, config.sweeps + 1):
        gibbs_sweep(state, data, prior, graph_prior, rng, calc, walker)
        if repeats:
            for cl in state.clusters:
                _, acc = mh_graph_update(
                    cl, prior, rng, repeats=repeats,
                    graph_prior=graph_prior, calc=calc, data=data)
                accepted += acc
                proposed += repeats
        if config.sample_alpha0 and state.discount == 0.0:
            state.alpha0 = sample_alpha0_dpm(
                state.n_clusters, n, config.alpha0_a, config.alpha0_b,
                state.alpha0, rng)
        if it % config.stats_refresh == 0:
            for cl in state.clusters:
                cl.refresh_stats(data)
        if it > config.burnin and (it - config.burnin) % config.thin == 0:
            records.append(_record_mixture(state, config.save_params, calc, rng))
    model = "pitman-yor" if config.discount > 0.0 else "dpm"
    meta = {
        "model": model,
        "n": n,
        "p": p,
        "config": config.to_dict(),
        "counters": {"graph_accepted": accepted, "graph_proposed": proposed},
    }
    return Trace(meta, records, final_state=state)


def run_single_ggm(data, config, initial_state=None):
    """Degenerate single-cluster run: graph moves only (the GGM-only
    comparator of the backtest)."""
    from .dataio import Trace, chain_rng

    data = np.ascontiguousarray(data, dtype=float)
    n, p = data.shape
    config.validate(n)
    rng = chain_rng(config.seed, config.chain)
    prior = config.make_prior(p)
    calc = MarginalCalculator(prior)
    graph_prior = config.make_graph_prior()
    repeats = 0 if config.full_graph else config.graph_mh_repeats
    if initial_state is None:
        init_graph = DecomposableGraph.complete(p) if config.full_graph else None
        state = MixtureState.initial(data, config.alpha0_init, graph=init_graph)
    else:
        state = initial_state
    records = []
    accepted = proposed = 0
    cl = state.clusters[0]
    for it in range(1, config.sweeps + 1):
        state.iteration += 1
        if repeats:
            _, acc = mh_graph_update(
                cl, prior, rng, repeats=repeats,
                graph_prior=graph_prior, calc=calc, data=data)
            accepted += acc
            proposed += repeats
        if it > config.burnin and (it - config.burnin) % config.thin == 0:
            records.append(_record_mixture(state, config.save_params, calc, rng))
    meta = {
        "model": "single-ggm",
        "n": n,
        "p": p,
        "config": config.to_dict(),
        "counters": {"graph_accepted": accepted, "graph_proposed": proposed},
    }
    return Trace(meta, records, final_state=state)
