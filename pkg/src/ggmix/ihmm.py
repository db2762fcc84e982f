"""Collapsed Gibbs sampler for the infinite HMM with GGM emissions.

Transition rows are integrated out of the hierarchical DP; the sampler
works on the trajectory, per-state graphs/statistics, the base weights
gamma (instantiated up to a remainder stick), and the concentration
parameters, which are refreshed through table-count auxiliary variables
built from Stirling numbers of the first kind.
"""

import math

import numpy as np

from .graph import DecomposableGraph
from .gwishart import ClusterStats, MarginalCalculator
from .mixture import Cluster, PriorGraphWalker, _sample_log_categorical, \
    _sample_alpha0_aux, mh_graph_update


class LogStirling1Table:
    """Unsigned Stirling numbers of the first kind, log space.

    Row n holds log S(n, m) for m = 1..n, built by the recurrence
    S(n, m) = S(n-1, m-1) + (n-1) S(n-1, m); raw values overflow around
    n = 170, the log recurrence is stable for the trajectory lengths
    used here.
    """

    def __init__(self, n_max):
        rows = [np.zeros(1)]  # S(1,1) = 1
        for n in range(2, n_max + 1):
            prev = rows[-1]
            row = np.empty(n)
            row[0] = math.log(n - 1.0) + prev[0]
            if n > 2:
                row[1:-1] = np.logaddexp(prev[:-1], math.log(n - 1.0) + prev[1:])
            row[-1] = prev[-1] if n > 2 else prev[0]
            rows.append(row)
        self._rows = rows
        self.n_max = n_max

    def row(self, n):
        """log S(n, m) for m = 1..n."""
        if not 1 <= n <= self.n_max:
            raise ValueError("row %d outside table range 1..%d" % (n, self.n_max))
        return self._rows[n - 1]


class HmmState:
    """Trajectory, per-state emission components, transition counts,
    instantiated base weights, and concentration parameters.

    gamma has one entry per state plus a final remainder-mass entry; m
    is the table-count matrix from the most recent auxiliary update.
    """

    def __init__(self, xi, states, counts, gamma, alpha, alpha0, iteration=0):
        self.xi = np.asarray(xi, dtype=np.intp)
        self.states = states
        self.counts = counts
        self.gamma = gamma
        self.alpha = float(alpha)
        self.alpha0 = float(alpha0)
        self.m = np.zeros_like(counts, dtype=np.intp)
        self.iteration = iteration

    @classmethod
    def initial(cls, data, alpha, alpha0, graph=None):
        """Single-state start; gamma at its prior mean."""
        n, p = data.shape
        if graph is None:
            graph = DecomposableGraph.empty(p)
        st = Cluster(graph, ClusterStats.from_data(data), range(n))
        counts = np.array([[float(n - 1)]])
        gamma = np.array([1.0 / (1.0 + alpha0), alpha0 / (1.0 + alpha0)])
        return cls(np.zeros(n, dtype=np.intp), [st], counts, gamma, alpha, alpha0)

    @property
    def n_states(self):
        return len(self.states)

    def recount(self):
        """Transition counts recomputed from the trajectory (oracle)."""
        L = self.n_states
        c = np.zeros((L, L))
        for a, b in zip(self.xi[:-1], self.xi[1:]):
            c[a, b] += 1.0
        return c

    def check_consistency(self, data, atol=1e-8):
        assert np.array_equal(self.counts, self.recount())
        assert abs(float(np.sum(self.gamma)) - 1.0) < 1e-12
        assert np.all(self.gamma > 0.0)
        for l, st in enumerate(self.states):
            assert st.stats.n >= 1
            assert st.members == set(np.flatnonzero(self.xi == l))
            ref = ClusterStats.from_data(data[sorted(st.members)])
            assert np.allclose(st.stats.s, ref.s, atol=atol)
            assert np.allclose(st.stats.Q, ref.Q, atol=atol)


def state_log_weights(j, state, data, prior, new_graph, calc=None):
    """Unnormalized log full-conditional weights for the state at time j.

    Requires time j detached: its observation out of the emission stats
    and its two adjacent transitions out of the counts. Existing states
    combine the incoming-transition factor, the outgoing factor with the
    self-transition corrections, and the emission predictive; entry L is
    the new-state option. At the boundaries the incoming factor falls
    back to the base weights (j = 0) and the outgoing factor is dropped
    (j = n-1).
    """
    if calc is None:
        calc = MarginalCalculator(prior)
    n = len(state.xi)
    L = state.n_states
    x = data[j]
    gamma = state.gamma
    alpha = state.alpha
    counts = state.counts
    prev = int(state.xi[j - 1]) if j > 0 else None
    nxt = int(state.xi[j + 1]) if j < n - 1 else None
    if prev is None:
        in_f = np.log(gamma[:L])
        in_new = math.log(gamma[L])
    else:
        in_f = np.log(counts[prev, :L] + alpha * gamma[:L])
        in_new = math.log(alpha * gamma[L])
    if nxt is None:
        out_f = 0.0
        out_new = 0.0
    else:
        num = counts[:L, nxt] + alpha * gamma[nxt]
        den = counts[:L].sum(axis=1) + alpha
        if prev is not None:
            den = den.copy()
            den[prev] += 1.0
            if prev == nxt:
                num = num.copy()
                num[prev] += 1.0
        out_f = np.log(num) - np.log(den)
        out_new = math.log(gamma[nxt])
    logw = np.empty(L + 1)
    for l, st in enumerate(state.states):
        logw[l] = calc.log_predictive(
            x, st.stats, st.graph, lm_cur=st.log_marginal(calc, data))
    logw[:L] += in_f + out_f
    empty = ClusterStats.empty(data.shape[1])
    logw[L] = in_new + out_new + calc.log_predictive(x, empty, new_graph,
                                                     lm_cur=0.0)
    return logw


def spawn_state(state, rng, graph=None):
    """Instantiate a new state: Beta(alpha0, 1) stick break of the
    remainder mass, zero-padded count tables, empty emission stats."""
    p = state.states[0].stats.p if state.states else 1
    if graph is None:
        graph = DecomposableGraph.empty(p)
    v = rng.beta(state.alpha0, 1.0)
    rem = state.gamma[-1]
    state.gamma = np.concatenate([state.gamma[:-1], [v * rem, (1.0 - v) * rem]])
    L = state.n_states
    grown = np.zeros((L + 1, L + 1))
    grown[:L, :L] = state.counts
    state.counts = grown
    state.states.append(Cluster(graph, ClusterStats.empty(p)))
    return state


def _delete_state(state, l):
    """Drop an emptied state: swap the last label in, fold its gamma mass
    back into the remainder entry."""
    L = state.n_states
    last = L - 1
    if l != last:
        moved = state.states[last]
        state.states[l] = moved
        for i in moved.members:
            state.xi[i] = l
        state.counts[[l, last], :] = state.counts[[last, l], :]
        state.counts[:, [l, last]] = state.counts[:, [last, l]]
        state.gamma[[l, last]] = state.gamma[[last, l]]
    state.states.pop()
    state.gamma = np.concatenate([state.gamma[:last],
                                  [state.gamma[last] + state.gamma[L]]])
    state.counts = state.counts[:last, :last]


def _remove_time(state, j, data):
    n = len(state.xi)
    l = int(state.xi[j])
    if j > 0:
        state.counts[int(state.xi[j - 1]), l] -= 1.0
    if j < n - 1:
        state.counts[l, int(state.xi[j + 1])] -= 1.0
    st = state.states[l]
    st.stats.remove(data[j])
    st.members.discard(j)
    st.invalidate()
    if st.stats.n == 0:
        _delete_state(state, l)


def _insert_time(state, j, l, data):
    n = len(state.xi)
    st = state.states[l]
    st.stats.add(data[j])
    st.members.add(j)
    st.invalidate()
    state.xi[j] = l
    if j > 0:
        state.counts[int(state.xi[j - 1]), l] += 1.0
    if j < n - 1:
        state.counts[l, int(state.xi[j + 1])] += 1.0


def trajectory_sweep(state, data, prior, graph_prior, rng, calc=None,
                     walker=None):
    """Resample every hidden state in time order from its full conditional."""
    if calc is None:
        calc = MarginalCalculator(prior)
    n, p = data.shape
    for j in range(n):
        _remove_time(state, j, data)
        if walker is None:
            new_graph = graph_prior.sample(p, rng)
        else:
            new_graph = walker.draw(rng)
        logw = state_log_weights(j, state, data, prior, new_graph, calc)
        l = _sample_log_categorical(logw, rng.random())
        if l == state.n_states:
            spawn_state(state, rng, new_graph)
        _insert_time(state, j, l, data)
    state.iteration += 1
    return state


def sample_m(counts, alpha, gamma, table, rng):
    """Table counts: P(m_ll' = m) proportional to S(r_ll', m) (alpha gamma_l')^m."""
    L = counts.shape[0]
    m = np.zeros((L, L), dtype=np.intp)
    for l in range(L):
        for lp in range(L):
            r = int(counts[l, lp])
            if r == 0:
                continue
            if r == 1:
                m[l, lp] = 1
                continue
            logw = table.row(r) + np.arange(1, r + 1) * math.log(
                alpha * gamma[lp])
            m[l, lp] = 1 + _sample_log_categorical(logw, rng.random())
    return m


def update_gamma(m, alpha0, rng, initial_state=None):
    """Base weights refreshed as Dirichlet(m-column sums, alpha0).

    initial_state adds the single base-measure draw of the first hidden
    state to its column; with it every occupied state has a positive
    count. The trailing entry is the un-instantiated remainder mass.
    """
    col = m.sum(axis=0).astype(float)
    if initial_state is not None:
        col[initial_state] += 1.0
    if np.any(col <= 0.0):
        raise ValueError("every occupied state needs a positive table count")
    gamma = rng.dirichlet(np.append(col, alpha0))
    gamma = np.clip(gamma, 1e-300, None)
    return gamma / gamma.sum()


def sample_alpha(state, a, b, rng):
    """Transition-concentration update via the Beta/Bernoulli auxiliaries.

    States with no outgoing transitions are skipped; the update reduces
    to the Gamma(a, b) prior when there are no tables at all.
    """
    r_out = state.counts.sum(axis=1)
    occ = r_out > 0.0
    m_tot = int(state.m.sum())
    shape = a + m_tot
    rate = b
    alpha = state.alpha
    for r in r_out[occ]:
        zeta = rng.beta(alpha + 1.0, r)
        rate -= math.log(zeta)
        if rng.random() < r / (alpha + r):
            shape -= 1.0
    return rng.gamma(shape, 1.0 / rate)


def sample_alpha0_ihmm(L, m_total, a0, b0, alpha0, rng):
    """Top-level concentration update; the DPM scheme with the sample
    size replaced by the total table count."""
    return _sample_alpha0_aux(L, m_total, a0, b0, alpha0, rng)


def _record_hmm(state, save_params, calc, rng):
    rec = {
        "iter": state.iteration,
        "xi": [int(v) + 1 for v in state.xi],
        "graphs": [[list(e) for e in s.graph.edges] for s in state.states],
        "gamma": [float(g) for g in state.gamma],
        "alpha": state.alpha,
        "alpha0": state.alpha0,
    }
    if save_params:
        params = []
        for s in state.states:
            mu, K = calc.sample_posterior(s.stats, s.graph, rng)
            params.append({"mu": mu.tolist(), "K": K.tolist()})
        rec["params"] = params
    return rec


def run_ihmm(data, config, initial_state=None):
    """Run the collapsed infinite-HMM sampler on a time-ordered matrix.

    Per sweep: trajectory pass, per-state graph moves, table counts,
    gamma, then the two concentration parameters. Deterministic given
    config.seed; burn-in discarded and the rest thinned.
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
    table = LogStirling1Table(max(n, 2))
    if initial_state is None:
        init_graph = DecomposableGraph.complete(p) if config.full_graph else None
        state = HmmState.initial(data, config.alpha_init, config.alpha0_init,
                                 graph=init_graph)
    else:
        state = initial_state
    walker = PriorGraphWalker(graph_prior, p, rng)
    records = []
    accepted = proposed = 0
    for it in range(1, config.sweeps + 1):
        trajectory_sweep(state, data, prior, graph_prior, rng, calc, walker)
        if repeats:
            for st in state.states:
                _, acc = mh_graph_update(
                    st, prior, rng, repeats=repeats,
                    graph_prior=graph_prior, calc=calc, data=data)
                accepted += acc
                proposed += repeats
        state.m = sample_m(state.counts, state.alpha, state.gamma, table, rng)
        state.gamma = update_gamma(state.m, state.alpha0, rng,
                                   initial_state=int(state.xi[0]))
        if config.sample_alpha:
            state.alpha = sample_alpha(state, config.alpha_a, config.alpha_b, rng)
        if config.sample_alpha0:
            state.alpha0 = sample_alpha0_ihmm(
                state.n_states, int(state.m.sum()) + 1, config.alpha0_a,
                config.alpha0_b, state.alpha0, rng)
        if it % config.stats_refresh == 0:
            for st in state.states:
                st.refresh_stats(data)
        if it > config.burnin and (it - config.burnin) % config.thin == 0:
            records.append(_record_hmm(state, config.save_params, calc, rng))
    meta = {
        "model": "ihmm",
        "n": n,
        "p": p,
        "config": config.to_dict(),
        "counters": {"graph_accepted": accepted, "graph_proposed": proposed},
    }
    return Trace(meta, records, final_state=state)
