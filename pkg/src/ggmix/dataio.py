"""Data ingestion, standardization, run configuration, and trace files.

Traces are newline-delimited JSON: a metadata header line followed by
one record per retained sweep. Plain text keeps runs diffable and makes
the byte-identical determinism contract easy to check.
"""

import json
import os

import numpy as np

from .graph import DecomposableGraph
from .gwishart import GWishartParams, PriorSpec


class ConfigError(ValueError):
    """An invalid run-configuration value."""


class DataError(ValueError):
    """Malformed or degenerate input data."""


def chain_rng(seed, chain=0):
    """Per-chain generator from a master seed.

    Streams derive from SeedSequence([seed, chain]) so adding chains
    never perturbs the streams of existing ones.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(chain)]))


def load_csv(path):
    """Read a rectangular numeric CSV (optional header) into an array.

    Rows are observations, time-ordered for the iHMM. Parse failures
    report the offending 1-based line number.
    """
    rows = []
    ncols = None
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                if rows:
                    continue
                continue
            cells = [c.strip() for c in line.split(",")]
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header row
                bad = next(c for c in cells if not _is_float(c))
                raise DataError(
                    "%s: line %d: non-numeric cell %r" % (path, lineno, bad))
            if ncols is None:
                ncols = len(vals)
            elif len(vals) != ncols:
                raise DataError(
                    "%s: line %d: expected %d columns, got %d"
                    % (path, lineno, ncols, len(vals)))
            rows.append(vals)
    if not rows:
        raise DataError("%s: no numeric rows found" % path)
    return np.array(rows, dtype=float)


def _is_float(c):
    try:
        float(c)
        return True
    except ValueError:
        return False


class StandardizedData:
    """Column-standardized matrix with the original moments retained."""

    __slots__ = ("data", "means", "sds")

    def __init__(self, data, means, sds):
        self.data = data
        self.means = means
        self.sds = sds

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def p(self):
        return self.data.shape[1]

    def back_transform(self, X):
        return X * self.sds + self.means

    def back_transform_moments(self, mu, sigma):
        """Map standardized-space predictive moments to the raw scale."""
        return mu * self.sds + self.means, sigma * np.multiply.outer(self.sds, self.sds)


def standardize(raw):
    """Center and scale each column to unit variance (n-1 convention)."""
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise DataError("expected a 2-d matrix")
    if raw.shape[0] < 2:
        raise DataError("standardization needs at least 2 observations")
    means = raw.mean(axis=0)
    sds = raw.std(axis=0, ddof=1)
    dead = np.flatnonzero(sds == 0.0)
    if dead.size:
        raise DataError("column %d has zero variance" % (int(dead[0]) + 1))
    out = StandardizedData((raw - means) / sds, means, sds)
    assert np.all(np.abs(out.data.mean(axis=0)) < 1e-10)
    assert np.all(np.abs(out.data.std(axis=0, ddof=1) - 1.0) < 1e-10)
    return out


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

_MODELS = ("dpm", "pitman-yor", "ihmm")


class RunConfig:
    """All sampler and pipeline settings, with validation.

    Accepts the nested key layout of config files (alpha0.init,
    graph_mh.repeats, ihmm.alpha.prior.a, ...) through from_dict.
    """

    _FIELDS = dict(
        model="dpm",
        sweeps=1000,
        burnin=200,
        thin=1,
        seed=0,
        chain=0,
        chains=1,
        n0=1.0,
        delta0=3.0,
        d0_scale=1.0,
        mu0=0.0,
        alpha0_init=1.0,
        alpha0_a=1.0,
        alpha0_b=1.0,
        sample_alpha0=True,
        discount=0.0,
        alpha_init=1.0,
        alpha_a=1.0,
        alpha_b=1.0,
        sample_alpha=True,
        graph_prior_kind="uniform",
        graph_prior_q=0.5,
        graph_mh_repeats=5,
        full_graph=False,
        save_params=False,
        stats_refresh=500,
        bt_start=20,
        bt_end=300,
        bt_stride=1,
        target_return=0.001,
    )

    def __init__(self, **kwargs):
        for name, default in self._FIELDS.items():
            setattr(self, name, kwargs.pop(name, default))
        if kwargs:
            raise ConfigError("unknown config keys: %s" % sorted(kwargs))

    def replace(self, **kwargs):
        d = {name: getattr(self, name) for name in self._FIELDS}
        d.update(kwargs)
        return RunConfig(**d)

    def validate(self, n=None):
        if self.model not in _MODELS:
            raise ConfigError("model must be one of %s" % (_MODELS,))
        if self.sweeps <= self.burnin or self.burnin < 0:
            raise ConfigError("need sweeps > burnin >= 0")
        if self.thin < 1:
            raise ConfigError("thin must be >= 1")
        if self.chains < 1:
            raise ConfigError("chains must be >= 1")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError("discount must lie in [0, 1)")
        if self.alpha0_init <= -self.discount:
            raise ConfigError("alpha0 must exceed -discount")
        if self.n0 <= 0.0:
            raise ConfigError("n0 must be positive")
        if self.delta0 <= 2.0:
            raise ConfigError("delta0 must exceed 2")
        if self.d0_scale <= 0.0:
            raise ConfigError("d0_scale must be positive")
        if min(self.alpha0_a, self.alpha0_b, self.alpha_a, self.alpha_b) <= 0.0:
            raise ConfigError("gamma hyperparameters must be positive")
        if self.alpha_init <= 0.0:
            raise ConfigError("alpha must be positive")
        if self.graph_prior_kind not in ("uniform", "bernoulli"):
            raise ConfigError("graph prior kind must be uniform or bernoulli")
        if self.graph_prior_kind == "bernoulli" and not 0.0 < self.graph_prior_q < 1.0:
            raise ConfigError("graph prior q must lie in (0, 1)")
        if self.graph_mh_repeats < 0:
            raise ConfigError("graph_mh.repeats must be >= 0")
        if self.stats_refresh < 1:
            raise ConfigError("stats_refresh must be >= 1")
        return self

    def make_prior(self, p):
        mu0 = np.full(p, float(self.mu0))
        return PriorSpec(mu0, self.n0,
                         GWishartParams(self.delta0, self.d0_scale * np.eye(p)))

    def make_graph_prior(self):
        from .mixture import FixedGraphPrior, GraphPrior

        if self.full_graph:
            return FixedGraphPrior()
        return GraphPrior(self.graph_prior_kind, self.graph_prior_q)

    def to_dict(self):
        return {
            "model": self.model,
            "sweeps": self.sweeps,
            "burnin": self.burnin,
            "thin": self.thin,
            "seed": self.seed,
            "chain": self.chain,
            "chains": self.chains,
            "n0": self.n0,
            "delta0": self.delta0,
            "d0_scale": self.d0_scale,
            "mu0": self.mu0,
            "alpha0": {
                "init": self.alpha0_init,
                "prior": {"a": self.alpha0_a, "b": self.alpha0_b},
                "sample": self.sample_alpha0,
            },
            "discount": self.discount,
            "ihmm": {
                "alpha": {
                    "init": self.alpha_init,
                    "prior": {"a": self.alpha_a, "b": self.alpha_b},
                    "sample": self.sample_alpha,
                },
            },
            "graph_prior": {"kind": self.graph_prior_kind, "q": self.graph_prior_q},
            "graph_mh": {"repeats": self.graph_mh_repeats},
            "full_graph": self.full_graph,
            "save_params": self.save_params,
            "stats_refresh": self.stats_refresh,
            "backtest": {
                "start": self.bt_start,
                "end": self.bt_end,
                "stride": self.bt_stride,
                "target_return": self.target_return,
            },
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kw = {}
        for key in ("model", "sweeps", "burnin", "thin", "seed", "chain",
                    "chains", "n0", "delta0", "d0_scale", "mu0", "discount",
                    "full_graph", "save_params", "stats_refresh"):
            if key in d:
                kw[key] = d.pop(key)
        a0 = d.pop("alpha0", {})
        kw.update({k: v for k, v in {
            "alpha0_init": a0.get("init"),
            "alpha0_a": a0.get("prior", {}).get("a"),
            "alpha0_b": a0.get("prior", {}).get("b"),
            "sample_alpha0": a0.get("sample"),
        }.items() if v is not None})
        al = d.pop("ihmm", {}).get("alpha", {})
        kw.update({k: v for k, v in {
            "alpha_init": al.get("init"),
            "alpha_a": al.get("prior", {}).get("a"),
            "alpha_b": al.get("prior", {}).get("b"),
            "sample_alpha": al.get("sample"),
        }.items() if v is not None})
        gp = d.pop("graph_prior", {})
        kw.update({k: v for k, v in {
            "graph_prior_kind": gp.get("kind"),
            "graph_prior_q": gp.get("q"),
        }.items() if v is not None})
        gm = d.pop("graph_mh", {})
        if gm.get("repeats") is not None:
            kw["graph_mh_repeats"] = gm["repeats"]
        bt = d.pop("backtest", {})
        kw.update({k: v for k, v in {
            "bt_start": bt.get("start"),
            "bt_end": bt.get("end"),
            "bt_stride": bt.get("stride"),
            "target_return": bt.get("target_return"),
        }.items() if v is not None})
        if d:
            raise ConfigError("unknown config keys: %s" % sorted(d))
        return cls(**kw)

    @classmethod
    def from_file(cls, path):
        with open(path, "r") as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

class Trace:
    """Retained sweeps of one chain plus run metadata.

    Records are plain dicts (iter, xi, graphs, scalar hyperparameters);
    final_state carries the in-memory sampler state for warm starts and
    is not persisted.
    """

    __slots__ = ("meta", "records", "final_state")

    def __init__(self, meta, records, final_state=None):
        self.meta = meta
        self.records = records
        self.final_state = final_state

    def __len__(self):
        return len(self.records)

    def assignments(self):
        """Retained assignment vectors as a (sweeps, n) 0-based array."""
        return np.array([r["xi"] for r in self.records], dtype=np.intp) - 1

    def graphs(self, p):
        """Per-record cluster graphs rebuilt from the stored edge lists."""
        out = []
        for r in self.records:
            out.append([
                DecomposableGraph(p, [tuple(e) for e in edges], _trusted=True)
                for edges in r["graphs"]
            ])
        return out


def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_trace(trace, path):
    with open(path, "w") as fh:
        fh.write(_dumps({"ggmix_trace": 1, "meta": trace.meta}) + "\n")
        for rec in trace.records:
            fh.write(_dumps(rec) + "\n")


def read_trace(path):
    with open(path, "r") as fh:
        header = json.loads(fh.readline())
        if "ggmix_trace" not in header:
            raise DataError("%s: not a ggmix trace file" % path)
        records = [json.loads(line) for line in fh if line.strip()]
    return Trace(header["meta"], records)


def write_matrix_csv(mat, path, header=None):
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(mat):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
