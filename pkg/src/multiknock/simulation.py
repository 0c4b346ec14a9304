"""Synthetic multi-site benchmarks for the selection pipeline.

Three settings:

* continuous: gaussian designs with within-group correlation rho and
  between-group correlation gamma * rho; group coefficients are amplitude
  draws times shared Rademacher signs, constant within a group. Scenario 1
  shares the mutual groups' amplitudes across sites, scenario 2 redraws them
  per site (signs stay shared). Mutual groups come first, then each site's
  exclusive block.
* binary: one quarter of the groups are five-level categoricals (four dummy
  columns each), the rest singleton gaussian columns with AR(r) correlation;
  outcomes are logistic draws with per-site intercepts. Signal groups are
  picked at random, stratified one categorical per three continuous.
* mixed: the binary setting's design with a latent gaussian response; site 1
  observes the latent value (gaussian family), later sites observe its
  nonnegativity indicator (binomial family).

The estimand is the set of mutual signal groups. FDP counts selections
outside it (ratio over max(|selection|, 1)); power is the recovered fraction.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit

from .data import ColumnInfo, DatasetView, Family, GroupPartition, standardize
from .errors import ConfigError, DataError
from .filter import osff_product, threshold
from .grouplasso import group_lasso_path
from .knockoffs import (
    GramMatrix,
    equivariant_b,
    fixed_knockoff,
    sdp_b,
    second_order_knockoff,
    sequential_knockoff,
)

SETTINGS = ("continuous", "binary", "mixed")
STRATEGIES = ("gs", "gs_plus", "pooling", "intersection", "individual")
KNOCKOFF_METHODS = ("auto", "fixed-equi", "fixed-sdp", "second-order", "sequential")

# Default amplitudes per setting (logistic scales need larger coefficients).
_DEFAULT_AMPLITUDE = {"continuous": 0.6, "binary": 3.5, "mixed": 3.5}

# Seed-stream tags so each construction gets an independent stream.
_TAG_SITE, _TAG_POOL, _TAG_INDIVIDUAL = 0, 1, 2


class _DegenerateDraw(DataError):
    """A generated outcome vector is constant; the draw will be retried."""


@dataclass(frozen=True)
class SimConfig:
    """Benchmark description; one config is one point of a parameter grid."""

    setting: str
    scenario: int = 2
    n: tuple = (400, 400)
    M: int = 20
    group_size: int = 5
    s_mutual: int = 4
    s_exclusive: tuple = (4, 4)
    rho: float = 0.5
    gamma: float = 0.1
    r: float = 0.5
    amplitude: float = None
    sigma: tuple = None
    alpha: tuple = (1.0, -1.0)
    q: float = 0.2
    replications: int = 200
    seed: int = 0
    strategies: tuple = ("gs", "gs_plus", "pooling", "intersection", "individual")
    knockoff: str = "auto"
    grid_size: int = 100

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ConfigError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.scenario not in (1, 2):
            raise ConfigError(f"scenario must be 1 or 2, got {self.scenario!r}")
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if len(n) < 1 or any(v < 2 for v in n):
            raise ConfigError(f"n must list at least one site size >= 2, got {self.n!r}")
        object.__setattr__(self, "n", n)
        sx = tuple(int(v) for v in np.atleast_1d(self.s_exclusive))
        if len(sx) == 1:
            sx = sx * len(n)
        if len(sx) != len(n):
            raise ConfigError("s_exclusive needs one entry per site")
        if any(v < 0 for v in sx) or self.s_mutual < 0:
            raise ConfigError("signal counts must be nonnegative")
        object.__setattr__(self, "s_exclusive", sx)
        if self.M < 1 or self.group_size < 1:
            raise ConfigError("M and group_size must be positive")
        if self.s_mutual + sum(sx) > self.M:
            raise ConfigError(
                f"s_mutual + sum(s_exclusive) = {self.s_mutual + sum(sx)} "
                f"exceeds M = {self.M}"
            )
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"rho must lie in [0, 1), got {self.rho!r}")
        if self.gamma < 0.0:
            raise ConfigError(f"gamma must be nonnegative, got {self.gamma!r}")
        if not -1.0 < self.r < 1.0:
            raise ConfigError(f"r must lie in (-1, 1), got {self.r!r}")
        amplitude = self.amplitude
        if amplitude is None:
            amplitude = _DEFAULT_AMPLITUDE[self.setting]
        if amplitude <= 0:
            raise ConfigError(f"amplitude must be positive, got {self.amplitude!r}")
        object.__setattr__(self, "amplitude", float(amplitude))
        sigma = self.sigma
        if sigma is None:
            sigma = 1.0
        sigma = tuple(float(v) for v in np.atleast_1d(sigma))
        if len(sigma) == 1:
            sigma = sigma * len(n)
        if len(sigma) != len(n) or any(v <= 0 for v in sigma):
            raise ConfigError("sigma needs one positive entry per site")
        object.__setattr__(self, "sigma", sigma)
        alpha = tuple(float(v) for v in np.atleast_1d(self.alpha))
        if len(alpha) == 1:
            alpha = alpha * len(n)
        if self.setting == "binary":
            # Only the binary generator consults the intercepts.
            if len(alpha) < len(n):
                raise ConfigError(
                    "alpha needs one entry per site in the binary setting"
                )
            alpha = alpha[: len(n)]
        object.__setattr__(self, "alpha", alpha)
        if not 0.0 < self.q < 1.0:
            raise ConfigError(f"q must lie in (0, 1), got {self.q!r}")
        if self.replications < 1:
            raise ConfigError("replications must be positive")
        strategies = tuple(self.strategies)
        for s in strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}; choose from {STRATEGIES}")
        object.__setattr__(self, "strategies", strategies)
        if self.knockoff not in KNOCKOFF_METHODS:
            raise ConfigError(
                f"knockoff must be one of {KNOCKOFF_METHODS}, got {self.knockoff!r}"
            )
        if self.grid_size < 20:
            raise ConfigError("grid_size must be at least 20")
        if self.setting in ("binary", "mixed"):
            if self.M % 4 != 0:
                raise ConfigError(
                    "binary/mixed settings need M divisible by 4 "
                    "(one categorical group per three continuous)"
                )
            if len(n) < 2 and self.setting == "mixed":
                raise ConfigError("the mixed setting needs at least two sites")

    @property
    def K(self):
        return len(self.n)

    @classmethod
    def from_dict(cls, doc):
        """Build a config from a JSON-style dict.

        Accepts descriptive aliases: ``n_k`` for ``n``, ``s0`` for
        ``s_mutual``, ``s1``/``s2``/... or ``s_k`` for ``s_exclusive``,
        ``A`` for ``amplitude``, ``sigma_k``/``alpha_k`` for
        ``sigma``/``alpha``, and scenario names ``same_strength`` /
        ``different_strength`` for 1 / 2. Unknown keys are rejected.
        """

        doc = dict(doc)
        aliases = {"n_k": "n", "s0": "s_mutual", "s_k": "s_exclusive",
                   "A": "amplitude", "sigma_k": "sigma", "alpha_k": "alpha"}
        for old, new in aliases.items():
            if old in doc:
                if new in doc:
                    raise ConfigError(f"config gives both {old!r} and {new!r}")
                doc[new] = doc.pop(old)
        numbered = sorted(k for k in doc if len(k) > 1 and k[0] == "s"
                          and k[1:].isdigit() and int(k[1:]) >= 1)
        if numbered:
            if "s_exclusive" in doc:
                raise ConfigError(
                    f"config gives both {numbered[0]!r} and 's_exclusive'"
                )
            expected = [f"s{i}" for i in range(1, len(numbered) + 1)]
            if numbered != expected:
                raise ConfigError(f"per-site counts must be s1..sK, got {numbered}")
            doc["s_exclusive"] = tuple(doc.pop(k) for k in expected)
        scen = doc.get("scenario")
        if isinstance(scen, str):
            names = {"same_strength": 1, "different_strength": 2}
            if scen not in names:
                raise ConfigError(
                    f"scenario must be 1, 2, 'same_strength' or "
                    f"'different_strength', got {scen!r}"
                )
            doc["scenario"] = names[scen]
        known = {f.name for f in fields(cls)}
        unknown = [k for k in doc if k not in known]
        if unknown:
            raise ConfigError(f"unknown config field {unknown[0]!r}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in doc.items()}
        return cls(**kwargs)


def _derive_seed(*parts):
    """Deterministic child seed from integer parts."""
    state = np.random.SeedSequence([int(v) for v in parts]).generate_state(1, np.uint64)
    return int(state[0])


def _continuous_cov(M, group_size, rho, gamma):
    p = M * group_size
    cov = np.full((p, p), gamma * rho)
    for m in range(M):
        sl = slice(m * group_size, (m + 1) * group_size)
        cov[sl, sl] = rho
    np.fill_diagonal(cov, 1.0)
    return cov


def _chol(cov, what):
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ConfigError(f"{what} is not positive definite") from None


def gen_continuous(cfg, rep_seed, return_coefs=False):
    """One replication of the continuous setting.

    Returns (views, truth) where truth is the set of mutual group indices;
    with ``return_coefs`` also the per-site coefficient vectors.
    """

    rng = np.random.default_rng(rep_seed)
    M, gsz = cfg.M, cfg.group_size
    p = M * gsz
    part = GroupPartition.contiguous(M, gsz)
    columns = tuple(ColumnInfo(name=f"x{j:04d}") for j in range(p))
    chol = _chol(_continuous_cov(M, gsz, cfg.rho, cfg.gamma), "continuous covariance")

    mutual = np.arange(cfg.s_mutual)
    offsets = cfg.s_mutual + np.concatenate([[0], np.cumsum(cfg.s_exclusive)[:-1]])
    eps = rng.choice([-1.0, 1.0], size=M)
    shared = rng.uniform(0.0, cfg.amplitude, cfg.s_mutual) if cfg.scenario == 1 else None

    views = []
    betas = []
    for k in range(cfg.K):
        coef = np.zeros(M)
        if cfg.scenario == 1:
            coef[mutual] = shared
        else:
            coef[mutual] = rng.uniform(0.0, cfg.amplitude, cfg.s_mutual)
        excl = np.arange(offsets[k], offsets[k] + cfg.s_exclusive[k])
        coef[excl] = rng.uniform(0.0, cfg.amplitude, cfg.s_exclusive[k])
        beta = np.repeat(coef * eps, gsz)
        X = rng.standard_normal((cfg.n[k], p)) @ chol.T
        y = X @ beta + cfg.sigma[k] * rng.standard_normal(cfg.n[k])
        views.append(
            DatasetView(
                X=X, y=y, family=Family.GAUSSIAN, partition=part,
                columns=columns, dataset_id=f"site{k}",
            )
        )
        betas.append(beta)
    truth = frozenset(int(m) for m in mutual)
    if return_coefs:
        return views, truth, betas
    return views, truth


def _categorical_layout(M):
    """Group layout for the binary/mixed settings: M/4 five-level
    categoricals (4 dummies each) followed by 3M/4 singleton columns."""

    n_cat = M // 4
    n_cont = M - n_cat
    groups = []
    columns = []
    for m in range(n_cat):
        start = 4 * m
        groups.append(tuple(range(start, start + 4)))
        parent = f"c{m:03d}"
        columns.extend(
            ColumnInfo(name=f"{parent}=lv{l}", kind="dummy", parent=parent,
                       level=f"lv{l}")
            for l in range(1, 5)
        )
    base = 4 * n_cat
    for j in range(n_cont):
        groups.append((base + j,))
        columns.append(ColumnInfo(name=f"x{j:03d}"))
    names = tuple(f"g{m:04d}" for m in range(M))
    part = GroupPartition(groups=tuple(groups), p=base + n_cont, names=names)
    return part, tuple(columns), n_cat, n_cont


def _stratified_pick(rng, count, avail_cat, avail_cont, what):
    k_cat = count // 4
    k_cont = count - k_cat
    if k_cat > len(avail_cat) or k_cont > len(avail_cont):
        raise ConfigError(
            f"not enough free groups to place {what} signals "
            f"({k_cat} categorical + {k_cont} continuous requested)"
        )
    cat = rng.choice(sorted(avail_cat), size=k_cat, replace=False) if k_cat else []
    cont = rng.choice(sorted(avail_cont), size=k_cont, replace=False) if k_cont else []
    chosen = sorted(int(v) for v in list(cat) + list(cont))
    return chosen


def _categorical_design(cfg, rng):
    """Shared machinery of the binary and mixed settings.

    Returns (partition, columns, per-site X, per-site beta, truth).
    """

    part, columns, n_cat, n_cont = _categorical_layout(cfg.M)
    cat_ids = set(range(n_cat))
    cont_ids = set(range(n_cat, cfg.M))
    mutual = _stratified_pick(rng, cfg.s_mutual, cat_ids, cont_ids, "mutual")
    cat_left = cat_ids - set(mutual)
    cont_left = cont_ids - set(mutual)
    exclusives = []
    for k in range(cfg.K):
        exc = _stratified_pick(rng, cfg.s_exclusive[k], cat_left, cont_left,
                               f"site {k} exclusive")
        cat_left -= set(exc)
        cont_left -= set(exc)
        exclusives.append(exc)

    eps = rng.choice([-1.0, 1.0], size=cfg.M)
    shared = (
        rng.uniform(0.0, cfg.amplitude, len(mutual)) if cfg.scenario == 1 else None
    )
    chol = (
        _chol(cfg.r ** np.abs(np.subtract.outer(np.arange(n_cont), np.arange(n_cont))),
              "autocorrelation matrix")
        if n_cont
        else None
    )

    xs, betas = [], []
    for k in range(cfg.K):
        coef = np.zeros(cfg.M)
        if cfg.scenario == 1:
            coef[mutual] = shared
        else:
            coef[mutual] = rng.uniform(0.0, cfg.amplitude, len(mutual))
        coef[exclusives[k]] = rng.uniform(0.0, cfg.amplitude, len(exclusives[k]))
        signed = coef * eps

        n = cfg.n[k]
        X = np.zeros((n, part.p))
        levels = rng.integers(0, 5, size=(n, n_cat))
        for m in range(n_cat):
            for l in range(1, 5):
                X[:, 4 * m + (l - 1)] = (levels[:, m] == l).astype(float)
        if n_cont:
            X[:, 4 * n_cat:] = rng.standard_normal((n, n_cont)) @ chol.T

        beta = np.zeros(part.p)
        for m, g in enumerate(part.groups):
            beta[list(g)] = signed[m]
        xs.append(X)
        betas.append(beta)
    return part, columns, xs, betas, frozenset(mutual)


def gen_binary(cfg, rep_seed, return_coefs=False):
    """One replication of the binary setting (logistic outcomes)."""

    rng = np.random.default_rng(rep_seed)
    part, columns, xs, betas, truth = _categorical_design(cfg, rng)
    views = []
    for k in range(cfg.K):
        eta = cfg.alpha[k] + xs[k] @ betas[k]
        y = (rng.random(cfg.n[k]) < expit(eta)).astype(float)
        if y.min() == y.max():
            raise _DegenerateDraw(
                f"site {k} drew a constant binary outcome; intercept "
                f"{cfg.alpha[k]} is too extreme for this draw"
            )
        views.append(
            DatasetView(X=xs[k], y=y, family=Family.BINOMIAL, partition=part,
                        columns=columns, dataset_id=f"site{k}")
        )
    if return_coefs:
        return views, truth, betas
    return views, truth


def gen_mixed(cfg, rep_seed, return_coefs=False):
    """One replication of the mixed setting.

    Site 0 observes the latent gaussian response; every later site observes
    only its nonnegativity indicator.
    """

    rng = np.random.default_rng(rep_seed)
    part, columns, xs, betas, truth = _categorical_design(cfg, rng)
    views = []
    for k in range(cfg.K):
        latent = xs[k] @ betas[k] + cfg.sigma[k] * rng.standard_normal(cfg.n[k])
        if k == 0:
            views.append(
                DatasetView(X=xs[k], y=latent, family=Family.GAUSSIAN,
                            partition=part, columns=columns,
                            dataset_id=f"site{k}")
            )
            continue
        y = (latent >= 0.0).astype(float)
        if y.min() == y.max():
            raise _DegenerateDraw(f"site {k} drew a constant thresholded outcome")
        views.append(
            DatasetView(X=xs[k], y=y, family=Family.BINOMIAL, partition=part,
                        columns=columns, dataset_id=f"site{k}")
        )
    if return_coefs:
        return views, truth, betas
    return views, truth


_GENERATORS = {"continuous": gen_continuous, "binary": gen_binary, "mixed": gen_mixed}


def generate_views(cfg, rep_index, max_attempts=20):
    """Generate one replication, redrawing on degenerate outcome vectors."""

    gen = _GENERATORS[cfg.setting]
    for attempt in range(max_attempts):
        try:
            return gen(cfg, [cfg.seed, int(rep_index), attempt])
        except _DegenerateDraw:
            continue
    raise ConfigError(
        f"replication {rep_index} produced degenerate outcomes in "
        f"{max_attempts} consecutive draws; the configuration is too extreme"
    )


def _auto_method(view):
    return "sequential" if view.dummy_blocks() else "fixed-equi"


def _site_statistics(view, seed, method="auto", grid_size=100):
    """Standardize, construct knockoffs, and fit the path for one dataset."""

    std, _ = standardize(view)
    if method == "auto":
        method = _auto_method(std)
    if method == "fixed-equi":
        gram = GramMatrix.from_design(std.X)
        ko = fixed_knockoff(std.X, std.partition, equivariant_b(gram, std.partition),
                            seed)
    elif method == "fixed-sdp":
        gram = GramMatrix.from_design(std.X)
        ko = fixed_knockoff(std.X, std.partition, sdp_b(gram, std.partition), seed)
    elif method == "second-order":
        gram = GramMatrix.from_covariance(std.X)
        ko = second_order_knockoff(std.X, std.partition,
                                   equivariant_b(gram, std.partition), seed,
                                   gram=gram)
    elif method == "sequential":
        ko = sequential_knockoff(std, seed)
    else:
        raise ConfigError(f"unknown knockoff method {method!r}")
    stats = group_lasso_path(std, ko, grid_size=grid_size)
    return stats, method


def _pooled_view(views):
    first = views[0]
    if any(v.family is not first.family for v in views):
        return None
    if any(v.partition.names != first.partition.names for v in views):
        return None
    if any(v.column_names() != first.column_names() for v in views):
        return None
    X = np.vstack([v.X for v in views])
    y = np.concatenate([v.y for v in views])
    return DatasetView(X=X, y=y, family=first.family, partition=first.partition,
                       columns=first.columns, dataset_id="pooled")


def run_strategy(strategy, views, q, seed=0, knockoff="auto", grid_size=100):
    """Run one selection strategy over per-site datasets.

    Returns the selected group indices (relative to the shared partition) as
    a frozenset, or None when the strategy does not apply to the data
    (pooling across outcome families, individual knockoffs with categorical
    columns).
    """

    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    views = list(views)
    if not views:
        raise DataError("need at least one dataset")

    if strategy in ("gs", "gs_plus"):
        stats = [
            _site_statistics(v, _derive_seed(seed, _TAG_SITE, k), knockoff,
                             grid_size)[0]
            for k, v in enumerate(views)
        ]
        sel = threshold(osff_product(stats), q, plus=(strategy == "gs_plus"))
        return frozenset(sel.selected)

    if strategy == "pooling":
        pooled = _pooled_view(views)
        if pooled is None:
            return None
        stats, _ = _site_statistics(pooled, _derive_seed(seed, _TAG_POOL, 0),
                                    knockoff, grid_size)
        sel = threshold(osff_product([stats]), q, plus=True)
        return frozenset(sel.selected)

    if strategy == "intersection":
        out = None
        for k, v in enumerate(views):
            stats, _ = _site_statistics(v, _derive_seed(seed, _TAG_SITE, k),
                                        knockoff, grid_size)
            sel = threshold(osff_product([stats]), q, plus=True)
            picked = frozenset(sel.selected)
            out = picked if out is None else (out & picked)
        return out

    # individual: per-feature knockoffs, then map features to their groups.
    if any(v.dummy_blocks() for v in views):
        return None
    part = views[0].partition
    stats = []
    for k, v in enumerate(views):
        single = GroupPartition.singleton(v.p, names=v.column_names())
        sv = DatasetView(X=v.X, y=v.y, family=v.family, partition=single,
                         columns=v.columns, dataset_id=v.dataset_id)
        st, _ = _site_statistics(sv, _derive_seed(seed, _TAG_INDIVIDUAL, k),
                                 "fixed-equi", grid_size)
        stats.append(st)
    sel = threshold(osff_product(stats), q, plus=True)
    group_of = part.group_of()
    groups = {group_of[j] for j in sel.selected if j in group_of}
    return frozenset(groups)


def _replicate(cfg, rep):
    """All requested strategies for one replication, sharing site statistics."""

    views, truth = generate_views(cfg, rep)
    wanted = set(cfg.strategies)
    out = {}

    base = None
    if wanted & {"gs", "gs_plus", "intersection"}:
        base = [
            _site_statistics(v, _derive_seed(cfg.seed, rep, _TAG_SITE, k),
                             cfg.knockoff, cfg.grid_size)[0]
            for k, v in enumerate(views)
        ]
    if "gs" in wanted:
        out["gs"] = frozenset(threshold(osff_product(base), cfg.q, plus=False).selected)
    if "gs_plus" in wanted:
        out["gs_plus"] = frozenset(
            threshold(osff_product(base), cfg.q, plus=True).selected
        )
    if "intersection" in wanted:
        picked = None
        for st in base:
            sel = frozenset(threshold(osff_product([st]), cfg.q, plus=True).selected)
            picked = sel if picked is None else (picked & sel)
        out["intersection"] = picked
    if "pooling" in wanted:
        pooled = _pooled_view(views)
        if pooled is None:
            out["pooling"] = None
        else:
            st, _ = _site_statistics(pooled, _derive_seed(cfg.seed, rep, _TAG_POOL, 0),
                                     cfg.knockoff, cfg.grid_size)
            out["pooling"] = frozenset(
                threshold(osff_product([st]), cfg.q, plus=True).selected
            )
    if "individual" in wanted:
        if any(v.dummy_blocks() for v in views):
            out["individual"] = None
        else:
            out["individual"] = run_strategy(
                "individual", views, cfg.q,
                seed=_derive_seed(cfg.seed, rep, _TAG_INDIVIDUAL),
                knockoff="fixed-equi", grid_size=cfg.grid_size,
            )
    return out, truth


@dataclass
class SimOutcome:
    """Selections per strategy per replication, plus per-rep truth sets."""

    config: SimConfig
    truths: list = field(default_factory=list)
    selections: dict = field(default_factory=dict)

    def metrics(self):
        return {
            s: estimate_fdr_power(self.selections[s], self.truths)
            for s in self.config.strategies
        }


def estimate_fdr_power(selections, truths):
    """Monte Carlo FDR and power with standard errors.

    Replications where the strategy was inapplicable (selection None) are
    skipped. FDP uses max(|selection|, 1) in the denominator; power is the
    recovered fraction of the truth (undefined when the truth is empty).
    """

    fdps, powers = [], []
    for sel, truth in zip(selections, truths):
        if sel is None:
            continue
        sel = frozenset(sel)
        fdps.append(len(sel - truth) / max(len(sel), 1))
        if truth:
            powers.append(len(sel & truth) / len(truth))

    def _mean_se(vals):
        if not vals:
            return float("nan"), float("nan")
        arr = np.asarray(vals, dtype=float)
        se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        return float(arr.mean()), se

    fdr, fdr_se = _mean_se(fdps)
    power, power_se = _mean_se(powers)
    return {
        "applicable": len(fdps) > 0,
        "replications_used": len(fdps),
        "fdr": fdr,
        "fdr_se": fdr_se,
        "power": power,
        "power_se": power_se,
    }


def run_simulation(cfg, n_jobs=1, progress=None):
    """Run every replication and collect selections per strategy.

    Replications use independent seed streams derived from (seed, rep), so
    results are bit-identical regardless of ``n_jobs``.
    """

    reps = range(cfg.replications)
    if n_jobs == 1:
        results = []
        for rep in reps:
            results.append(_replicate(cfg, rep))
            if progress is not None:
                progress(rep + 1, cfg.replications)
    else:
        results = Parallel(n_jobs=n_jobs)(delayed(_replicate)(cfg, rep) for rep in reps)

    outcome = SimOutcome(config=cfg)
    outcome.selections = {s: [] for s in cfg.strategies}
    for picked, truth in results:
        outcome.truths.append(truth)
        for s in cfg.strategies:
            outcome.selections[s].append(picked[s])
    return outcome


def write_outcome_csv(outcome, path):
    """One row per strategy: FDR and power estimates with standard errors."""

    import csv
    from pathlib import Path

    cfg = outcome.config
    rows = []
    for s, m in outcome.metrics().items():
        rows.append({
            "method": s,
            "setting": cfg.setting,
            "scenario": cfg.scenario,
            "q": cfg.q,
            "replications": cfg.replications,
            "replications_used": m["replications_used"],
            "fdr_hat": "NA" if not m["applicable"] else f"{m['fdr']:.6f}",
            "fdr_se": "NA" if not m["applicable"] else f"{m['fdr_se']:.6f}",
            "power_hat": (
                "NA" if not m["applicable"] or np.isnan(m["power"])
                else f"{m['power']:.6f}"
            ),
            "power_se": (
                "NA" if not m["applicable"] or np.isnan(m["power"])
                else f"{m['power_se']:.6f}"
            ),
        })
    fieldnames = list(rows[0].keys())
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def w_sampler(cfg):
    """Adapter for sign-symmetry checks: rep index -> (W, null mask)."""

    def sample(rep):
        views, truth = generate_views(cfg, rep)
        stats = [
            _site_statistics(v, _derive_seed(cfg.seed, rep, _TAG_SITE, k),
                             cfg.knockoff, cfg.grid_size)[0]
            for k, v in enumerate(views)
        ]
        w = osff_product(stats).W
        mask = np.array([m not in truth for m in range(cfg.M)], dtype=bool)
        return w, mask

    return sample
