"""Group-lasso regularization paths over augmented knockoff designs.

The fitted objective is

    sum_i loss_i(y_i, beta0 + x_i' beta) + lambda * sum_m ||beta_{G_m}||_2

with loss the unscaled residual sum of squares for the gaussian family and
twice the binomial negative log-likelihood for the binomial family, so the
smooth gradient is -2 X'(y - mu) in both cases. The design is [X, Xtilde]
with each original group and its knockoff group penalized as separate blocks;
the intercept and any adjustment columns stay unpenalized.

Per-group entry statistics: Z_m is the largest grid value of lambda at which
group m's coefficient block is nonzero (Euclidean norm above 1e-8), and
Ztilde_m the same for its knockoff block.

Implementation note: the solver is a block-separable proximal gradient
iteration (FISTA with backtracking) whose arithmetic is exactly symmetric in
each original/knockoff block pair. Residuals accumulate original and knockoff
contributions pairwise per column slot before any cross-column reduction,
every inner product in the line-search test folds each block pair before
reducing across columns, and all block-level quantities are computed from
within-block slices only. Swapping a group's columns with its knockoff's
therefore swaps every intermediate float bit-for-bit, which makes the
resulting (Z, Ztilde) exactly exchange under group swaps when the grid is
held fixed.

The grid loop stops once every original and every knockoff block has been
active at some grid value: entry statistics record only the first activation,
so later grid points cannot change them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Family
from .errors import ConvergenceError, DataError, DimensionError

ACTIVITY_TOL = 1e-8
UPDATE_TOL = 1e-7
MAX_SWEEPS = 10000


@dataclass(frozen=True)
class LambdaGrid:
    """A strictly decreasing, positive penalty grid with at least 20 points."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise DimensionError("grid values must be one-dimensional")
        if v.shape[0] < 20:
            raise DataError("a lambda grid needs at least 20 points")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise DataError("grid values must be positive and finite")
        if not np.all(np.diff(v) < 0):
            raise DataError("grid values must be strictly decreasing")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class PathStatistics:
    """Entry statistics (Z, Ztilde) for one dataset on one grid."""

    Z: np.ndarray
    Ztilde: np.ndarray
    grid: LambdaGrid
    dataset_id: str
    group_names: tuple

    def __post_init__(self):
        z = np.asarray(self.Z, dtype=float).copy()
        zt = np.asarray(self.Ztilde, dtype=float).copy()
        if z.shape != zt.shape or z.ndim != 1:
            raise DimensionError("Z and Ztilde must be equally long vectors")
        if len(self.group_names) != z.shape[0]:
            raise DimensionError("one group name per Z entry required")
        if np.any(z < 0) or np.any(zt < 0):
            raise DataError("entry statistics are nonnegative")
        z.setflags(write=False)
        zt.setflags(write=False)
        object.__setattr__(self, "Z", z)
        object.__setattr__(self, "Ztilde", zt)
        object.__setattr__(self, "group_names", tuple(self.group_names))


class _Problem:
    """Augmented design split into swap-symmetric segments.

    A1: grouped original columns (group-major), A2: their knockoffs in the
    same layout, A3: ungrouped adjustment columns. Blocks are contiguous
    slices of the group-major axis.
    """

    def __init__(self, view, knockoffs):
        xt = np.asarray(knockoffs.Xtilde, dtype=float)
        if xt.shape != view.X.shape:
            raise DimensionError("knockoff matrix shape differs from X")
        part = view.partition
        order = list(part.grouped)
        self.A1 = np.ascontiguousarray(view.X[:, order])
        self.A2 = np.ascontiguousarray(xt[:, order])
        self.A3 = np.ascontiguousarray(view.X[:, list(part.ungrouped)])
        self.y = np.asarray(view.y, dtype=float)
        self.family = view.family
        self.n = view.X.shape[0]
        self.pg = self.A1.shape[1]
        self.pu = self.A3.shape[1]
        sizes = np.array([len(g) for g in part.groups], dtype=int)
        self.sizes = sizes
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
        self.M = sizes.shape[0]

        # Per-block spectral bounds; their pairwise-folded sum upper-bounds
        # the gradient Lipschitz constant and is invariant under group swaps.
        lip1 = np.empty(self.M)
        lip2 = np.empty(self.M)
        for m in range(self.M):
            sl = self._slice(m)
            lip1[m] = 2.0 * self._lmax(self.A1[:, sl])
            lip2[m] = 2.0 * self._lmax(self.A2[:, sl])
        lip3 = 2.0 * self._lmax(self.A3) if self.pu else 0.0
        total = float(np.sum(lip1 + lip2)) + lip3 + 2.0 * self.n
        # The largest single-block bound is a lower bound on the true constant
        # and seeds the backtracking search; the block sum is a guaranteed cap.
        start = max(
            float(np.max(np.maximum(lip1, lip2))) if self.M else 0.0,
            lip3, 2.0 * self.n,
        )
        if self.family is Family.BINOMIAL:
            total /= 4.0
            start /= 4.0
        if total <= 0 or not np.isfinite(total):
            raise DataError("design is identically zero; cannot fit a path")
        self.lipschitz = total
        self.lipschitz_start = start

    @staticmethod
    def _lmax(a):
        if a.shape[1] == 0:
            return 0.0
        gram = a.T @ a
        return float(np.linalg.eigvalsh((gram + gram.T) / 2.0)[-1])

    def _slice(self, m):
        return slice(self.offsets[m], self.offsets[m] + self.sizes[m])

    def eta(self, b1, b2, b3, b0, buf, buf2):
        """Linear predictor with pairwise original/knockoff accumulation."""
        np.multiply(self.A1, b1, out=buf)
        np.multiply(self.A2, b2, out=buf2)
        buf += buf2
        out = buf.sum(axis=1)
        if self.pu:
            out += self.A3 @ b3
        out += b0
        return out

    def mean(self, eta):
        return self.family.mean(eta)

    def block_norms(self, v):
        """Euclidean norm of each contiguous block of a group-major vector."""
        if self.pg == 0:
            return np.zeros(0)
        return np.sqrt(np.add.reduceat(v * v, self.offsets))


def smooth_loss(family, y, eta):
    """Unpenalized loss: RSS for gaussian, twice the NLL for binomial."""
    if family is Family.GAUSSIAN:
        r = y - eta
        return float(r @ r)
    return float(2.0 * np.sum(np.logaddexp(0.0, eta) - y * eta))


def smooth_gradient(family, y, eta):
    """Gradient of :func:`smooth_loss` in the linear predictor: -2 (y - mu)."""
    return -2.0 * (y - family.mean(eta))


def _null_fit(problem, max_iter=100):
    """Fit intercept plus adjustment columns only; returns (b0, b3, eta)."""

    n, pu = problem.n, problem.pu
    design = np.hstack([np.ones((n, 1)), problem.A3]) if pu else np.ones((n, 1))
    y = problem.y
    if problem.family is Family.GAUSSIAN:
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        eta = design @ coef
        return float(coef[0]), coef[1:].copy(), eta

    ybar = float(np.mean(y))
    if ybar in (0.0, 1.0):
        raise DataError("binomial outcome is constant; the model is degenerate")
    coef = np.zeros(design.shape[1])
    coef[0] = np.log(ybar / (1.0 - ybar))
    for _ in range(max_iter):
        eta = design @ coef
        mu = expit(eta)
        grad = design.T @ (y - mu)
        if np.max(np.abs(grad)) < 1e-10 * n:
            return float(coef[0]), coef[1:].copy(), eta
        v = mu * (1.0 - mu)
        hess = design.T @ (design * v[:, None])
        hess[np.diag_indices_from(hess)] += 1e-10
        coef = coef + np.linalg.solve(hess, grad)
    raise ConvergenceError("null model for the binomial family did not converge")


def _entry_bounds(problem, resid):
    """Per-block norms of the zero-coefficient gradient, original then
    knockoff: ||2 A_m' (y - mu0)||_2."""

    g1 = problem.A1.T @ resid
    g2 = problem.A2.T @ resid
    return 2.0 * problem.block_norms(g1), 2.0 * problem.block_norms(g2)


def default_grid(view, knockoffs, size=100, min_ratio=1e-3):
    """Log-spaced grid from the group-KKT entry bound down to its min_ratio.

    The head of the grid is the largest per-group entry bound at beta = 0
    (original and knockoff groups alike) after fitting the unpenalized
    intercept and adjustment columns; no group is active there.
    """

    problem = _Problem(view, knockoffs)
    grid, _ = _grid_from_problem(problem, size, min_ratio)
    return grid


def _grid_from_problem(problem, size, min_ratio):
    if not 0 < min_ratio < 1:
        raise DataError("min_ratio must lie in (0, 1)")
    b0, b3, eta0 = _null_fit(problem)
    resid = problem.y - problem.mean(eta0)
    bounds1, bounds2 = _entry_bounds(problem, resid)
    lam_max = float(np.max(np.maximum(bounds1, bounds2)))
    if not np.isfinite(lam_max) or lam_max <= 0:
        raise DataError(
            "entry bound is zero; the design carries no signal to path over"
        )
    exponents = np.linspace(0.0, np.log10(min_ratio), int(size))
    grid = LambdaGrid(values=lam_max * 10.0 ** exponents)
    return grid, (b0, b3)


def _pair_dot(u1, w1, u2, w2):
    """Inner product over a block pair, folded pairwise per column slot."""
    return float((u1 * w1 + u2 * w2).sum())


def _fista(problem, lam, state, lip, buf, buf2, update_tol, max_sweeps):
    """Backtracking FISTA at one penalty value, from a warm-start state.

    ``state`` is (b1, b2, b3, b0). Returns the new state and the adapted
    curvature estimate; raises :class:`ConvergenceError` (without payload) on
    budget exhaustion.
    """

    pg, pu = problem.pg, problem.pu
    b1, b2, b3, b0 = state
    y = problem.y
    cap = problem.lipschitz
    z1, z2, z3, z0 = b1.copy(), b2.copy(), b3.copy(), b0
    t_mom = 1.0
    for _sweep in range(max_sweeps):
        eta = problem.eta(z1, z2, z3, z0, buf, buf2)
        resid = y - problem.mean(eta)
        f_z = smooth_loss(problem.family, y, eta)
        g1 = problem.A1.T @ resid  # actual gradient is -2 * g
        g2 = problem.A2.T @ resid
        g3 = problem.A3.T @ resid if pu else b3
        g0 = float(np.sum(resid))

        # Backtracking: grow lip until the quadratic model at z majorizes
        # the loss at the prox point (guaranteed once lip reaches cap).
        # Every inner product folds each block pair before reducing.
        while True:
            step = 1.0 / lip
            shrink = step * lam
            v1 = z1 + (2.0 * step) * g1
            v2 = z2 + (2.0 * step) * g2
            nv1 = problem.block_norms(v1)
            nv2 = problem.block_norms(v2)
            with np.errstate(divide="ignore", invalid="ignore"):
                s1 = np.where(nv1 > shrink, 1.0 - shrink / nv1, 0.0)
                s2 = np.where(nv2 > shrink, 1.0 - shrink / nv2, 0.0)
            n1 = v1 * np.repeat(s1, problem.sizes)
            n2 = v2 * np.repeat(s2, problem.sizes)
            n3 = z3 + (2.0 * step) * g3 if pu else z3
            n0 = z0 + (2.0 * step) * g0
            if lip >= cap:
                break
            d1 = n1 - z1
            d2 = n2 - z2
            d0 = n0 - z0
            quad = _pair_dot(d1, d1, d2, d2) + d0 * d0
            lin = _pair_dot(g1, d1, g2, d2) + g0 * d0
            if pu:
                d3 = n3 - z3
                quad += float(d3 @ d3)
                lin += float(g3 @ d3)
            eta_new = problem.eta(n1, n2, n3, n0, buf, buf2)
            f_new = smooth_loss(problem.family, y, eta_new)
            bound = f_z - 2.0 * lin + 0.5 * lip * quad
            if f_new <= bound + 1e-12 * max(abs(f_z), 1.0):
                break
            lip = min(2.0 * lip, cap)

        delta = max(
            float(np.max(np.abs(n1 - b1))) if pg else 0.0,
            float(np.max(np.abs(n2 - b2))) if pg else 0.0,
            float(np.max(np.abs(n3 - b3))) if pu else 0.0,
            abs(n0 - b0),
        )

        # Momentum with gradient-mapping restart; the restart inner
        # product folds the block pair before reducing across columns.
        ip = _pair_dot(z1 - n1, n1 - b1, z2 - n2, n2 - b2)
        if pu:
            ip += float((z3 - n3) @ (n3 - b3))
        ip += (z0 - n0) * (n0 - b0)
        if ip > 0.0:
            t_next = 1.0
            z1, z2, z3, z0 = n1.copy(), n2.copy(), n3.copy(), n0
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
            w = (t_mom - 1.0) / t_next
            z1 = n1 + w * (n1 - b1)
            z2 = n2 + w * (n2 - b2)
            z3 = n3 + w * (n3 - b3) if pu else n3
            z0 = n0 + w * (n0 - b0)
        b1, b2, b3, b0 = n1, n2, n3, n0
        t_mom = t_next
        if delta < update_tol:
            return (b1, b2, b3, b0), lip
    raise ConvergenceError(
        f"group-lasso fit did not converge at lambda={lam:.6g} "
        f"within {max_sweeps} sweeps"
    )


def _solve_path(problem, grid, update_tol=UPDATE_TOL, max_sweeps=MAX_SWEEPS,
                start=None):
    """Backtracking FISTA down the grid with warm starts.

    Returns (T x M) arrays of final block norms for the original and knockoff
    blocks at each grid value. Once every block has been active at some grid
    value the remaining rows stay zero (first activations are already fixed).
    """

    pg, pu, m_count = problem.pg, problem.pu, problem.M
    state = (np.zeros(pg), np.zeros(pg), np.zeros(pu), 0.0)
    if start is not None:
        state = (state[0], state[1], np.array(start[1], dtype=float),
                 float(start[0]))

    lip = problem.lipschitz_start
    buf = np.empty_like(problem.A1)
    buf2 = np.empty_like(problem.A2)
    t_vals = grid.values
    norms1 = np.zeros((t_vals.shape[0], m_count))
    norms2 = np.zeros((t_vals.shape[0], m_count))
    entered1 = np.zeros(m_count, dtype=bool)
    entered2 = np.zeros(m_count, dtype=bool)

    for ti, lam in enumerate(t_vals):
        lip = max(problem.lipschitz_start, 0.5 * lip)
        try:
            state, lip = _fista(problem, lam, state, lip, buf, buf2,
                                update_tol, max_sweeps)
        except ConvergenceError as exc:
            raise ConvergenceError(
                str(exc),
                payload={
                    "lambda": float(lam),
                    "grid_index": int(ti),
                    "norms1": norms1[:ti].copy(),
                    "norms2": norms2[:ti].copy(),
                },
            ) from None
        norms1[ti] = problem.block_norms(state[0])
        norms2[ti] = problem.block_norms(state[1])
        entered1 |= norms1[ti] > ACTIVITY_TOL
        entered2 |= norms2[ti] > ACTIVITY_TOL
        if entered1.all() and entered2.all():
            break
    return norms1, norms2


def _entries_from_norms(norms, grid, tol=ACTIVITY_TOL):
    active = norms > tol
    z = np.zeros(norms.shape[1])
    for m in range(norms.shape[1]):
        hits = np.nonzero(active[:, m])[0]
        if hits.size:
            z[m] = grid.values[hits[0]]
    return z


def group_lasso_path(view, knockoffs, grid=None, grid_size=100, min_ratio=1e-3,
                     update_tol=UPDATE_TOL, max_sweeps=MAX_SWEEPS):
    """Fit the penalized path on [X, Xtilde] and extract entry statistics.

    Parameters
    ----------
    view : DatasetView
        Dataset (already standardized if that is wanted).
    knockoffs : KnockoffOutput
        Knockoff design aligned with ``view.X``.
    grid : LambdaGrid, optional
        Penalty grid; computed by :func:`default_grid` when omitted.
    grid_size, min_ratio : int, float
        Default grid shape parameters (ignored when ``grid`` is given).

    Returns
    -------
    PathStatistics
        Per-group entry values Z (original) and Ztilde (knockoff).
    """

    problem = _Problem(view, knockoffs)
    start = None
    if grid is None:
        grid, start = _grid_from_problem(problem, grid_size, min_ratio)
    norms1, norms2 = _solve_path(
        problem, grid, update_tol=update_tol, max_sweeps=max_sweeps, start=start
    )
    z = _entries_from_norms(norms1, grid)
    zt = _entries_from_norms(norms2, grid)
    return PathStatistics(
        Z=z,
        Ztilde=zt,
        grid=grid,
        dataset_id=view.dataset_id,
        group_names=view.partition.names,
    )


@dataclass(frozen=True)
class FitResult:
    """Coefficients of one penalized fit, mapped back to column order.

    ``beta`` covers the original design's columns (adjustment columns
    included); ``beta_tilde`` covers the knockoff copies, zero on adjustment
    positions (they have no knockoffs).
    """

    lam: float
    intercept: float
    beta: np.ndarray
    beta_tilde: np.ndarray


def group_lasso_fit(view, knockoffs, lam, update_tol=UPDATE_TOL,
                    max_sweeps=MAX_SWEEPS):
    """Fit the penalized objective at a single penalty value.

    ``lam`` may be zero, in which case this is the unpenalized fit (exact
    least squares or logistic regression on [X, Xtilde] plus intercept).
    """

    lam = float(lam)
    if lam < 0 or not np.isfinite(lam):
        raise DataError(f"lambda must be finite and nonnegative, got {lam}")
    problem = _Problem(view, knockoffs)
    b0, b3, _ = _null_fit(problem)
    state = (np.zeros(problem.pg), np.zeros(problem.pg), b3, b0)
    buf = np.empty_like(problem.A1)
    buf2 = np.empty_like(problem.A2)
    state, _ = _fista(problem, lam, state, problem.lipschitz_start, buf, buf2,
                      update_tol, max_sweeps)
    b1, b2, b3, b0 = state

    part = view.partition
    order = list(part.grouped)
    beta = np.zeros(part.p)
    beta_tilde = np.zeros(part.p)
    beta[order] = b1
    beta_tilde[order] = b2
    beta[list(part.ungrouped)] = b3
    return FitResult(lam=lam, intercept=float(b0), beta=beta,
                     beta_tilde=beta_tilde)
