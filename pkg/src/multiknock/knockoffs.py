"""Group knockoff constructions.

Three constructions share one parameterization: a group-block-diagonal matrix
B with 0 <= B <= 2*Sigma (Loewner order), built as B_m = b_m * Sigma_{G_m,G_m}
for per-group scalars b_m in [0, 1].

* fixed design:  Xtilde = X (I - Sigma^-1 B) + Utilde C, with C'C =
  2B - B Sigma^-1 B and Utilde an n x p orthonormal block orthogonal to
  col(X). Then Xtilde'Xtilde = Sigma and Xtilde'X = Sigma - B exactly.
* second order (gaussian model): rows drawn from the conditional
  N(x - (x - mu) Sigma^-1 B, 2B - B Sigma^-1 B) with Sigma estimated.
* sequential: groups visited in order; each group's knockoff is sampled from
  a penalized regression model fitted on all other original columns plus the
  knockoffs generated so far.

Ungrouped (adjustment) columns get zero rows/columns in B, which makes every
construction copy them verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag
from scipy.optimize import minimize
from scipy.special import softmax

from .errors import (
    BlockSingularityError,
    ConvergenceError,
    DataError,
    DimensionError,
    FeasibilityError,
)

DEFAULT_RIDGE_FACTOR = 1e-8


def _symmetrize(a):
    return (a + a.T) / 2.0


@dataclass(frozen=True)
class GramMatrix:
    """A p x p Gram or covariance matrix with an optional diagonal ridge.

    ``sigma`` is stored as computed; ``sigma_work`` adds ``ridge`` on the
    diagonal and is what gets inverted. ``source`` records whether the matrix
    came from a fixed design (X'X) or a covariance estimate.
    """

    sigma: np.ndarray
    ridge: float = 0.0
    source: str = "fixed_design"

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise DimensionError("sigma must be square")
        s = _symmetrize(s)
        if not np.all(np.isfinite(s)):
            raise DataError("sigma has non-finite entries")
        if self.ridge < 0:
            raise DataError("ridge must be nonnegative")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @property
    def p(self):
        return self.sigma.shape[0]

    @property
    def sigma_work(self):
        if self.ridge == 0.0:
            return self.sigma
        return self.sigma + self.ridge * np.eye(self.p)

    @classmethod
    def from_design(cls, X, ridge=None):
        """Gram matrix X'X of a fixed design.

        With ``ridge=None`` a default ridge of 1e-8 * trace/p is applied only
        when the Gram is numerically singular; a well-conditioned design is
        kept exact so the fixed-construction identities hold to float
        precision.
        """

        X = np.asarray(X, dtype=float)
        sigma = _symmetrize(X.T @ X)
        w = np.linalg.eigvalsh(sigma)
        top = max(w[-1], 0.0)
        if w[0] < -1e-8 * max(top, 1.0):
            raise DataError("design Gram is not positive semidefinite")
        if ridge is None:
            ridge = 0.0
            if w[0] <= 1e-10 * max(top, 1.0):
                ridge = DEFAULT_RIDGE_FACTOR * np.trace(sigma) / max(sigma.shape[0], 1)
        return cls(sigma=sigma, ridge=float(ridge), source="fixed_design")

    @classmethod
    def from_covariance(cls, X, ridge=None):
        """Sample covariance of the rows of X, ridged by default."""

        X = np.asarray(X, dtype=float)
        if X.shape[0] < 2:
            raise DimensionError("need at least two rows to estimate a covariance")
        xc = X - X.mean(axis=0)
        sigma = _symmetrize(xc.T @ xc / (X.shape[0] - 1))
        if ridge is None:
            ridge = DEFAULT_RIDGE_FACTOR * np.trace(sigma) / max(sigma.shape[0], 1)
        return cls(sigma=sigma, ridge=float(ridge), source="estimated")


@dataclass(frozen=True)
class BlockDiagonalB:
    """Group-block-diagonal B = blockdiag(b_m * Sigma_{G_m,G_m}).

    ``scalars`` holds the per-group b_m, ``blocks`` the materialized blocks in
    partition order. Adjustment columns are implicit zero blocks.
    """

    scalars: tuple
    blocks: tuple
    method: str

    def assemble(self, partition):
        """Full p x p matrix with blocks placed at their group indices."""
        out = np.zeros((partition.p, partition.p))
        for g, blk in zip(partition.groups, self.blocks):
            out[np.ix_(g, g)] = blk
        return out

    def min_scalar(self):
        return min(self.scalars)


def _grouped_gram(gram, partition):
    """Feasibility Gram over grouped columns, group-major order.

    With adjustment columns present, B <= 2*Sigma for the full matrix is
    equivalent (Schur complement) to B_g <= 2*(Sigma_gg - Sigma_gu
    Sigma_uu^-1 Sigma_ug); without them the plain grouped submatrix.
    """

    sw = gram.sigma_work
    g_idx = list(partition.grouped)
    u_idx = list(partition.ungrouped)
    s_gg = sw[np.ix_(g_idx, g_idx)]
    if not u_idx:
        return _symmetrize(s_gg)
    s_uu = sw[np.ix_(u_idx, u_idx)]
    s_ug = sw[np.ix_(u_idx, g_idx)]
    try:
        solved = np.linalg.solve(s_uu, s_ug)
    except np.linalg.LinAlgError:
        raise BlockSingularityError(
            "adjustment-column Gram block is singular"
        ) from None
    return _symmetrize(s_gg - s_ug.T @ solved)


def _group_blocks(gram, partition):
    """Diagonal blocks Sigma_{G_m,G_m} of the working Gram, with their
    inverse square roots. Raises when a block is numerically singular."""

    sw = gram.sigma_work
    blocks = []
    isqrts = []
    for name, g in zip(partition.names, partition.groups):
        blk = _symmetrize(sw[np.ix_(g, g)])
        w, q = np.linalg.eigh(blk)
        if w[0] <= 1e-10 * max(w[-1], 1.0):
            raise BlockSingularityError(
                f"Gram block of group {name!r} is numerically singular"
            )
        isqrts.append(q @ ((1.0 / np.sqrt(w))[:, None] * q.T))
        blocks.append(blk)
    return blocks, isqrts


def equivariant_b(gram, partition):
    """Single-scalar B: b = min(1, 2 lambda_min(D Sigma D)).

    D is the block-diagonal matrix of within-group inverse square roots
    Sigma_{G_m,G_m}^(-1/2); the same scalar b applies to every group. The
    result satisfies 0 <= B <= 2*Sigma by construction.
    """

    blocks, isqrts = _group_blocks(gram, partition)
    s = _grouped_gram(gram, partition)
    d = block_diag(*isqrts)
    w = np.linalg.eigvalsh(_symmetrize(d @ s @ d))
    lam_min = float(w[0])
    if lam_min <= 0:
        raise FeasibilityError("grouped Gram is singular; no positive b exists")
    b = min(1.0, 2.0 * lam_min)
    return BlockDiagonalB(
        scalars=(b,) * partition.M,
        blocks=tuple(b * blk for blk in blocks),
        method="equivariant",
    )


def sdp_b(gram, partition, max_sweeps=500, obj_tol=1e-8):
    """Per-group scalars maximizing sum(b_m) subject to B <= 2*Sigma, b_m <= 1.

    Projected block-coordinate ascent: starting from the (feasible)
    equivariant solution, each sweep pushes every b_m to the largest feasible
    value by bisection on the minimum eigenvalue of 2*Sigma - B. Stops when a
    sweep improves the objective by less than ``obj_tol`` or after
    ``max_sweeps`` sweeps. The result is never worse than the equivariant
    objective.
    """

    blocks, _ = _group_blocks(gram, partition)
    s = _grouped_gram(gram, partition)
    two_s = 2.0 * s
    feas_tol = 1e-12 * max(1.0, float(np.linalg.eigvalsh(two_s)[-1]))

    # Block positions inside the group-major feasibility Gram.
    sizes = [len(g) for g in partition.groups]
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    def assemble_local(bvec):
        out = np.zeros_like(two_s)
        for m, blk in enumerate(blocks):
            sl = slice(offsets[m], offsets[m + 1])
            out[sl, sl] = bvec[m] * blk
        return out

    def min_eig(bvec):
        return float(np.linalg.eigvalsh(_symmetrize(two_s - assemble_local(bvec)))[0])

    b = np.full(partition.M, equivariant_b(gram, partition).scalars[0])
    b *= 1.0 - 1e-12  # guard against rounding right at the feasibility boundary
    if min_eig(b) < -feas_tol:
        b *= 0.5  # extremely ill-conditioned start; retreat to a safe point
        if min_eig(b) < -feas_tol:
            raise FeasibilityError("could not find a feasible starting point")

    for _ in range(max_sweeps):
        prev = b.sum()
        for m in range(partition.M):
            lo = b[m]
            hi = 1.0
            trial = b.copy()
            trial[m] = hi
            if min_eig(trial) >= -feas_tol:
                b[m] = hi
                continue
            while hi - lo > 1e-10:
                mid = (lo + hi) / 2.0
                trial[m] = mid
                if min_eig(trial) >= -feas_tol:
                    lo = mid
                else:
                    hi = mid
            b[m] = lo
        if b.sum() - prev < obj_tol:
            break

    return BlockDiagonalB(
        scalars=tuple(float(v) for v in b),
        blocks=tuple(v * blk for v, blk in zip(b, blocks)),
        method="sdp",
    )


@dataclass(frozen=True)
class KnockoffOutput:
    """A knockoff design plus how it was made.

    ``Xtilde`` has the same shape as X, adjustment columns copied verbatim.
    ``B`` is the block-diagonal parameter (None for the sequential
    construction, which has no B).
    """

    Xtilde: np.ndarray
    B: BlockDiagonalB | None
    method: str
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        xt = np.ascontiguousarray(np.asarray(self.Xtilde, dtype=float))
        xt.setflags(write=False)
        object.__setattr__(self, "Xtilde", xt)


def _psd_factor(mat, what):
    """Return F with F F' = mat for a PSD matrix, clipping tiny negatives."""
    w, q = np.linalg.eigh(_symmetrize(mat))
    scale = max(abs(float(w[-1])), 1.0)
    if w[0] < -1e-8 * scale:
        raise FeasibilityError(
            f"{what} is not positive semidefinite (min eigenvalue {w[0]:.3e}); "
            "reduce b"
        )
    return q * np.sqrt(np.clip(w, 0.0, None))


def fixed_knockoff(X, partition, B, seed):
    """Fixed-design group knockoffs.

    Requires n >= 2p and an invertible Gram. The output satisfies
    Xtilde'Xtilde = X'X and Xtilde'X = X'X - B up to float precision; both
    identities are verified to 1e-6 max-norm before returning.
    """

    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n < 2 * p:
        raise DimensionError(f"fixed construction needs n >= 2p (n={n}, p={p})")
    gram = GramMatrix.from_design(X)
    if gram.ridge > 0:
        raise BlockSingularityError(
            "design Gram is numerically singular; fixed construction unavailable"
        )
    sigma = gram.sigma
    b_full = B.assemble(partition)
    a = np.linalg.solve(sigma, b_full)  # Sigma^-1 B
    cc = _symmetrize(2.0 * b_full - b_full @ a)
    factor = _psd_factor(cc, "2B - B Sigma^-1 B")  # C = factor.T

    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, p))
    # QR of [X | g]: the trailing p columns of Q are orthonormal and
    # orthogonal to col(X) for any g, even one degenerate with X (e.g. when
    # the caller's data stream and the seed collide).
    q_joint, _ = np.linalg.qr(np.hstack([X, g]))
    utilde = q_joint[:, p:]

    xtilde = X - X @ a + utilde @ factor.T
    # B has zero rows/columns on adjustment positions, so those columns are
    # copies in exact arithmetic; enforce that, removing eigensolver fuzz.
    u_idx = list(partition.ungrouped)
    if u_idx:
        xtilde[:, u_idx] = X[:, u_idx]

    err_gram = np.max(np.abs(xtilde.T @ xtilde - sigma))
    err_cross = np.max(np.abs(xtilde.T @ X - (sigma - b_full)))
    if err_gram > 1e-6 or err_cross > 1e-6:
        raise FeasibilityError(
            f"construction identities violated (gram {err_gram:.2e}, "
            f"cross {err_cross:.2e}); design too ill-conditioned"
        )
    return KnockoffOutput(
        Xtilde=xtilde,
        B=B,
        method="fixed",
        seed=int(seed),
        meta={"gram_error": float(err_gram), "cross_error": float(err_cross)},
    )


def second_order_knockoff(X, partition, B, seed, gram=None):
    """Gaussian conditional knockoffs matching first and second moments.

    Rows are drawn independently from N(x - (x - mu) Sigma^-1 B,
    2B - B Sigma^-1 B) with mu and Sigma estimated from X unless a
    precomputed ``gram`` is supplied. The outcome is never consulted.
    """

    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if gram is None:
        gram = GramMatrix.from_covariance(X)
    if gram.p != p:
        raise DimensionError("covariance dimension does not match X")
    sw = gram.sigma_work
    b_full = B.assemble(partition)
    a = np.linalg.solve(sw, b_full)
    cond_cov = _symmetrize(2.0 * b_full - b_full @ a)
    factor = _psd_factor(cond_cov, "conditional covariance 2B - B Sigma^-1 B")
    mu = X.mean(axis=0)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n, p)) @ factor.T
    xtilde = X - (X - mu) @ a + noise
    u_idx = list(partition.ungrouped)
    if u_idx:
        xtilde[:, u_idx] = X[:, u_idx]
    return KnockoffOutput(
        Xtilde=xtilde, B=B, method="second-order", seed=int(seed), meta={}
    )


def _ridge_multitask(Z, Y, alpha):
    """Multi-response linear ridge with unpenalized intercept.

    Returns fitted values at Z and the coefficient matrix (intercept first).
    """

    n = Z.shape[0]
    design = np.hstack([np.ones((n, 1)), Z])
    pen = np.eye(design.shape[1]) * alpha
    pen[0, 0] = 0.0
    coef = np.linalg.solve(design.T @ design + pen, design.T @ Y)
    return design @ coef, coef


def _ridge_multinomial(Z, labels, n_classes, alpha, group_name):
    """Multinomial logistic ridge via L-BFGS; returns the coefficient matrix
    (rows: intercept then predictors; columns: classes)."""

    n, q = Z.shape
    design = np.hstack([np.ones((n, 1)), Z])
    y_onehot = np.zeros((n, n_classes))
    y_onehot[np.arange(n), labels] = 1.0

    def objective(wflat):
        w = wflat.reshape(q + 1, n_classes)
        logits = design @ w
        logits -= logits.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(logits).sum(axis=1))
        nll = float(logsumexp.sum() - (logits * y_onehot).sum())
        probs = softmax(logits, axis=1)
        grad = design.T @ (probs - y_onehot)
        nll += 0.5 * alpha * float((w[1:] ** 2).sum())
        grad[1:] += alpha * w[1:]
        return nll, grad.ravel()

    x0 = np.zeros((q + 1) * n_classes)
    res = minimize(objective, x0, jac=True, method="L-BFGS-B",
                   options={"maxiter": 500, "ftol": 1e-12, "gtol": 1e-8})
    if not res.success:
        # The line-search warning near a flat optimum is benign; a genuinely
        # unconverged fit still has a large gradient.
        gnorm = float(np.max(np.abs(res.jac)))
        if gnorm > 1e-3 * max(1.0, n):
            raise ConvergenceError(
                f"multinomial fit for group {group_name!r} did not converge "
                f"({res.message})",
                payload={"grad_norm": gnorm},
            )
    return res.x.reshape(q + 1, n_classes)


def sequential_knockoff(view, seed, penalty=None):
    """Sequential group knockoffs for mixed continuous/categorical groups.

    Groups are visited in partition order. For each group the continuous part
    is sampled from a multivariate normal fitted by ridge multi-task
    regression on all other original columns plus the knockoffs generated so
    far (residual covariance floored at 1e-6 I); each categorical parent is
    then sampled from a ridge multinomial logistic model evaluated at the
    knockoff continuous part. The ridge strength defaults to 1e-3 * n. The
    outcome is never consulted.
    """

    X = view.X
    n, p = X.shape
    alpha = (1e-3 * n) if penalty is None else float(penalty)
    rng = np.random.default_rng(seed)
    xtilde = np.array(X)  # adjustment columns stay verbatim

    dummy_blocks = view.dummy_blocks()
    group_of = view.partition.group_of()
    for parent, idx in dummy_blocks.items():
        owners = {group_of.get(j) for j in idx}
        if len(owners) != 1:
            raise DataError(
                f"dummies of categorical {parent!r} must live in a single group"
            )

    cont_set = set(view.continuous_indices())
    done = []  # knockoff columns already generated, group-major
    for m, (name, g) in enumerate(zip(view.partition.names, view.partition.groups)):
        g = list(g)
        in_group = set(g)
        others = [j for j in range(p) if j not in in_group]
        cont = [j for j in g if j in cont_set]
        parents = sorted(
            {view.columns[j].parent for j in g if view.columns[j].kind == "dummy"}
        )

        base = [X[:, others]] if others else []
        prev = [xtilde[:, done]] if done else []
        if cont:
            zfit = np.hstack(base + prev) if (base or prev) else np.empty((n, 0))
            mu_hat, _ = _ridge_multitask(zfit, X[:, cont], alpha)
            resid = X[:, cont] - mu_hat
            if len(cont) == 1:
                cov = np.atleast_2d(np.var(resid[:, 0], ddof=1))
            else:
                cov = np.cov(resid.T, ddof=1)
            w, q = np.linalg.eigh(_symmetrize(cov))
            w = np.clip(w, 1e-6, None)
            factor = q * np.sqrt(w)
            xtilde[:, cont] = mu_hat + rng.standard_normal((n, len(cont))) @ factor.T

        for parent in parents:
            idx = list(dummy_blocks[parent])
            block = X[:, idx]
            # Label 0..L-2 for the encoded levels, L-1 for the reference.
            labels = np.where(
                block.sum(axis=1) > 0, block.argmax(axis=1), len(idx)
            ).astype(int)
            n_classes = len(idx) + 1
            zcat_parts = ([X[:, cont]] if cont else []) + base + prev
            zfit = np.hstack(zcat_parts) if zcat_parts else np.empty((n, 0))
            coef = _ridge_multinomial(zfit, labels, n_classes, alpha, name)
            zpred_parts = ([xtilde[:, cont]] if cont else []) + base + prev
            zpred = np.hstack(zpred_parts) if zpred_parts else np.empty((n, 0))
            logits = np.hstack([np.ones((n, 1)), zpred]) @ coef
            probs = softmax(logits, axis=1)
            draws = (rng.random(n)[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)
            draws = np.minimum(draws, n_classes - 1)
            new_block = np.zeros((n, len(idx)))
            rows = np.where(draws < len(idx))[0]
            new_block[rows, draws[rows]] = 1.0
            xtilde[:, idx] = new_block

        done.extend(g)

    return KnockoffOutput(
        Xtilde=xtilde,
        B=None,
        method="sequential",
        seed=int(seed),
        meta={"penalty": alpha},
    )
