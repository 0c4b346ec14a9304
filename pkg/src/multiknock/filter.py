"""Combining per-dataset statistics and selecting groups with FDR control.

The combined statistic is the product W_m = prod_k (Z_m^k - Ztilde_m^k).
Swapping one group's original and knockoff columns in any single dataset
flips the sign of exactly that group's W (the factor negates, the product
negates). Under the null the signs of W_m are symmetric, which is what the
data-dependent threshold exploits:

    tau  = min { t > 0 : #{W_m <= -t} / max(#{W_m >= t}, 1) <= q }

with the plus rule adding 1 to the numerator. Selected groups are those with
W_m >= tau; W_m = 0 is never selected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DataError, DimensionError

KNOCKOFF_PLUS_OFFSET = 1


@dataclass(frozen=True)
class FilterStatistics:
    """Combined per-group statistics W with their provenance."""

    W: np.ndarray
    group_names: tuple
    site_ids: tuple
    combination: str = "product"

    def __post_init__(self):
        w = np.asarray(self.W, dtype=float).copy()
        if w.ndim != 1:
            raise DimensionError("W must be a vector")
        if not np.all(np.isfinite(w)):
            raise DataError("W contains non-finite entries")
        if len(self.group_names) != w.shape[0]:
            raise DimensionError("one group name per W entry required")
        w.setflags(write=False)
        object.__setattr__(self, "W", w)
        object.__setattr__(self, "group_names", tuple(self.group_names))
        object.__setattr__(self, "site_ids", tuple(self.site_ids))


@dataclass(frozen=True)
class SelectionResult:
    """Outcome of thresholding: tau, the selected groups, and the inputs."""

    q: float
    plus: bool
    tau: float
    selected: tuple
    group_names: tuple
    W: np.ndarray

    def selected_names(self):
        return tuple(self.group_names[m] for m in self.selected)


def osff_product(stats, name_order=None):
    """Product combination of per-dataset (Z - Ztilde) differences.

    ``stats`` is a sequence of objects carrying ``Z``, ``Ztilde``,
    ``group_names`` and ``dataset_id`` (path statistics or site summaries).
    Groups are aligned by name; a mismatch in the name sets raises
    :class:`AlignmentError` listing the difference. Factors multiply in a
    canonical order (sorted by dataset id), so the result does not depend on
    the order the inputs are handed in.
    """

    stats = list(stats)
    if not stats:
        raise DataError("need at least one dataset to combine")
    if name_order is None:
        name_order = tuple(stats[0].group_names)
    base = set(name_order)
    if len(base) != len(name_order):
        raise AlignmentError("group names must be unique")
    for s in stats:
        names = set(s.group_names)
        if names != base:
            diff = sorted(base.symmetric_difference(names))
            raise AlignmentError(
                f"group names of dataset {s.dataset_id!r} do not match: "
                f"difference {diff}"
            )
    ordered = sorted(stats, key=lambda s: (str(s.dataset_id), tuple(s.group_names)))
    w = np.ones(len(name_order))
    for s in ordered:
        pos = {name: i for i, name in enumerate(s.group_names)}
        perm = [pos[name] for name in name_order]
        z = np.asarray(s.Z, dtype=float)[perm]
        zt = np.asarray(s.Ztilde, dtype=float)[perm]
        w = w * (z - zt)
    return FilterStatistics(
        W=w,
        group_names=tuple(name_order),
        site_ids=tuple(str(s.dataset_id) for s in ordered),
    )


def group_swap(arr, groups, partition):
    """Exchange original and knockoff columns for the given groups.

    ``arr`` has final axis length 2p laid out as [original, knockoff]; for
    every column j of every group in ``groups``, entries j and p + j are
    exchanged. Applying the same swap twice returns the input.
    """

    arr = np.asarray(arr)
    p = partition.p
    if arr.shape[-1] != 2 * p:
        raise DimensionError(f"last axis must have length 2p = {2 * p}")
    groups = sorted(set(int(m) for m in groups))
    for m in groups:
        if not 0 <= m < partition.M:
            raise DataError(f"group index {m} out of range")
    cols = [j for m in groups for j in partition.groups[m]]
    out = arr.copy()
    out[..., cols], out[..., [p + j for j in cols]] = (
        arr[..., [p + j for j in cols]],
        arr[..., cols],
    )
    return out


def threshold(stats, q, plus=False):
    """Data-dependent selection threshold at target level q.

    ``stats`` is a :class:`FilterStatistics` or a plain W vector. Candidate
    thresholds are the distinct positive magnitudes of W. When no candidate
    satisfies the bound, tau is infinite and nothing is selected. The plus
    rule's selection is always a subset of the plain rule's.
    """

    if isinstance(stats, FilterStatistics):
        w = stats.W
        names = stats.group_names
    else:
        w = np.asarray(stats, dtype=float)
        if w.ndim != 1:
            raise DimensionError("W must be a vector")
        if not np.all(np.isfinite(w)):
            raise DataError("W contains non-finite entries")
        names = tuple(f"g{m:04d}" for m in range(w.shape[0]))
    if not 0 < q < 1:
        raise DataError(f"q must lie in (0, 1), got {q}")

    offset = KNOCKOFF_PLUS_OFFSET if plus else 0
    tau = np.inf
    for t in np.unique(np.abs(w[w != 0])):
        neg = int(np.sum(w <= -t))
        pos = int(np.sum(w >= t))
        if (offset + neg) / max(pos, 1) <= q:
            tau = float(t)
            break
    selected = tuple(int(m) for m in np.nonzero(w >= tau)[0]) if np.isfinite(tau) else ()
    return SelectionResult(
        q=float(q),
        plus=bool(plus),
        tau=tau,
        selected=selected,
        group_names=names,
        W=w.copy(),
    )


@dataclass(frozen=True)
class SignSymmetrySummary:
    """Per-null-group sign balance of W across replications."""

    replications: int
    nonzero: np.ndarray   # count of nonzero W per group over its null reps
    fraction_positive: np.ndarray  # among nonzero W; NaN when none observed
    ci_half_width: np.ndarray      # 3 * sqrt(0.25 / nonzero)
    covers_half: np.ndarray        # |fraction - 1/2| <= half width

    def worst_deviation(self):
        dev = np.abs(self.fraction_positive - 0.5)
        return float(np.nanmax(dev)) if np.any(self.nonzero > 0) else float("nan")


def sign_symmetry_test(replications, null_generator, n_sigma=3.0):
    """Monte Carlo check that null W signs are symmetric.

    ``null_generator`` maps a replication index to ``(W, null_mask)`` where
    ``null_mask`` flags the groups that are null in that replication. Only
    null groups enter the summary; a non-null group is excluded for the
    replications where it carries signal. The returned summary reports the
    per-group fraction of positive W among nonzero draws with a binomial
    confidence band around 1/2.
    """

    if replications <= 0:
        raise DataError("replications must be positive")
    pos = None
    nonzero = None
    for rep in range(replications):
        w, null_mask = null_generator(rep)
        w = np.asarray(w, dtype=float)
        null_mask = np.asarray(null_mask, dtype=bool)
        if pos is None:
            pos = np.zeros(w.shape[0])
            nonzero = np.zeros(w.shape[0])
        take = null_mask & (w != 0)
        pos += take & (w > 0)
        nonzero += take
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(nonzero > 0, pos / np.maximum(nonzero, 1), np.nan)
        half = n_sigma * np.sqrt(0.25 / np.maximum(nonzero, 1))
        half = np.where(nonzero > 0, half, np.nan)
    covers = np.where(nonzero > 0, np.abs(frac - 0.5) <= half, True)
    return SignSymmetrySummary(
        replications=replications,
        nonzero=nonzero,
        fraction_positive=frac,
        ci_half_width=half,
        covers_half=covers.astype(bool),
    )
