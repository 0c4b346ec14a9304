"""Dataset model: column groups, outcome families, CSV ingestion, scaling.

A dataset is an (X, y) pair plus a :class:`GroupPartition` naming disjoint
column groups. Categorical predictors are dummy coded at load time (L levels
become L-1 indicator columns; the reference is the most frequent level), and
the dummies of one categorical always travel together inside one group.
Columns left out of every group are adjustment covariates: they are carried
through fits unpenalized, never receive knockoffs, and are never selectable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
import jsonschema
from scipy.special import expit

from .errors import (
    DataError,
    DegenerateColumnError,
    DimensionError,
    FormatError,
    ParseError,
    SchemaError,
)

_MISSING_TOKENS = {"", "NA", "NaN", "nan", "N/A", "null", "NULL"}


class Family(str, Enum):
    """Outcome family: identity-link gaussian or logit-link binomial."""

    GAUSSIAN = "gaussian"
    BINOMIAL = "binomial"

    def mean(self, eta):
        """Inverse link applied to the linear predictor."""
        if self is Family.GAUSSIAN:
            return eta
        return expit(eta)

    def validate_y(self, y):
        y = np.asarray(y, dtype=float)
        if y.ndim != 1:
            raise DimensionError("outcome must be one-dimensional")
        if not np.all(np.isfinite(y)):
            raise DataError("outcome contains missing or non-finite values")
        if self is Family.BINOMIAL and not np.all(np.isin(y, (0.0, 1.0))):
            bad = y[~np.isin(y, (0.0, 1.0))][0]
            raise DataError(
                f"binomial outcome must take values in {{0, 1}}, found {bad!r}"
            )
        return y

    @classmethod
    def parse(cls, name):
        try:
            return cls(str(name).lower())
        except ValueError:
            raise SchemaError(
                f"unknown family {name!r}; expected 'gaussian' or 'binomial'"
            ) from None


@dataclass(frozen=True)
class ColumnInfo:
    """Metadata for one column of the expanded design.

    ``kind`` is ``"continuous"`` or ``"dummy"``. Dummy columns record the
    originating categorical in ``parent`` and the encoded level in ``level``.
    """

    name: str
    kind: str = "continuous"
    parent: str | None = None
    level: str | None = None


@dataclass(frozen=True)
class GroupPartition:
    """Disjoint groups of column indices over a p-column design.

    Parameters
    ----------
    groups : tuple of tuple of int
        Column indices per group. Groups must be nonempty and disjoint;
        indices outside every group denote adjustment columns.
    p : int
        Total number of columns in the design the partition refers to.
    names : tuple of str
        One unique name per group, used to align statistics across datasets.
    """

    groups: tuple
    p: int
    names: tuple

    def __post_init__(self):
        groups = tuple(tuple(int(j) for j in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "names", tuple(str(s) for s in self.names))
        if len(groups) == 0:
            raise DataError("a partition needs at least one group")
        if len(self.names) != len(groups):
            raise DataError("one name per group required")
        if len(set(self.names)) != len(self.names):
            raise DataError("group names must be unique")
        seen = set()
        for name, g in zip(self.names, groups):
            if len(g) == 0:
                raise DataError(f"group {name!r} is empty")
            for j in g:
                if not 0 <= j < self.p:
                    raise DimensionError(
                        f"group {name!r} references column {j} outside [0, {self.p})"
                    )
                if j in seen:
                    raise DataError(f"column {j} appears in more than one group")
                seen.add(j)

    @property
    def M(self):
        return len(self.groups)

    @property
    def grouped(self):
        """All grouped column indices, in group-major order."""
        return tuple(j for g in self.groups for j in g)

    @property
    def ungrouped(self):
        covered = set(self.grouped)
        return tuple(j for j in range(self.p) if j not in covered)

    def group_of(self):
        """Mapping column index -> group index (grouped columns only)."""
        out = {}
        for m, g in enumerate(self.groups):
            for j in g:
                out[j] = m
        return out

    @classmethod
    def singleton(cls, p, names=None):
        """Each column its own group."""
        if names is None:
            names = tuple(f"g{j:04d}" for j in range(p))
        return cls(tuple((j,) for j in range(p)), p, tuple(names))

    @classmethod
    def contiguous(cls, n_groups, group_size, names=None):
        """``n_groups`` consecutive blocks of ``group_size`` columns."""
        p = n_groups * group_size
        groups = tuple(
            tuple(range(m * group_size, (m + 1) * group_size))
            for m in range(n_groups)
        )
        if names is None:
            names = tuple(f"g{m:04d}" for m in range(n_groups))
        return cls(groups, p, tuple(names))


_SPEC_SCHEMA = {
    "type": "object",
    "required": ["groups", "outcome", "family"],
    "additionalProperties": False,
    "properties": {
        "groups": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["name", "columns"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "columns": {
                        "type": "array",
                        "minItems": 1,
                        "items": {"type": "string", "minLength": 1},
                    },
                },
            },
        },
        "outcome": {"type": "string", "minLength": 1},
        "family": {"enum": ["gaussian", "binomial"]},
        "columns": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["type"],
                "additionalProperties": False,
                "properties": {
                    "type": {"enum": ["continuous", "categorical"]},
                    "levels": {
                        "type": "array",
                        "minItems": 2,
                        "items": {"type": "string"},
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True)
class DatasetSpec:
    """Parsed partition-spec document.

    ``groups`` maps group names to source-column name tuples; ``levels`` maps
    each declared categorical column to its level labels. Columns that are
    not declared are continuous.
    """

    outcome: str
    family: Family
    groups: tuple  # ((name, (col, ...)), ...)
    levels: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"partition spec is not valid JSON: {exc}") from None
        try:
            jsonschema.validate(doc, _SPEC_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise SchemaError(f"partition spec violates schema: {exc.message}") from None
        names = [g["name"] for g in doc["groups"]]
        if len(set(names)) != len(names):
            raise SchemaError("group names must be unique")
        seen = {}
        for g in doc["groups"]:
            for c in g["columns"]:
                if c in seen:
                    raise SchemaError(
                        f"column {c!r} listed in groups {seen[c]!r} and {g['name']!r}"
                    )
                seen[c] = g["name"]
        if doc["outcome"] in seen:
            raise SchemaError("outcome column cannot be a group member")
        levels = {}
        for col, meta in doc.get("columns", {}).items():
            if meta["type"] == "categorical":
                if "levels" not in meta:
                    raise SchemaError(f"categorical column {col!r} must declare levels")
                lv = [str(s) for s in meta["levels"]]
                if len(set(lv)) != len(lv):
                    raise SchemaError(f"column {col!r} has duplicate levels")
                levels[col] = tuple(lv)
        return cls(
            outcome=doc["outcome"],
            family=Family.parse(doc["family"]),
            groups=tuple((g["name"], tuple(g["columns"])) for g in doc["groups"]),
            levels=levels,
        )

    @classmethod
    def from_file(cls, path):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise FormatError(f"cannot read partition spec {path}: {exc}") from None
        return cls.from_json(text)


@dataclass(frozen=True)
class DatasetView:
    """Immutable (X, y) pair with its partition and column metadata.

    Invariants enforced at construction: X and y finite, binomial outcomes in
    {0, 1}, dummy blocks one-hot by parent (row sums 0 or 1, entries 0/1),
    partition dimension matching X.
    """

    X: np.ndarray
    y: np.ndarray
    family: Family
    partition: GroupPartition
    columns: tuple
    dataset_id: str = "d0"

    def __post_init__(self):
        X = np.ascontiguousarray(np.asarray(self.X, dtype=float))
        y = self.family.validate_y(self.y)
        if X.ndim != 2:
            raise DimensionError("X must be a 2-d array")
        if X.shape[0] != y.shape[0]:
            raise DimensionError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if not np.all(np.isfinite(X)):
            raise DataError("X contains missing or non-finite values")
        if self.partition.p != X.shape[1]:
            raise DimensionError(
                f"partition covers {self.partition.p} columns, X has {X.shape[1]}"
            )
        if len(self.columns) != X.shape[1]:
            raise DimensionError("one ColumnInfo per column required")
        X.setflags(write=False)
        y = y.copy()
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "columns", tuple(self.columns))
        self._check_one_hot(X)

    def _check_one_hot(self, X):
        for parent, idx in self.dummy_blocks().items():
            block = X[:, idx]
            if not np.all(np.isin(block, (0.0, 1.0))):
                raise DataError(f"dummy block for {parent!r} has entries outside 0/1")
            sums = block.sum(axis=1)
            if not np.all(np.isin(sums, (0.0, 1.0))):
                raise DataError(
                    f"dummy block for {parent!r} has rows with several levels set"
                )

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def dummy_blocks(self):
        """Mapping categorical parent name -> tuple of its dummy column indices."""
        out = {}
        for j, info in enumerate(self.columns):
            if info.kind == "dummy":
                out.setdefault(info.parent, []).append(j)
        return {k: tuple(v) for k, v in out.items()}

    def continuous_indices(self):
        return tuple(
            j for j, info in enumerate(self.columns) if info.kind == "continuous"
        )

    def column_names(self):
        return tuple(info.name for info in self.columns)

    def with_design(self, X, dataset_id=None):
        """Copy of this view with a replaced design matrix."""
        return replace(
            self, X=X, dataset_id=self.dataset_id if dataset_id is None else dataset_id
        )


@dataclass(frozen=True)
class StandardizationRecord:
    """Per-column centering and scaling applied by :func:`standardize`."""

    columns: tuple
    means: np.ndarray
    scales: np.ndarray

    def as_dict(self):
        return {
            c: (float(m), float(s))
            for c, m, s in zip(self.columns, self.means, self.scales)
        }


def standardize(view):
    """Center and scale continuous predictor columns to mean 0, sd 1.

    Dummy columns and the outcome are left untouched. The sample standard
    deviation (ddof=1) is used. Returns the transformed view and a record of
    the applied affine maps.

    Raises
    ------
    DegenerateColumnError
        If a continuous column has zero (or undefined) sample variance.
    """

    idx = view.continuous_indices()
    X = np.array(view.X, dtype=float)
    names = []
    means = []
    scales = []
    for j in idx:
        col = X[:, j]
        mu = float(np.mean(col))
        sd = float(np.std(col, ddof=1)) if col.shape[0] > 1 else 0.0
        if not np.isfinite(sd) or sd <= 0.0:
            raise DegenerateColumnError(
                f"column {view.columns[j].name!r} has no variation; cannot standardize"
            )
        X[:, j] = (col - mu) / sd
        names.append(view.columns[j].name)
        means.append(mu)
        scales.append(sd)
    record = StandardizationRecord(
        columns=tuple(names),
        means=np.asarray(means, dtype=float),
        scales=np.asarray(scales, dtype=float),
    )
    return view.with_design(X), record


def _parse_float(cell, line, colname):
    txt = cell.strip()
    if txt in _MISSING_TOKENS:
        raise DataError(f"missing value at line {line}, column {colname!r}")
    try:
        val = float(txt)
    except ValueError:
        raise ParseError(
            f"cannot parse {cell!r} as a number at line {line}, column {colname!r}"
        ) from None
    if not np.isfinite(val):
        raise DataError(f"non-finite value at line {line}, column {colname!r}")
    return val


def load_dataset(path, spec, dataset_id=None):
    """Load a CSV file against a :class:`DatasetSpec`.

    The file must have a header row naming the outcome and every column the
    spec's groups mention; columns present in the file but absent from the
    groups become adjustment covariates. Categorical columns (declared in the
    spec with their level sets) are dummy coded with the most frequent level
    as reference. Missing values are rejected.

    Returns a :class:`DatasetView` whose partition maps the spec's groups to
    expanded column indices.
    """

    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read dataset {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path.name}: empty file") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise FormatError(f"{path.name}: duplicate header names {dupes}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) == 0:
                continue
            if len(row) != len(header):
                raise FormatError(
                    f"{path.name}: line {line_no} has {len(row)} fields, "
                    f"header has {len(header)}"
                )
            rows.append((line_no, row))
    if not rows:
        raise DataError(f"{path.name}: no data rows")

    pos = {name: k for k, name in enumerate(header)}
    group_cols = [c for _, cols in spec.groups for c in cols]
    missing = [c for c in group_cols + [spec.outcome] if c not in pos]
    if missing:
        raise SchemaError(f"{path.name}: required columns absent: {missing}")

    predictors = [h for h in header if h != spec.outcome]
    # Outcome parsed as numeric under both families.
    y = np.array(
        [_parse_float(row[pos[spec.outcome]], ln, spec.outcome) for ln, row in rows]
    )

    # First pass over categorical columns: tabulate levels, pick references.
    references = {}
    for col, levels in spec.levels.items():
        if col not in pos:
            continue
        counts = {lv: 0 for lv in levels}
        for ln, row in rows:
            cell = row[pos[col]].strip()
            if cell in _MISSING_TOKENS:
                raise DataError(f"missing value at line {ln}, column {col!r}")
            if cell not in counts:
                raise DataError(
                    f"level {cell!r} at line {ln} not among declared levels "
                    f"of column {col!r}"
                )
            counts[cell] += 1
        # Most frequent level is the reference; ties resolve to declaration order.
        references[col] = max(levels, key=lambda lv: (counts[lv], -levels.index(lv)))

    columns = []
    mats = []
    expanded = {}  # source column -> expanded index tuple
    for col in predictors:
        if col in spec.levels:
            levels = spec.levels[col]
            ref = references[col]
            keep = [lv for lv in levels if lv != ref]
            block = np.zeros((len(rows), len(keep)))
            level_pos = {lv: k for k, lv in enumerate(keep)}
            for i, (ln, row) in enumerate(rows):
                cell = row[pos[col]].strip()
                if cell != ref:
                    block[i, level_pos[cell]] = 1.0
            start = sum(m.shape[1] for m in mats)
            expanded[col] = tuple(range(start, start + len(keep)))
            mats.append(block)
            columns.extend(
                ColumnInfo(name=f"{col}={lv}", kind="dummy", parent=col, level=lv)
                for lv in keep
            )
        else:
            vals = np.array(
                [_parse_float(row[pos[col]], ln, col) for ln, row in rows]
            )
            start = sum(m.shape[1] for m in mats)
            expanded[col] = (start,)
            mats.append(vals[:, None])
            columns.append(ColumnInfo(name=col, kind="continuous"))

    X = np.hstack(mats) if mats else np.empty((len(rows), 0))
    groups = tuple(
        tuple(j for c in cols for j in expanded[c]) for _, cols in spec.groups
    )
    partition = GroupPartition(
        groups=groups, p=X.shape[1], names=tuple(n for n, _ in spec.groups)
    )
    return DatasetView(
        X=X,
        y=y,
        family=spec.family,
        partition=partition,
        columns=tuple(columns),
        dataset_id=dataset_id if dataset_id is not None else path.stem,
    )


def export_design_csv(view, knockoffs, path):
    """Write the original and knockoff designs side by side as CSV.

    Column order: every original column under its own name, then one column
    per original named ``<name>.tilde`` holding the knockoff copy.
    """

    names = list(view.column_names())
    header = names + [f"{c}.tilde" for c in names]
    body = np.hstack([view.X, knockoffs])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in body:
            writer.writerow([repr(float(v)) for v in row])
