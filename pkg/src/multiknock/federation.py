"""Serialization for the federated workflow.

Sites exchange only per-group entry statistics. A site summary deliberately
has no field that can hold row-level data: the schema rejects unknown fields
and every array must have exactly one entry per group. Selection output is
canonical JSON (sorted keys, sorted group names), so combining the same
summaries in any file order produces byte-identical bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import jsonschema

from .errors import DataError, FormatError, SchemaError
from .filter import osff_product, threshold

FORMAT_VERSION = 1

SITE_SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["format_version", "site_id", "group_names", "Z", "Ztilde",
                 "construction"],
    "additionalProperties": False,
    "properties": {
        "format_version": {"const": FORMAT_VERSION},
        "site_id": {"type": "string", "minLength": 1},
        "group_names": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "string", "minLength": 1},
        },
        "Z": {"type": "array", "items": {"type": "number"}},
        "Ztilde": {"type": "array", "items": {"type": "number"}},
        "construction": {
            "type": "object",
            "required": ["method", "seed", "grid"],
            "additionalProperties": False,
            "properties": {
                "method": {"type": "string"},
                "seed": {"type": "integer"},
                "grid": {
                    "type": "object",
                    "required": ["size", "lambda_max", "lambda_min"],
                    "additionalProperties": False,
                    "properties": {
                        "size": {"type": "integer", "minimum": 20},
                        "lambda_max": {"type": "number"},
                        "lambda_min": {"type": "number"},
                    },
                },
            },
        },
    },
}


@dataclass(frozen=True, eq=False)
class SiteSummary:
    """Per-site exchange payload: group names plus (Z, Ztilde) and how they
    were produced. Contains nothing with one entry per observation."""

    site_id: str
    group_names: tuple
    Z: np.ndarray
    Ztilde: np.ndarray
    construction: dict
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        z = np.asarray(self.Z, dtype=float).copy()
        zt = np.asarray(self.Ztilde, dtype=float).copy()
        names = tuple(self.group_names)
        if z.shape != (len(names),) or zt.shape != (len(names),):
            raise SchemaError(
                "Z and Ztilde must each have exactly one entry per group"
            )
        if len(set(names)) != len(names):
            raise SchemaError("group names must be unique")
        z.setflags(write=False)
        zt.setflags(write=False)
        object.__setattr__(self, "Z", z)
        object.__setattr__(self, "Ztilde", zt)
        object.__setattr__(self, "group_names", names)

    def __eq__(self, other):
        if not isinstance(other, SiteSummary):
            return NotImplemented
        return self.to_document() == other.to_document()

    # osff_product expects a dataset_id attribute.
    @property
    def dataset_id(self):
        return self.site_id

    @classmethod
    def from_statistics(cls, stats, site_id=None, method="unknown", seed=0):
        grid = stats.grid
        return cls(
            site_id=str(site_id if site_id is not None else stats.dataset_id),
            group_names=tuple(stats.group_names),
            Z=stats.Z,
            Ztilde=stats.Ztilde,
            construction={
                "method": str(method),
                "seed": int(seed),
                "grid": {
                    "size": int(grid.size),
                    "lambda_max": float(grid.values[0]),
                    "lambda_min": float(grid.values[-1]),
                },
            },
        )

    def to_document(self):
        return {
            "format_version": self.format_version,
            "site_id": self.site_id,
            "group_names": list(self.group_names),
            "Z": [float(v) for v in self.Z],
            "Ztilde": [float(v) for v in self.Ztilde],
            "construction": self.construction,
        }

    def to_json(self):
        return json.dumps(self.to_document(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text, source="<string>"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{source}: not valid JSON: {exc}") from None
        if isinstance(doc, dict) and doc.get("format_version") != FORMAT_VERSION:
            raise FormatError(
                f"{source}: unsupported format_version "
                f"{doc.get('format_version')!r}; this build reads version "
                f"{FORMAT_VERSION}"
            )
        try:
            jsonschema.validate(doc, SITE_SUMMARY_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise SchemaError(f"{source}: summary violates schema: {exc.message}")
        return cls(
            site_id=doc["site_id"],
            group_names=tuple(doc["group_names"]),
            Z=np.asarray(doc["Z"], dtype=float),
            Ztilde=np.asarray(doc["Ztilde"], dtype=float),
            construction=doc["construction"],
        )

    def write(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def read(cls, path):
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise FormatError(f"cannot read summary {path}: {exc}") from None
        return cls.from_json(text, source=path.name)


def combine_summaries(summaries, q, plus=False):
    """Align summaries by group name, combine, and threshold.

    Input order never matters: summaries are sorted by site id (ties by
    content) and groups are aligned on lexicographically sorted names before
    the product is taken.
    """

    summaries = sorted(summaries, key=lambda s: (s.site_id, s.to_json()))
    if not summaries:
        raise DataError("need at least one summary to combine")
    name_order = tuple(sorted(summaries[0].group_names))
    stats = osff_product(summaries, name_order=name_order)
    return threshold(stats, q, plus=plus)


def selection_to_document(result):
    tau = float(result.tau)
    return {
        "q": result.q,
        "plus": result.plus,
        "tau": "inf" if np.isinf(tau) else tau,
        "selected": sorted(result.selected_names()),
        "W": {
            name: float(w) for name, w in zip(result.group_names, result.W)
        },
    }


def selection_to_json(result):
    """Canonical JSON for a selection: sorted keys, sorted selected names."""
    return json.dumps(selection_to_document(result), indent=2, sort_keys=True) + "\n"


def read_selection(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read selection {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path.name}: not valid JSON: {exc}") from None
    for key in ("q", "plus", "tau", "selected", "W"):
        if key not in doc:
            raise SchemaError(f"{path.name}: selection document misses {key!r}")
    return doc
