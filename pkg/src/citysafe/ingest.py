"""Typed CSV tables and the cleaning rules applied before geocoding.

A :class:`Dataset` is deliberately small: an ordered list of ``(name, kind)``
columns and a tuple of row tuples. Cells that fail to parse under their
declared kind become ``None`` rather than aborting the load.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any

from .errors import ConfigError, EmptyDatasetError, SchemaError

KINDS = ("text", "integer", "real", "date", "latlon")
_KIND_ALIASES = {"latlon-pair": "latlon", "int": "integer", "float": "real", "str": "text"}

DEFAULT_CATEGORY = "Traffic Incident"


def canonical_kind(kind: str) -> str:
    k = _KIND_ALIASES.get(kind, kind)
    if k not in KINDS:
        raise SchemaError(kind, f"unknown column kind {kind!r}")
    return k


# ---------------------------------------------------------------------------
# cell codecs

_WKT_POINT = re.compile(r"^POINT\s*\(\s*(\S+)\s+(\S+)\s*\)$", re.IGNORECASE)
_YEAR_MONTH = re.compile(r"^(\d{4})[-/](\d{1,2})$")
_SLASH_DATE = re.compile(r"^(\d{4})/(\d{1,2})/(\d{1,2})")


def _parse_int(s: str) -> int | None:
    try:
        return int(s)
    except ValueError:
        pass
    try:
        f = float(s)
    except ValueError:
        return None
    if math.isfinite(f) and f.is_integer():
        return int(f)
    return None


def _parse_real(s: str) -> float | None:
    try:
        f = float(s)
    except ValueError:
        return None
    return f if math.isfinite(f) else None


def parse_date(s: str) -> date | None:
    """Parse ISO dates, ISO timestamps, ``YYYY/MM/DD`` and year-month strings.

    Year-month values map to the first day of that month.
    """
    s = s.strip()
    if not s:
        return None
    try:
        return date.fromisoformat(s[:10])
    except ValueError:
        pass
    m = _SLASH_DATE.match(s)
    if m:
        try:
            return date(int(m[1]), int(m[2]), int(m[3]))
        except ValueError:
            return None
    m = _YEAR_MONTH.match(s)
    if m:
        try:
            return date(int(m[1]), int(m[2]), 1)
        except ValueError:
            return None
    return None


def _parse_latlon(s: str) -> tuple[float, float] | None:
    m = _WKT_POINT.match(s)
    if m:
        # WKT stores x (longitude) first
        lon, lat = _parse_real(m[1]), _parse_real(m[2])
    else:
        parts = s.strip("()[] ").split(",")
        if len(parts) != 2:
            return None
        lat, lon = _parse_real(parts[0].strip()), _parse_real(parts[1].strip())
    if lat is None or lon is None:
        return None
    return (lat, lon)


_PARSERS = {
    "text": lambda s: s,
    "integer": _parse_int,
    "real": _parse_real,
    "date": parse_date,
    "latlon": _parse_latlon,
}


def parse_cell(raw: str | None, kind: str) -> Any:
    if raw is None:
        return None
    s = raw.strip()
    if not s:
        return None
    return _PARSERS[kind](s)


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, date):
        return value.isoformat()
    if isinstance(value, tuple):
        return f"({value[0]!r}, {value[1]!r})"
    return str(value)


# ---------------------------------------------------------------------------
# Dataset


@dataclass(frozen=True)
class Dataset:
    name: str
    columns: tuple[tuple[str, str], ...]
    rows: tuple[tuple[Any, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple((c, canonical_kind(k)) for c, k in self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        names = self.column_names
        if len(set(names)) != len(names):
            dup = next(n for n in names if names.count(n) > 1)
            raise SchemaError(dup, f"duplicate column {dup!r}")
        width = len(self.columns)
        for i, row in enumerate(self.rows):
            if len(row) != width:
                raise SchemaError(names[-1] if names else "", f"row {i} has {len(row)} cells, expected {width}")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def column_names(self) -> list[str]:
        return [c for c, _ in self.columns]

    def has_column(self, name: str) -> bool:
        return any(c == name for c, _ in self.columns)

    def index(self, name: str) -> int:
        for i, (c, _) in enumerate(self.columns):
            if c == name:
                return i
        raise KeyError(name)

    def kind(self, name: str) -> str:
        return self.columns[self.index(name)][1]

    def column(self, name: str) -> list[Any]:
        i = self.index(name)
        return [r[i] for r in self.rows]

    def records(self) -> Iterator[dict[str, Any]]:
        names = self.column_names
        for r in self.rows:
            yield dict(zip(names, r))

    def with_rows(self, rows: Iterable[Sequence[Any]]) -> Dataset:
        return Dataset(self.name, self.columns, tuple(tuple(r) for r in rows))

    def with_column(self, name: str, kind: str, values: Sequence[Any]) -> Dataset:
        """Return a copy with ``name`` replaced (or appended) by ``values``."""
        if len(values) != len(self.rows):
            raise SchemaError(name, f"column {name!r} has {len(values)} values for {len(self.rows)} rows")
        if self.has_column(name):
            i = self.index(name)
            cols = list(self.columns)
            cols[i] = (name, kind)
            rows = [r[:i] + (v,) + r[i + 1:] for r, v in zip(self.rows, values)]
        else:
            cols = list(self.columns) + [(name, kind)]
            rows = [r + (v,) for r, v in zip(self.rows, values)]
        return Dataset(self.name, tuple(cols), tuple(rows))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.column_names)
        for r in self.rows:
            w.writerow([format_cell(v) for v in r])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        return path

    @property
    def schema(self) -> dict[str, str]:
        return dict(self.columns)


def _normalize_schema(schema: Mapping[str, str] | Sequence[tuple[str, str]]) -> list[tuple[str, str]]:
    items = schema.items() if isinstance(schema, Mapping) else schema
    return [(str(c), canonical_kind(k)) for c, k in items]


def parse_table(
    raw_csv: bytes | str,
    schema: Mapping[str, str] | Sequence[tuple[str, str]] | None = None,
    name: str = "",
    extra_as_text: bool = False,
) -> Dataset:
    """Parse CSV text into a :class:`Dataset`.

    Every schema column must appear in the header. Header columns missing
    from the schema are an error unless ``extra_as_text`` is set, in which
    case they load as text. ``schema=None`` loads every column as text.
    Column order follows the header.
    """
    if isinstance(raw_csv, bytes):
        raw_csv = raw_csv.decode("utf-8-sig")
    elif raw_csv.startswith("\ufeff"):
        raw_csv = raw_csv[1:]
    if not raw_csv.strip():
        raise EmptyDatasetError(f"dataset {name!r}: empty input")

    reader = csv.reader(io.StringIO(raw_csv))
    header = [h.strip() for h in next(reader)]
    declared = dict(_normalize_schema(schema)) if schema is not None else None

    if declared is not None:
        for col in declared:
            if col not in header:
                raise SchemaError(col, f"dataset {name!r}: schema column {col!r} not in header")
        if not extra_as_text:
            for col in header:
                if col not in declared:
                    raise SchemaError(col, f"dataset {name!r}: header column {col!r} not in schema")
    kinds = [declared.get(h, "text") if declared is not None else "text" for h in header]

    rows = []
    width = len(header)
    for rec in reader:
        if not rec or (len(rec) == 1 and not rec[0].strip() and width > 1):
            continue
        cells = list(rec[:width]) + [None] * (width - len(rec))
        rows.append(tuple(parse_cell(c, k) for c, k in zip(cells, kinds)))
    return Dataset(name, tuple(zip(header, kinds)), tuple(rows))


def read_table(path: str | Path, schema=None, name: str | None = None, extra_as_text: bool = False) -> Dataset:
    path = Path(path)
    return parse_table(path.read_bytes(), schema, name or path.stem, extra_as_text=extra_as_text)


def split_latlon(d: Dataset, column: str, lat: str = "latitude", lon: str = "longitude") -> Dataset:
    """Expand a lat/lon pair column into two real columns."""
    if d.kind(column) != "latlon":
        raise SchemaError(column, f"column {column!r} is not a lat/lon pair")
    pairs = d.column(column)
    out = d.with_column(lat, "real", [p[0] if p else None for p in pairs])
    return out.with_column(lon, "real", [p[1] if p else None for p in pairs])


# ---------------------------------------------------------------------------
# cleaning


def drop_duplicates(d: Dataset) -> Dataset:
    """Remove exact duplicate rows, keeping the first occurrence."""
    seen: set[tuple[str, ...]] = set()
    kept = []
    for row in d.rows:
        key = tuple(format_cell(v).strip() for v in row)
        if key in seen:
            continue
        seen.add(key)
        kept.append(row)
    return d.with_rows(kept)


@dataclass(frozen=True)
class CleaningPolicy:
    zero_fill_columns: frozenset[str] = field(default_factory=frozenset)
    drop_null_columns: frozenset[str] = field(default_factory=frozenset)
    dedup: bool = True

    def __post_init__(self):
        object.__setattr__(self, "zero_fill_columns", frozenset(self.zero_fill_columns))
        object.__setattr__(self, "drop_null_columns", frozenset(self.drop_null_columns))
        both = self.zero_fill_columns & self.drop_null_columns
        if both:
            raise ConfigError(f"columns both zero-filled and drop-null: {sorted(both)}")

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> CleaningPolicy:
        unknown = set(obj) - {"zero_fill_columns", "drop_null_columns", "dedup"}
        if unknown:
            raise ConfigError(f"unknown cleaning policy keys: {sorted(unknown)}")
        return cls(
            frozenset(obj.get("zero_fill_columns", ())),
            frozenset(obj.get("drop_null_columns", ())),
            bool(obj.get("dedup", True)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "zero_fill_columns": sorted(self.zero_fill_columns),
            "drop_null_columns": sorted(self.drop_null_columns),
            "dedup": self.dedup,
        }


def load_policy(path: str | Path) -> CleaningPolicy:
    try:
        return CleaningPolicy.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read cleaning policy {path}: {exc}") from exc


_COORDS = frozenset({"latitude", "longitude"})

# Per-role defaults. Only the crime zero-fill is a documented rule; the rest
# keep nulls except coordinates of point datasets, which cannot be clustered.
DEFAULT_POLICIES: dict[str, CleaningPolicy] = {
    "crime": CleaningPolicy(zero_fill_columns=frozenset({"crime_count"})),
    "disorder": CleaningPolicy(zero_fill_columns=frozenset({"event_count"})),
    "streetlights": CleaningPolicy(drop_null_columns=_COORDS),
    "trees": CleaningPolicy(drop_null_columns=_COORDS),
    "traffic_incidents": CleaningPolicy(drop_null_columns=_COORDS),
    "traffic_cameras": CleaningPolicy(drop_null_columns=_COORDS),
    "pets": CleaningPolicy(),
    "census": CleaningPolicy(),
}


def impute_missing(d: Dataset, p: CleaningPolicy) -> Dataset:
    for col in sorted(p.zero_fill_columns | p.drop_null_columns):
        if not d.has_column(col):
            raise ConfigError(f"dataset {d.name!r}: policy names unknown column {col!r}")
    fills = {}
    for col in p.zero_fill_columns:
        kind = d.kind(col)
        if kind == "integer":
            fills[d.index(col)] = 0
        elif kind == "real":
            fills[d.index(col)] = 0.0
        else:
            raise ConfigError(f"dataset {d.name!r}: cannot zero-fill {kind} column {col!r}")
    drop_idx = [d.index(c) for c in p.drop_null_columns]

    out = []
    for row in d.rows:
        if any(row[i] is None for i in drop_idx):
            continue
        if fills:
            row = tuple(fills[i] if v is None and i in fills else v for i, v in enumerate(row))
        out.append(row)
    return d.with_rows(out)


def clean(d: Dataset, p: CleaningPolicy) -> Dataset:
    if p.dedup:
        d = drop_duplicates(d)
    return impute_missing(d, p)


# ---------------------------------------------------------------------------
# incident categories


@dataclass(frozen=True)
class CategoryRule:
    keyword: str
    category: str
    priority: int

    def __post_init__(self):
        object.__setattr__(self, "keyword", self.keyword.lower())


def _check_rules(rules: Sequence[CategoryRule]) -> None:
    if not rules:
        raise ConfigError("category rule list is empty")
    prios = [r.priority for r in rules]
    if len(set(prios)) != len(prios):
        raise ConfigError("category rule priorities must be unique")


def normalize_description(text: str, normalizer: Mapping[str, str] | None = None) -> str:
    text = text.lower()
    if normalizer:
        for word, repl in normalizer.items():
            text = re.sub(rf"\b{re.escape(word.lower())}\b", repl.lower(), text)
    return text


def map_incident_category(
    description: str | None,
    rules: Sequence[CategoryRule],
    normalizer: Mapping[str, str] | None = None,
    default: str = DEFAULT_CATEGORY,
) -> str:
    """Return the category of the best-ranked rule whose keyword occurs in
    ``description``. Rank 1 beats rank 2; matching is case-insensitive."""
    _check_rules(rules)
    if not description:
        return default
    text = normalize_description(description, normalizer)
    for rule in sorted(rules, key=lambda r: r.priority):
        if rule.keyword in text:
            return rule.category
    return default


@dataclass(frozen=True)
class CategoryRuleSet:
    rules: tuple[CategoryRule, ...]
    normalizer: Mapping[str, str] = field(default_factory=dict)
    default: str = DEFAULT_CATEGORY

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        _check_rules(self.rules)

    def categorize(self, description: str | None) -> str:
        return map_incident_category(description, self.rules, self.normalizer, self.default)

    @classmethod
    def from_json(cls, obj: Any) -> CategoryRuleSet:
        if isinstance(obj, list):
            obj = {"rules": obj}
        try:
            rules = tuple(
                CategoryRule(str(r["keyword"]), str(r["category"]), int(r["priority"])) for r in obj["rules"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed category rules: {exc}") from exc
        return cls(rules, dict(obj.get("normalize", {})), obj.get("default", DEFAULT_CATEGORY))

    def to_json(self) -> dict[str, Any]:
        return {
            "default": self.default,
            "normalize": dict(self.normalizer),
            "rules": [{"keyword": r.keyword, "category": r.category, "priority": r.priority} for r in self.rules],
        }


def load_category_rules(path: str | Path) -> CategoryRuleSet:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read category rules {path}: {exc}") from exc
    return CategoryRuleSet.from_json(obj)


_NUMBER_WORDS = {"one": "1", "two": "2", "three": "3", "four": "4", "five": "5", "six": "6"}

DEFAULT_CATEGORY_RULES = CategoryRuleSet(
    rules=(
        CategoryRule("pedestrian", "Pedestrian involved", 1),
        CategoryRule("lrt", "LRT", 2),
        CategoryRule("injur", "Injuries", 3),
        CategoryRule("multi-vehicle", "Multi-vehicle incident", 4),
        CategoryRule("multi vehicle", "Multi-vehicle incident", 5),
        CategoryRule("3 vehicle", "Multi-vehicle incident", 6),
        CategoryRule("4 vehicle", "Multi-vehicle incident", 7),
        CategoryRule("5 vehicle", "Multi-vehicle incident", 8),
        CategoryRule("2 vehicle", "2 vehicle incident", 9),
        CategoryRule("single vehicle", "Single vehicle incident", 10),
        CategoryRule("1 vehicle", "Single vehicle incident", 11),
        CategoryRule("stall", "Stalled vehicle", 12),
        CategoryRule("signal", "Traffic signal", 13),
        CategoryRule("block", "Blocking", 14),
    ),
    normalizer=_NUMBER_WORDS,
)


def add_category_column(
    d: Dataset,
    description_column: str,
    ruleset: CategoryRuleSet = DEFAULT_CATEGORY_RULES,
    column: str = "category",
) -> Dataset:
    cats = [ruleset.categorize(v) for v in d.column(description_column)]
    return d.with_column(column, "text", cats)
