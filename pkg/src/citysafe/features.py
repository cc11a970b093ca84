"""Community-level indicator table and temporal summaries."""

from __future__ import annotations

import csv
import io
import json
import math
import re
import warnings
from collections import Counter, defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Any

from .errors import SchemaError
from .geocode import BoundarySet
from .ingest import Dataset, format_cell, parse_date


class FeatureWarning(UserWarning):
    pass


BASE_COLUMNS = (
    "community_name",
    "sector",
    "streetlight_count",
    "mean_wattage",
    "total_wattage",
    "tree_count",
    "traffic_incident_count",
    "crime_total",
)
TAIL_COLUMNS = (
    "disorder_count",
    "pet_total",
    "cat_count",
    "dog_count",
    "population",
    "male_female_ratio",
    "dwelling_count",
    "apartment_count",
)


@dataclass(frozen=True)
class SourceColumns:
    """Column names the aggregation reads from each source dataset."""

    community: str = "community_name"
    wattage: str = "wattage"
    crime_category: str = "category"
    crime_count: str | None = "crime_count"
    disorder_count: str | None = "event_count"
    pet_type: str = "animal_type"
    traffic_count: str | None = None
    census_community: str = "community_name"
    population: str = "population"
    male: str = "male_count"
    female: str = "female_count"
    dwellings: str = "dwelling_count"
    apartments: str = "apartment_count"
    census_passthrough: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> SourceColumns:
        kw = dict(obj)
        if "census_passthrough" in kw:
            kw["census_passthrough"] = tuple(kw["census_passthrough"])
        return cls(**kw)


def crime_column(category: str) -> str:
    slug = re.sub(r"[^0-9a-z]+", "_", category.lower()).strip("_")
    return f"crime_{slug or 'uncategorized'}"


@dataclass
class CommunityFeatureTable:
    columns: list[str]
    rows: list[dict[str, Any]]
    crime_categories: dict[str, str] = field(default_factory=dict)  # column -> original label

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def names(self) -> list[str]:
        return [r["community_name"] for r in self.rows]

    def column(self, name: str) -> list[Any]:
        if name not in self.columns:
            raise KeyError(name)
        return [r.get(name) for r in self.rows]

    def row(self, community: str) -> dict[str, Any]:
        for r in self.rows:
            if r["community_name"] == community:
                return r
        raise KeyError(community)

    @property
    def numeric_columns(self) -> list[str]:
        return [c for c in self.columns if c not in ("community_name", "sector")]

    def to_dataset(self, name: str = "community_features") -> Dataset:
        cols = tuple((c, "text" if c in ("community_name", "sector") else "real") for c in self.columns)
        rows = [tuple(_num(r.get(c)) if k == "real" else r.get(c) for c, k in cols) for r in self.rows]
        return Dataset(name, cols, tuple(rows))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([format_cell(r.get(c)) for c in self.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {"columns": self.columns, "crime_categories": self.crime_categories, "rows": self.rows},
            indent=2,
            sort_keys=True,
            allow_nan=False,
        )

    @classmethod
    def from_csv(cls, text: str) -> CommunityFeatureTable:
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        rows = []
        for rec in reader:
            row: dict[str, Any] = {}
            for c, v in zip(header, rec):
                if c in ("community_name", "sector"):
                    row[c] = v or None
                else:
                    row[c] = _parse_number(v)
            rows.append(row)
        cats = {c: c[len("crime_"):] for c in header if c.startswith("crime_") and c != "crime_total"}
        return cls(list(header), rows, cats)


def _parse_number(v: str) -> int | float | None:
    v = v.strip()
    if not v:
        return None
    try:
        return int(v)
    except ValueError:
        return float(v)


def _num(v: Any) -> float | None:
    return None if v is None else float(v)


def _weight(v: Any) -> float:
    if v is None:
        return 0
    return v


def _tally(
    d: Dataset | None,
    b: BoundarySet,
    community_col: str,
    weight_col: str | None = None,
    key_fn=None,
) -> dict[tuple[str, Any], float]:
    """Sum row weights per (canonical community name, key)."""
    out: dict[tuple[str, Any], float] = defaultdict(int)
    if d is None:
        return out
    names = d.column(community_col)
    weights = d.column(weight_col) if weight_col else [1] * len(d)
    unknown: Counter[str] = Counter()
    for i, (name, w) in enumerate(zip(names, weights)):
        if name is None:
            continue  # unmatched during geocoding
        comm = b.get(name)
        if comm is None:
            unknown[name] += 1
            continue
        key = key_fn(i) if key_fn else None
        out[(comm.name, key)] += _weight(w)
    if unknown:
        listed = ", ".join(f"{k} ({v})" for k, v in sorted(unknown.items()))
        warnings.warn(f"dataset {d.name!r}: rows for unknown communities excluded: {listed}", FeatureWarning, stacklevel=3)
    return out


def _require_columns(label: str, d: Dataset | None, cols: Sequence[str | None]) -> None:
    if d is None:
        return
    for c in cols:
        if c is not None and not d.has_column(c):
            hint = "; geocode it first" if c == "community_name" else ""
            raise SchemaError(c, f"{label} dataset {d.name!r} has no column {c!r}{hint}")


def aggregate_by_community(
    b: BoundarySet,
    *,
    streetlights: Dataset | None = None,
    trees: Dataset | None = None,
    traffic: Dataset | None = None,
    crime: Dataset | None = None,
    disorder: Dataset | None = None,
    pets: Dataset | None = None,
    census: Dataset | None = None,
    columns: SourceColumns = SourceColumns(),
) -> CommunityFeatureTable:
    """Compile all sources into one row per community of ``b``.

    Missing counts become 0. Means and ratios without data stay null.
    """
    cc = columns.community
    _require_columns("streetlights", streetlights, [cc, columns.wattage])
    _require_columns("trees", trees, [cc])
    _require_columns("traffic", traffic, [cc, columns.traffic_count])
    _require_columns("disorder", disorder, [cc, columns.disorder_count])
    _require_columns("crime", crime, [cc, columns.crime_category, columns.crime_count])
    _require_columns("pets", pets, [cc, columns.pet_type])
    _require_columns("census", census, [columns.census_community])

    lights = _tally(streetlights, b, cc)
    watt_sum: dict[str, float] = defaultdict(float)
    watt_n: dict[str, int] = defaultdict(int)
    if streetlights is not None:
        for name, w in zip(streetlights.column(cc), streetlights.column(columns.wattage)):
            comm = b.get(name) if name is not None else None
            if comm is not None and w is not None:
                watt_sum[comm.name] += w
                watt_n[comm.name] += 1

    tree_n = _tally(trees, b, cc)
    traffic_n = _tally(traffic, b, cc, columns.traffic_count)
    disorder_n = _tally(disorder, b, cc, columns.disorder_count)

    crime_n: dict[tuple[str, Any], float] = {}
    col_labels: dict[str, list[str]] = defaultdict(list)  # several labels may slug to one column
    if crime is not None:
        cats = crime.column(columns.crime_category)
        crime_n = _tally(crime, b, cc, columns.crime_count, key_fn=lambda i: cats[i] or "Uncategorized")
        for label in sorted({k for _, k in crime_n}):
            col_labels[crime_column(label)].append(label)
    cat_col_names = sorted(col_labels)

    pet_kind: dict[tuple[str, Any], float] = {}
    if pets is not None:
        kinds = pets.column(columns.pet_type)
        pet_kind = _tally(pets, b, cc, key_fn=lambda i: (kinds[i] or "").strip().lower())

    census_rows: dict[str, dict[str, Any]] = {}
    if census is not None:
        unknown = []
        for rec in census.records():
            comm = b.get(rec.get(columns.census_community))
            if comm is None:
                unknown.append(rec.get(columns.census_community))
                continue
            census_rows[comm.name] = rec
        if unknown:
            warnings.warn(f"census rows for unknown communities excluded: {unknown}", FeatureWarning, stacklevel=2)

    passthrough = list(columns.census_passthrough)
    table_cols = list(BASE_COLUMNS) + cat_col_names + list(TAIL_COLUMNS) + passthrough

    rows = []
    for comm in b.entries:
        name = comm.name
        n_lights = lights.get((name, None), 0)
        mean_w = watt_sum[name] / watt_n[name] if watt_n.get(name) else None
        row: dict[str, Any] = {
            "community_name": name,
            "sector": comm.sector,
            "streetlight_count": n_lights,
            "mean_wattage": mean_w,
            # lights with unknown wattage are counted at the mean wattage
            "total_wattage": mean_w * n_lights if mean_w is not None else (None if n_lights else 0.0),
            "tree_count": tree_n.get((name, None), 0),
            "traffic_incident_count": traffic_n.get((name, None), 0),
        }
        total = 0
        for col in cat_col_names:
            v = sum(crime_n.get((name, lab), 0) for lab in col_labels[col])
            row[col] = v
            total += v
        row["crime_total"] = total
        row["disorder_count"] = disorder_n.get((name, None), 0)

        pets_here = {k: v for (n, k), v in pet_kind.items() if n == name}
        row["pet_total"] = sum(pets_here.values())
        row["cat_count"] = pets_here.get("cat", 0)
        row["dog_count"] = pets_here.get("dog", 0)

        rec = census_rows.get(name, {})
        row["population"] = rec.get(columns.population) or 0
        male, female = rec.get(columns.male), rec.get(columns.female)
        row["male_female_ratio"] = male / female if male is not None and female else None
        row["dwelling_count"] = rec.get(columns.dwellings) or 0
        row["apartment_count"] = rec.get(columns.apartments) or 0
        for col in passthrough:
            row[col] = rec.get(col) or 0
        rows.append(row)

    return CommunityFeatureTable(table_cols, rows, {c: " / ".join(col_labels[c]) for c in cat_col_names})


# ---------------------------------------------------------------------------
# temporal


@dataclass(frozen=True)
class TimeSeries:
    """Monthly counts; ``category`` is None for an uncategorised series."""

    points: tuple[tuple[int, int, str | None, float], ...]  # (year, month, category, value)
    skipped: int = 0

    def totals(self) -> dict[tuple[int, int], float]:
        out: dict[tuple[int, int], float] = {}
        for y, m, _, v in self.points:
            out[(y, m)] = out.get((y, m), 0) + v
        return out

    def value(self, year: int, month: int, category: str | None = None) -> float:
        for y, m, c, v in self.points:
            if (y, m, c) == (year, month, category):
                return v
        raise KeyError((year, month, category))

    @property
    def categories(self) -> list[str | None]:
        return sorted({c for _, _, c, _ in self.points}, key=lambda c: (c is not None, c or ""))

    def to_rows(self) -> list[dict[str, Any]]:
        return [{"year": y, "month": m, "category": c, "value": v} for y, m, c, v in self.points]


def _as_date(v: Any) -> date | None:
    if v is None:
        return None
    if isinstance(v, datetime):
        return v.date()
    if isinstance(v, date):
        return v
    return parse_date(str(v))


def _months_between(first: tuple[int, int], last: tuple[int, int]) -> list[tuple[int, int]]:
    out = []
    y, m = first
    while (y, m) <= last:
        out.append((y, m))
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return out


def monthly_series(
    d: Dataset,
    date_column: str,
    category_column: str | None = None,
    weight_column: str | None = None,
) -> TimeSeries:
    """Counts per calendar month (and category), zero-filled across the
    dataset's observed span. Rows with unparseable dates are skipped."""
    dates = d.column(date_column)
    cats = d.column(category_column) if category_column else [None] * len(d)
    weights = d.column(weight_column) if weight_column else [1] * len(d)
    counts: dict[tuple[int, int, str | None], float] = defaultdict(int)
    skipped = 0
    for v, c, w in zip(dates, cats, weights):
        dt = _as_date(v)
        if dt is None:
            skipped += 1
            continue
        counts[(dt.year, dt.month, c)] += _weight(w)
    if not counts:
        return TimeSeries((), skipped)
    buckets = sorted({(y, m) for y, m, _ in counts})
    span = _months_between(buckets[0], buckets[-1])
    categories = sorted({c for _, _, c in counts}, key=lambda c: (c is not None, c or ""))
    points = tuple((y, m, c, counts.get((y, m, c), 0)) for c in categories for y, m in span)
    return TimeSeries(points, skipped)


def monthly_averages(ts: TimeSeries) -> list[float | None]:
    """Mean count for each calendar month over the years whose span
    includes it. Months never covered by the span are None."""
    totals = ts.totals()
    by_month: dict[int, list[float]] = defaultdict(list)
    for (y, m), v in sorted(totals.items()):
        by_month[m].append(v)
    return [sum(by_month[m]) / len(by_month[m]) if by_month[m] else None for m in range(1, 13)]


def yearly_by_category(
    d: Dataset,
    date_column: str,
    category_column: str,
    weight_column: str | None = None,
) -> list[tuple[int, str, float]]:
    dates = d.column(date_column)
    cats = d.column(category_column)
    weights = d.column(weight_column) if weight_column else [1] * len(d)
    counts: dict[tuple[int, str], float] = defaultdict(int)
    for v, c, w in zip(dates, cats, weights):
        dt = _as_date(v)
        if dt is None:
            continue
        counts[(dt.year, c)] += _weight(w)
    if not counts:
        return []
    years = range(min(y for y, _ in counts), max(y for y, _ in counts) + 1)
    categories = sorted({c for _, c in counts}, key=lambda c: (c is None, c or ""))
    return [(y, c, counts.get((y, c), 0)) for y in years for c in categories]


def category_totals(d: Dataset, category_column: str, weight_column: str | None = None) -> list[tuple[str, float]]:
    """Totals per category, largest first (ties by label)."""
    weights = d.column(weight_column) if weight_column else [1] * len(d)
    counts: dict[str, float] = defaultdict(int)
    for c, w in zip(d.column(category_column), weights):
        counts[c] += _weight(w)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0] or ""))


def top_k(table: CommunityFeatureTable, metric_column: str, k: int) -> list[tuple[str, Any]]:
    """Communities with the largest ``metric_column`` values.

    Sorted descending, ties by community name; null values are left out.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    pairs = [(r["community_name"], r.get(metric_column)) for r in table.rows]
    ranked = sorted(
        ((n, v) for n, v in pairs if v is not None and not (isinstance(v, float) and math.isnan(v))),
        key=lambda nv: (-nv[1], nv[0]),
    )
    return ranked[:k]


def write_table(path: str | Path, table: CommunityFeatureTable) -> None:
    Path(path).write_text(table.to_csv(), encoding="utf-8")


def rows_to_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([format_cell(r.get(c)) for c in columns])
    return buf.getvalue()
