"""GeoJSON exports, run manifests and the end-to-end pipeline."""

from __future__ import annotations

import hashlib
import json
import os
import warnings
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .cluster import NOISE, Clustering, GridSearchResult, PointSet, grid_search
from .errors import ConfigError, NoValidClusteringError, StageError
from .features import (
    CommunityFeatureTable,
    SourceColumns,
    aggregate_by_community,
    monthly_averages,
    monthly_series,
    rows_to_csv,
    top_k,
    yearly_by_category,
)
from .geocode import SOURCE_CENTROID, BoundarySet, boundaries_to_geometry, geocode_dataset, read_boundaries
from .ingest import (
    DEFAULT_CATEGORY_RULES,
    DEFAULT_POLICIES,
    CleaningPolicy,
    Dataset,
    add_category_column,
    clean,
    load_category_rules,
    read_table,
    split_latlon,
)
from .model import chi_square_select, feature_importance_report, fit_and_report, pearson_matrix

# column kinds per source role; columns not listed load as text
ROLE_SCHEMAS: dict[str, dict[str, str]] = {
    "crime": {"community_name": "text", "category": "text", "crime_count": "integer", "date": "date"},
    "disorder": {"community_name": "text", "category": "text", "event_count": "integer", "date": "date"},
    "streetlights": {"latitude": "real", "longitude": "real", "wattage": "real"},
    "trees": {"latitude": "real", "longitude": "real"},
    "traffic_incidents": {"description": "text", "start_date": "date", "location": "latlon"},
    "traffic_cameras": {"latitude": "real", "longitude": "real"},
    "pets": {"community_name": "text", "animal_type": "text"},
    "census": {
        "community_name": "text",
        "population": "integer",
        "male_count": "integer",
        "female_count": "integer",
        "dwelling_count": "integer",
        "apartment_count": "integer",
    },
}

# aggregate_by_community keyword per role
ROLE_SOURCES = {
    "crime": "crime",
    "disorder": "disorder",
    "streetlights": "streetlights",
    "trees": "trees",
    "traffic_incidents": "traffic",
    "pets": "pets",
    "census": "census",
}

ROLE_WEIGHTS = {"crime": "crime_count", "disorder": "event_count"}

DEFAULT_PREDICTORS = (
    "streetlight_count",
    "total_wattage",
    "tree_count",
    "pet_total",
    "cat_count",
    "dog_count",
    "population",
    "male_female_ratio",
    "dwelling_count",
    "apartment_count",
)


def dump_json(obj: Any) -> str:
    """Canonical JSON text: sorted keys, no NaN, trailing newline."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def sha256(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# exports


def quantile_bin(values: Sequence[float], bins: int) -> list[int]:
    """Bin of each value = number of inner quantile edges strictly below it."""
    edges = np.quantile(np.asarray(values, dtype=float), np.arange(1, bins) / bins)
    return [int(np.count_nonzero(edges < v)) for v in values]


def export_choropleth(
    features: CommunityFeatureTable,
    metric: str,
    boundaries: BoundarySet,
    bins: int = 5,
) -> dict[str, Any]:
    """One polygon feature per community carrying ``metric`` and its quantile bin."""
    if metric not in features.columns or metric in ("community_name", "sector"):
        raise KeyError(f"unknown metric {metric!r}; available: {', '.join(features.numeric_columns)}")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    by_name = {r["community_name"]: r.get(metric) for r in features.rows}
    values = [by_name.get(c.name) for c in boundaries.entries]
    present = [v for v in values if v is not None]
    binned = iter(quantile_bin(present, bins)) if present else iter(())
    out = []
    for comm, v in zip(boundaries.entries, values):
        out.append(
            {
                "type": "Feature",
                "geometry": boundaries_to_geometry(comm),
                "properties": {
                    "community_name": comm.name,
                    "metric_name": metric,
                    "value": v,
                    "quantile_bin": next(binned) if v is not None else None,
                },
            }
        )
    return {"type": "FeatureCollection", "features": out}


def _plain(v: Any) -> Any:
    return v.item() if isinstance(v, np.generic) else v


def export_cluster_map(ps: PointSet, c: Clustering) -> dict[str, Any]:
    """Point features with ``id`` and ``cluster`` (an integer or ``"noise"``)."""
    if len(c.labels) != len(ps):
        raise ValueError(f"{len(c.labels)} labels for {len(ps)} points")
    feats = []
    for (lat, lon), pid, lab in zip(ps.points.tolist(), ps.ids, c.labels.tolist()):
        feats.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [lon, lat]},
                "properties": {"id": _plain(pid), "cluster": "noise" if lab == NOISE else lab},
            }
        )
    return {"type": "FeatureCollection", "features": feats}


def cluster_label_rows(ps: PointSet, c: Clustering) -> list[dict[str, Any]]:
    return [
        {"id": _plain(pid), "lat": lat, "lon": lon, "cluster": "noise" if lab == NOISE else lab}
        for (lat, lon), pid, lab in zip(ps.points.tolist(), ps.ids, c.labels.tolist())
    ]


def cluster_artifacts(ps: PointSet, algorithm: str, res: GridSearchResult) -> dict[str, str]:
    """File name to text for one algorithm's grid search: scores, labels, best params and map."""
    cols: list[str] = []
    for row in res.table:
        cols.extend(c for c in row if c not in cols)
    best = {"algorithm": algorithm, "best_index": res.best_index, **res.best.summary()}
    return {
        f"{algorithm}_grid.csv": rows_to_csv(res.table, cols),
        f"{algorithm}_labels.csv": rows_to_csv(cluster_label_rows(ps, res.best), ["id", "lat", "lon", "cluster"]),
        f"{algorithm}_best.json": dump_json(best),
        f"{algorithm}_map.geojson": dump_json(export_cluster_map(ps, res.best)),
    }


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    config_path: str
    config_sha256: str
    seed: int
    inputs: dict[str, str] = field(default_factory=dict)  # path -> sha256
    artifacts: dict[str, str] = field(default_factory=dict)  # path relative to out dir -> sha256
    stages: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    finished: str | None = None
    version: str = __version__

    def to_dict(self) -> dict[str, Any]:
        return {
            "tool": "citysafe",
            "version": self.version,
            "config": {"path": self.config_path, "sha256": self.config_sha256},
            "seed": self.seed,
            "inputs": self.inputs,
            "artifacts": self.artifacts,
            "stages": self.stages,
            "warnings": self.warnings,
            "status": self.status,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "started": self.started,
            "finished": self.finished,
        }

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        path.write_text(dump_json(self.to_dict()), encoding="utf-8")
        return path


# ---------------------------------------------------------------------------
# pipeline


def load_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("boundaries", "datasets"):
        if key not in cfg:
            raise ConfigError(f"config is missing {key!r}")
    for name, ds in cfg["datasets"].items():
        if "path" not in ds:
            raise ConfigError(f"dataset {name!r} has no path")
        role = ds.get("role", name)
        if role not in ROLE_SCHEMAS and "schema" not in ds:
            raise ConfigError(f"dataset {name!r}: unknown role {role!r} and no schema given")
    return cfg


def resolve_seed(cfg: Mapping[str, Any], override: int | None = None) -> int:
    """Explicit override, then ``CITYSAFE_SEED``, then the config value."""
    if override is not None:
        return int(override)
    env = os.environ.get("CITYSAFE_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"CITYSAFE_SEED must be an integer, got {env!r}") from exc
    return int(cfg.get("seed", 0))


class _Run:
    """Mutable state of one pipeline execution."""

    def __init__(self, cfg: dict[str, Any], base: Path, out: Path, manifest: RunManifest):
        self.cfg = cfg
        self.base = base
        self.out = out
        self.manifest = manifest
        self.datasets: dict[str, Dataset] = {}
        self.boundaries: BoundarySet | None = None
        self.table: CommunityFeatureTable | None = None

    def path(self, rel: str) -> Path:
        return (self.base / rel).resolve()

    def read_input(self, rel: str) -> Path:
        p = self.path(rel)
        if not p.is_file():
            raise FileNotFoundError(f"input file not found: {p}")
        self.manifest.inputs[rel] = sha256(p.read_bytes())
        return p

    def emit(self, rel: str, text: str) -> None:
        p = self.out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        self.manifest.artifacts[rel] = sha256(text)

    def role(self, name: str) -> str:
        return self.cfg["datasets"][name].get("role", name)


def _stage_ingest(run: _Run) -> None:
    rules = DEFAULT_CATEGORY_RULES
    if run.cfg.get("category_rules"):
        rules = load_category_rules(run.read_input(run.cfg["category_rules"]))
    for name, ds in run.cfg["datasets"].items():
        role = run.role(name)
        schema = ds.get("schema") or ROLE_SCHEMAS[role]
        d = read_table(run.read_input(ds["path"]), schema, name, extra_as_text=True)
        if ds.get("latlon_column"):
            d = split_latlon(d, ds["latlon_column"])
        if ds.get("description_column"):
            d = add_category_column(d, ds["description_column"], rules, ds.get("category_column", "category"))
        if "policy" in ds:
            policy = CleaningPolicy.from_dict(ds["policy"])
        else:
            policy = DEFAULT_POLICIES.get(role, CleaningPolicy())
        d = clean(d, policy)
        run.datasets[name] = d
        run.emit(f"clean/{name}.csv", d.to_csv())


def _stage_geocode(run: _Run) -> None:
    bcfg = run.cfg["boundaries"]
    if isinstance(bcfg, str):
        bcfg = {"path": bcfg}
    run.boundaries = read_boundaries(
        run.read_input(bcfg["path"]),
        name_property=bcfg.get("name_property", "name"),
        sector_property=bcfg.get("sector_property", "sector"),
    )
    rows = [
        {
            "community_name": c.name,
            "sector": c.sector,
            "centroid_latitude": c.centroid.latitude,
            "centroid_longitude": c.centroid.longitude,
        }
        for c in run.boundaries.entries
    ]
    run.emit("communities.csv", rows_to_csv(rows, list(rows[0]) if rows else ["community_name"]))
    for name, ds in run.cfg["datasets"].items():
        if not ds.get("geocode", run.role(name) != "census"):
            continue
        d = geocode_dataset(run.datasets[name], run.boundaries)
        run.datasets[name] = d
        run.emit(f"geocoded/{name}.csv", d.to_csv())


def _stage_features(run: _Run) -> None:
    fcfg = run.cfg.get("features", {})
    sources: dict[str, Dataset] = {}
    for name in run.cfg["datasets"]:
        kw = ROLE_SOURCES.get(run.role(name))
        if kw is not None:
            if kw in sources:
                raise ConfigError(f"two datasets share role {run.role(name)!r}")
            sources[kw] = run.datasets[name]
    columns = SourceColumns.from_dict(run.cfg.get("columns", {}))
    assert run.boundaries is not None
    table = aggregate_by_community(run.boundaries, columns=columns, **sources)
    run.table = table
    run.emit("features/community_features.csv", table.to_csv())
    run.emit("features/community_features.json", table.to_json() + "\n")

    k = int(fcfg.get("top_k", 10))
    metrics = list(dict.fromkeys(["crime_total", *fcfg.get("choropleth", [])]))
    for metric in metrics:
        ranked = [{"rank": i + 1, "community_name": n, metric: v} for i, (n, v) in enumerate(top_k(table, metric, k))]
        run.emit(f"features/top_{metric}.csv", rows_to_csv(ranked, ["rank", "community_name", metric]))

    for name, ds in run.cfg["datasets"].items():
        date_col = ds.get("date_column")
        if not date_col:
            continue
        d = run.datasets[name]
        cat_col = ds.get("category_column")
        weight = ds.get("weight_column", ROLE_WEIGHTS.get(run.role(name)))
        if weight is not None and not d.has_column(weight):
            weight = None
        ts = monthly_series(d, date_col, cat_col if cat_col and d.has_column(cat_col) else None, weight)
        run.emit(f"temporal/{name}_monthly.csv", rows_to_csv(ts.to_rows(), ["year", "month", "category", "value"]))
        avg = [{"month": m + 1, "mean": v} for m, v in enumerate(monthly_averages(ts))]
        run.emit(f"temporal/{name}_monthly_mean.csv", rows_to_csv(avg, ["month", "mean"]))
        if cat_col and d.has_column(cat_col):
            yearly = [{"year": y, "category": c, "value": v} for y, c, v in yearly_by_category(d, date_col, cat_col, weight)]
            run.emit(f"temporal/{name}_yearly.csv", rows_to_csv(yearly, ["year", "category", "value"]))


def usable_predictors(table: CommunityFeatureTable, predictors: Sequence[str]) -> list[str]:
    """Drop predictors with no non-null value; complete-row filtering would otherwise empty the design."""
    keep, empty = [], []
    for p in predictors:
        (keep if any(v is not None for v in table.column(p)) else empty).append(p)
    if empty:
        warnings.warn(f"predictors with no values skipped: {', '.join(empty)}", UserWarning, stacklevel=2)
    return keep


def _stage_model(run: _Run, seed: int) -> None:
    mcfg = run.cfg.get("model", {})
    table = run.table
    assert table is not None
    targets = [t for t in mcfg.get("targets", ["crime_total"]) if t in table.columns]
    predictors = [p for p in mcfg.get("predictors", DEFAULT_PREDICTORS) if p in table.columns and p not in targets]
    predictors = usable_predictors(table, predictors)
    if not targets or not predictors:
        raise ConfigError("model stage needs at least one target and one predictor present in the feature table")

    corr = pearson_matrix(table, predictors + targets)
    corr_rows = corr.to_rows()
    run.emit("model/correlation.csv", rows_to_csv(corr_rows, ["column", *corr.columns]))
    run.emit("model/correlation.json", dump_json(corr.to_json()))

    alpha, bins = float(mcfg.get("alpha", 0.05)), int(mcfg.get("bins", 4))
    selections = {}
    reports: dict[str, dict[str, Any]] = {}
    for target in targets:
        sel = chi_square_select(table, target, predictors, alpha, bins)
        chosen = sel.selected
        selections[target] = {**sel.to_json(), "fallback_to_all": not chosen}
        for kind in mcfg.get("kinds", ["ols", "random_forest"]):
            params = dict(mcfg.get("forest", {})) if kind == "random_forest" else {}
            rep, _ = fit_and_report(
                table,
                target,
                chosen or predictors,
                kind,
                float(mcfg.get("test_fraction", 0.2)),
                seed,
                n_jobs=int(mcfg.get("n_jobs", 1)),
                **params,
            )
            reports.setdefault(kind, {})[target] = rep
    run.emit("model/chi_square.json", dump_json(selections))
    run.emit(
        "model/models.json",
        dump_json({kind: {t: r.to_dict() for t, r in by_t.items()} for kind, by_t in reports.items()}),
    )
    importance = {kind: feature_importance_report(by_t) for kind, by_t in reports.items()}
    run.emit("model/importance.json", dump_json(importance))
    flat = [
        {"model": kind, "target": t, **row}
        for kind, by_t in importance.items()
        for t, rows in by_t.items()
        for row in rows
    ]
    run.emit("model/importance.csv", rows_to_csv(flat, ["model", "target", "rank", "feature", "importance", "method"]))


def _stage_cluster(run: _Run, seed: int) -> None:
    ccfg = run.cfg.get("cluster")
    if not ccfg:
        return
    name = ccfg["dataset"]
    if name not in run.datasets:
        raise ConfigError(f"cluster dataset {name!r} is not configured")
    d = run.datasets[name]
    if d.has_column("geocode_source") and not ccfg.get("allow_centroid", False):
        src = d.column("geocode_source")
        d = d.with_rows([r for r, s in zip(d.rows, src) if s != SOURCE_CENTROID])
    id_col = ccfg.get("id_column") or run.cfg["datasets"][name].get("id_column")
    ps = PointSet.from_dataset(d, id_column=id_col)
    summary: dict[str, Any] = {"dataset": name, "n_points": len(ps), "seed": seed, "algorithms": {}}
    for alg, grid in ccfg.get("algorithms", {}).items():
        try:
            res = grid_search(ps, alg, grid, seed, int(ccfg.get("n_jobs", 1)), ccfg.get("silhouette_sample"))
        except NoValidClusteringError as exc:
            summary["algorithms"][alg] = {"best": None, "error": str(exc)}
            continue
        for rel, text in cluster_artifacts(ps, alg, res).items():
            run.emit(f"cluster/{rel}", text)
        summary["algorithms"][alg] = {"best": res.best.summary(), "best_index": res.best_index, "error": None}
    run.emit("cluster/summary.json", dump_json(summary))


def _stage_export(run: _Run) -> None:
    fcfg = run.cfg.get("features", {})
    assert run.table is not None and run.boundaries is not None
    bins = int(fcfg.get("bins", 5))
    for metric in fcfg.get("choropleth", ["crime_total"]):
        doc = export_choropleth(run.table, metric, run.boundaries, bins)
        run.emit(f"maps/choropleth_{metric}.geojson", dump_json(doc))


STAGES = ("ingest", "geocode", "features", "model", "cluster", "export")


def run_pipeline(config_path: str | Path, out_dir: str | Path, seed: int | None = None) -> RunManifest:
    """Run every stage and write ``manifest.json`` into ``out_dir``.

    A failing stage raises :class:`StageError` after writing a manifest that
    lists the artifacts completed so far.
    """
    config_path = Path(config_path)
    cfg = load_config(config_path)
    run_seed = resolve_seed(cfg, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(str(config_path), sha256(config_path.read_bytes()), run_seed)
    run = _Run(cfg, config_path.parent, out, manifest)
    steps = {
        "ingest": lambda: _stage_ingest(run),
        "geocode": lambda: _stage_geocode(run),
        "features": lambda: _stage_features(run),
        "model": lambda: _stage_model(run, run_seed),
        "cluster": lambda: _stage_cluster(run, run_seed),
        "export": lambda: _stage_export(run),
    }
    for stage in STAGES:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                steps[stage]()
            except Exception as exc:
                manifest.status = "failed"
                manifest.failed_stage = stage
                manifest.error = f"{type(exc).__name__}: {exc}"
                manifest.finished = datetime.now(timezone.utc).isoformat()
                manifest.write(out)
                raise StageError(stage, exc, manifest) from exc
            finally:
                for w in caught:
                    msg = f"{stage}: {w.category.__name__}: {w.message}"
                    if msg not in manifest.warnings:
                        manifest.warnings.append(msg)
        manifest.stages.append(stage)
    manifest.status = "ok"
    manifest.finished = datetime.now(timezone.utc).isoformat()
    manifest.write(out)
    return manifest
