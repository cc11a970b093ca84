"""Community public-safety analytics from municipal open data.

Exit codes: 0 success, 2 configuration or usage error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .cluster import ALGORITHMS, KMeansParams, PointSet, grid_search
from .errors import CitySafeError, ConfigError, StageError
from .features import CommunityFeatureTable, SourceColumns, aggregate_by_community
from .fixture import write_city
from .geocode import SOURCE_CENTROID, geocode_dataset, read_boundaries
from .ingest import (
    DEFAULT_CATEGORY_RULES,
    DEFAULT_POLICIES,
    CleaningPolicy,
    Dataset,
    add_category_column,
    clean,
    load_category_rules,
    load_policy,
    read_table,
    split_latlon,
)
from .model import chi_square_select, fit_and_report, pearson_matrix
from .report import (
    DEFAULT_PREDICTORS,
    ROLE_SCHEMAS,
    ROLE_SOURCES,
    cluster_artifacts,
    dump_json,
    export_choropleth,
    rows_to_csv,
    run_pipeline,
    usable_predictors,
)

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3

_COORD_KINDS = {"latitude": "real", "longitude": "real"}


def _header(path: Path) -> list[str]:
    with open(path, newline="", encoding="utf-8-sig") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


def load_csv(path: str | Path, role: str | None = None, schema: str | None = None) -> Dataset:
    """Read a CSV using the role's column kinds (or a JSON schema file);
    other columns load as text, coordinates as reals."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    if schema:
        kinds = json.loads(Path(schema).read_text(encoding="utf-8"))
    else:
        kinds = {**_COORD_KINDS, **ROLE_SCHEMAS.get(role or "", {})}
        header = _header(path)
        kinds = {c: k for c, k in kinds.items() if c in header}
    return read_table(path, kinds, path.stem, extra_as_text=True)


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_run(args: argparse.Namespace) -> int:
    manifest = run_pipeline(args.config, args.out, args.seed)
    print(f"{len(manifest.artifacts)} artifacts written to {args.out}")
    return EXIT_OK


def cmd_fixture(args: argparse.Namespace) -> int:
    cfg = write_city(args.out, args.communities, args.seed)
    print(cfg)
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    role = args.role
    d = load_csv(args.input, role, args.schema)
    if args.latlon_column:
        d = split_latlon(d, args.latlon_column)
    if args.description_column:
        rules = load_category_rules(args.category_rules) if args.category_rules else DEFAULT_CATEGORY_RULES
        d = add_category_column(d, args.description_column, rules)
    if args.policy:
        policy = load_policy(args.policy)
    else:
        policy = DEFAULT_POLICIES.get(role or "", CleaningPolicy())
    d = clean(d, policy)
    _write(args.out, d.to_csv())
    return EXIT_OK


def cmd_geocode(args: argparse.Namespace) -> int:
    b = read_boundaries(args.boundaries, name_property=args.name_property)
    d = load_csv(args.input, args.role)
    _write(args.out, geocode_dataset(d, b).to_csv())
    return EXIT_OK


def cmd_features(args: argparse.Namespace) -> int:
    b = read_boundaries(args.boundaries, name_property=args.name_property)
    sources: dict[str, Dataset] = {}
    for role, kw in ROLE_SOURCES.items():
        path = getattr(args, role)
        if path:
            sources[kw] = load_csv(path, role)
    cols = SourceColumns.from_dict(json.loads(Path(args.columns).read_text())) if args.columns else SourceColumns()
    table = aggregate_by_community(b, columns=cols, **sources)
    if args.out == "-":
        _write(args.out, table.to_json() + "\n" if args.format == "json" else table.to_csv())
        return EXIT_OK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "community_features.csv").write_text(table.to_csv(), encoding="utf-8")
    (out / "community_features.json").write_text(table.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def _read_features(path: str) -> CommunityFeatureTable:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"feature table not found: {p}")
    return CommunityFeatureTable.from_csv(p.read_text(encoding="utf-8"))


def cmd_model(args: argparse.Namespace) -> int:
    table = _read_features(args.features)
    if args.target not in table.columns:
        raise ConfigError(f"unknown target {args.target!r}; available: {', '.join(table.numeric_columns)}")
    preds = args.predictors.split(",") if args.predictors else list(DEFAULT_PREDICTORS)
    preds = usable_predictors(table, [p for p in preds if p in table.columns and p != args.target])
    if not preds:
        raise ConfigError("no predictors present in the feature table")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corr = pearson_matrix(table, preds + [args.target])
    (out / "correlation.csv").write_text(rows_to_csv(corr.to_rows(), ["column", *corr.columns]), encoding="utf-8")
    (out / "correlation.json").write_text(dump_json(corr.to_json()), encoding="utf-8")
    sel = chi_square_select(table, args.target, preds, args.alpha, args.bins)
    (out / "chi_square.json").write_text(dump_json(sel.to_json()), encoding="utf-8")
    chosen = sel.selected or preds
    reports: dict[str, Any] = {}
    for kind in args.kind:
        params: dict[str, Any] = {}
        if kind == "random_forest":
            params = {"n_trees": args.n_trees, "max_depth": args.max_depth, "min_leaf": args.min_leaf}
        rep, _ = fit_and_report(table, args.target, chosen, kind, args.test_fraction, args.seed, args.jobs, **params)
        reports[kind] = rep.to_dict()
        print(f"{kind}: test MSE {rep.mse:.6g}, test R² {rep.r2:.4f}")
    (out / "models.json").write_text(dump_json(reports), encoding="utf-8")
    return EXIT_OK


def _parse_grid(text: str) -> Any:
    p = Path(text)
    raw = p.read_text(encoding="utf-8") if p.is_file() else text
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"grid is neither a JSON file nor JSON text: {exc}") from exc


def cmd_cluster(args: argparse.Namespace) -> int:
    d = load_csv(args.input)
    if d.has_column("geocode_source"):
        n_centroid = d.column("geocode_source").count(SOURCE_CENTROID)
        if n_centroid and not args.force:
            raise ConfigError(
                f"{n_centroid} row(s) carry centroid-substituted coordinates, which would form "
                "artificial clusters; pass --force to cluster them anyway"
            )
    grid = _parse_grid(args.grid)
    seed = args.seed
    if args.paper_defaults:
        if args.algorithm != "kmeans":
            raise ConfigError("--paper-defaults only applies to kmeans")
        preset = {k: v for k, v in KMeansParams.fast_preset(1).to_dict().items() if k in ("max_iter", "n_init")}
        grid = [{**preset, **g} for g in grid] if isinstance(grid, list) else {**{k: [v] for k, v in preset.items()}, **grid}
        seed = 0 if seed is None else seed
    ps = PointSet.from_dataset(d, id_column=args.id_column)
    res = grid_search(ps, args.algorithm, grid, seed or 0, args.jobs, args.silhouette_sample)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for rel, text in cluster_artifacts(ps, args.algorithm, res).items():
        (out / rel).write_text(text, encoding="utf-8")
    print(json.dumps(res.best.summary(), sort_keys=True))
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    table = _read_features(args.features)
    b = read_boundaries(args.boundaries, name_property=args.name_property)
    try:
        doc = export_choropleth(table, args.metric, b, args.bins)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc).strip("'\"")) from exc
    _write(args.out, dump_json(doc))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="citysafe", description=__doc__.splitlines()[0], epilog=__doc__.splitlines()[2])
    ap.add_argument("--version", action="version", version=f"citysafe {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="overrides CITYSAFE_SEED and the config seed")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fixture", help="write the synthetic city inputs and config")
    p.add_argument("--out", required=True)
    p.add_argument("--communities", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("ingest", help="parse and clean one CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--role", choices=sorted(ROLE_SCHEMAS))
    p.add_argument("--schema", help="JSON file mapping column -> kind")
    p.add_argument("--policy", help="JSON cleaning policy")
    p.add_argument("--category-rules", help="JSON keyword rules for incident descriptions")
    p.add_argument("--description-column")
    p.add_argument("--latlon-column")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("geocode", help="attach coordinates and community names")
    p.add_argument("--input", required=True)
    p.add_argument("--boundaries", required=True)
    p.add_argument("--role", choices=sorted(ROLE_SCHEMAS))
    p.add_argument("--name-property", default="name")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_geocode)

    p = sub.add_parser("features", help="aggregate geocoded sources per community")
    p.add_argument("--boundaries", required=True)
    p.add_argument("--name-property", default="name")
    for role in ROLE_SOURCES:
        p.add_argument(f"--{role.replace('_', '-')}", dest=role)
    p.add_argument("--columns", help="JSON file overriding source column names")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="stdout format when --out is -")
    p.add_argument("--out", default="-", help="directory for CSV and JSON tables, or - for stdout")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("model", help="correlation, chi-square selection and regression")
    p.add_argument("--features", required=True, help="community feature table CSV")
    p.add_argument("--target", default="crime_total")
    p.add_argument("--predictors", help="comma-separated column names")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--bins", type=int, default=4)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--kind", nargs="+", choices=("ols", "random_forest"), default=["ols", "random_forest"])
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("cluster", help="silhouette grid search for one algorithm")
    p.add_argument("--input", required=True, help="geocoded CSV with latitude/longitude")
    p.add_argument("--algo", "--algorithm", dest="algorithm", required=True, choices=ALGORITHMS)
    p.add_argument("--grid", required=True, help="JSON text or file: {param: [values]} or a list of dicts")
    p.add_argument("--id-column")
    p.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--paper-defaults", action="store_true", help="kmeans only: 5 iterations, one seeding, seed 0")
    p.add_argument("--silhouette-sample", type=int, default=None)
    p.add_argument("--force", action="store_true", help="allow centroid-substituted coordinates")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("export", help="choropleth GeoJSON for one metric")
    p.add_argument("--features", required=True)
    p.add_argument("--boundaries", required=True)
    p.add_argument("--name-property", default="name")
    p.add_argument("--metric", required=True)
    p.add_argument("--bins", type=int, default=5)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_export)
    return ap


def _show_warning(message, category, filename, lineno, file=None, line=None) -> None:
    print(f"citysafe: warning: {message}", file=sys.stderr)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = _show_warning
            return args.func(args)
    except ConfigError as exc:
        print(f"citysafe: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"citysafe: {exc}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc.cause, ConfigError) else EXIT_STAGE
    except (CitySafeError, OSError, ValueError, KeyError) as exc:
        print(f"citysafe: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
