"""Synthetic city: a handful of rectangular communities and seven seeded
source tables shaped like the municipal open-data exports."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any

import numpy as np

ORIGIN = (51.00, -114.10)  # south-west corner, lat/lon
CELL = (0.02, 0.03)  # community height, width in degrees

COMMUNITY_NAMES = (
    "Riverside",
    "Bridgeland",
    "Sunnyside",
    "Hillhurst",
    "Crescent Heights",
    "Renfrew",
    "Inglewood",
    "Ramsay",
    "Mission",
)
CRIME_CATEGORIES = (
    "Assault (Non-domestic)",
    "Break & Enter - Commercial",
    "Theft FROM Vehicle",
    "Violence Other (Non-domestic)",
)
DISORDER_CATEGORIES = ("Disorder", "Noise")
INCIDENT_TEMPLATES = (
    "Two vehicle incident at {street}",
    "Single vehicle incident on {street}",
    "Multi-vehicle incident. Blocking the right lane on {street}",
    "Stalled vehicle at {street}",
    "Traffic signal malfunction at {street}",
    "Pedestrian struck at {street}",
    "Incident on {street}",
)
STREETS = ("5 Ave NE", "Memorial Dr", "Centre St N", "10 St NW", "Edmonton Tr")


def community_rings(n: int) -> list[tuple[str, str, list[list[float]]]]:
    """(name, sector, closed lon/lat ring) for ``n`` communities laid out
    left to right, three per row."""
    out = []
    for i in range(n):
        row, col = divmod(i, 3)
        lat0, lon0 = ORIGIN[0] + row * CELL[0], ORIGIN[1] + col * CELL[1]
        lat1, lon1 = lat0 + CELL[0], lon0 + CELL[1]
        ring = [[lon0, lat0], [lon1, lat0], [lon1, lat1], [lon0, lat1], [lon0, lat0]]
        name = COMMUNITY_NAMES[i] if i < len(COMMUNITY_NAMES) else f"Community {i + 1}"
        out.append((name, "NORTH" if row % 2 else "CENTRE", ring))
    return out


def _csv(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _inside(rng: np.random.Generator, ring: list[list[float]], size: int) -> np.ndarray:
    """Uniform (lat, lon) points strictly inside a rectangle ring."""
    lon0, lat0 = ring[0]
    lon1, lat1 = ring[2]
    u = rng.uniform(0.02, 0.98, size=(size, 2))
    return np.column_stack([lat0 + u[:, 0] * (lat1 - lat0), lon0 + u[:, 1] * (lon1 - lon0)])


def _r(x: float) -> float:
    return round(float(x), 6)


def generate_city(n_communities: int = 3, seed: int = 0, months: int = 24) -> dict[str, str]:
    """File name → text content for a complete synthetic input set,
    including ``config.json``."""
    if not 1 <= n_communities:
        raise ValueError("need at least one community")
    rng = np.random.default_rng(seed)
    comms = community_rings(n_communities)
    files: dict[str, str] = {}

    files["communities.geojson"] = json.dumps(
        {
            "type": "FeatureCollection",
            "features": [
                {
                    "type": "Feature",
                    "properties": {"name": name, "sector": sector},
                    "geometry": {"type": "Polygon", "coordinates": [ring]},
                }
                for name, sector, ring in comms
            ],
        },
        indent=1,
    )

    # community "size" drives most indicators so the model stage has signal
    scale = rng.uniform(0.5, 2.0, size=n_communities)
    dates = [f"{2019 + m // 12}-{m % 12 + 1:02d}" for m in range(months)]

    lights, trees, pets, census, crime, disorder = [], [], [], [], [], []
    lid = 0
    for ci, (name, _, ring) in enumerate(comms):
        n_lights = int(20 + 40 * scale[ci])
        for lat, lon in _inside(rng, ring, n_lights):
            lid += 1
            watt = "" if rng.random() < 0.05 else int(rng.choice([70, 100, 150, 250]))
            lights.append([f"SL{lid:05d}", _r(lat), _r(lon), watt])
        for lat, lon in _inside(rng, ring, int(30 + 60 * rng.random())):
            trees.append([_r(lat), _r(lon), str(rng.choice(["Elm", "Ash", "Spruce", "Poplar"]))])
        for _ in range(int(10 + 25 * scale[ci])):
            pets.append([name, "Dog" if rng.random() < 0.6 else "Cat"])
        pop = int(2000 + 3000 * scale[ci])
        male = int(pop * rng.uniform(0.47, 0.53))
        dwell = int(pop / rng.uniform(2.0, 2.8))
        census.append([name, pop, male, pop - male, dwell, int(dwell * rng.uniform(0.1, 0.6))])
        for d in dates:
            for cat in CRIME_CATEGORIES:
                count = int(rng.poisson(1.5 * scale[ci]))
                crime.append([name, cat, "" if rng.random() < 0.03 else count, d])
            for cat in DISORDER_CATEGORIES:
                disorder.append([name, cat, int(rng.poisson(2.0 * scale[ci])), d])
    # an exact duplicate and a community missing from the boundaries
    crime.append(list(crime[0]))
    crime.append(["Nowhere Park", CRIME_CATEGORIES[0], 3, dates[0]])

    files["streetlights.csv"] = _csv(["light_id", "latitude", "longitude", "wattage"], lights)
    files["trees.csv"] = _csv(["latitude", "longitude", "species"], trees)
    files["pets.csv"] = _csv(["community_name", "animal_type"], pets)
    files["census.csv"] = _csv(
        ["community_name", "population", "male_count", "female_count", "dwelling_count", "apartment_count"],
        census,
    )
    files["crime.csv"] = _csv(["community_name", "category", "crime_count", "date"], crime)
    files["disorder.csv"] = _csv(["community_name", "category", "event_count", "date"], disorder)

    # traffic incidents: one tight hotspot per community plus scattered points
    incidents = []
    for ci, (_, _, ring) in enumerate(comms):
        lon0, lat0 = ring[0]
        centre = (lat0 + CELL[0] * rng.uniform(0.3, 0.7), lon0 + CELL[1] * rng.uniform(0.3, 0.7))
        n_hot = int(40 + 40 * scale[ci])
        hot = np.column_stack(
            [rng.normal(centre[0], 0.0008, n_hot), rng.normal(centre[1], 0.0012, n_hot)]
        )
        pts = np.vstack([hot, _inside(rng, ring, 8)])
        for lat, lon in pts:
            text = str(rng.choice(INCIDENT_TEMPLATES)).format(street=rng.choice(STREETS))
            day = int(rng.integers(1, 29))
            incidents.append([text, f"{rng.choice(dates)}-{day:02d}", f"({_r(lat)}, {_r(lon)})"])
    incidents.append(["Incident outside city limits", f"{dates[0]}-01", f"({ORIGIN[0] - 0.05}, {ORIGIN[1] - 0.05})"])
    incidents.append(["Incident with no location", f"{dates[0]}-02", ""])
    rows = [[f"TI{i + 1:05d}", *r] for i, r in enumerate(incidents)]
    files["traffic_incidents.csv"] = _csv(["incident_id", "description", "start_date", "location"], rows)

    files["config.json"] = json.dumps(default_config(), indent=2, sort_keys=True) + "\n"
    return files


def default_config() -> dict[str, Any]:
    """Pipeline configuration matching the files of :func:`generate_city`."""
    return {
        "seed": 0,
        "boundaries": {"path": "communities.geojson", "name_property": "name", "sector_property": "sector"},
        "datasets": {
            "crime": {"path": "crime.csv", "role": "crime", "date_column": "date", "category_column": "category"},
            "disorder": {"path": "disorder.csv", "role": "disorder", "date_column": "date", "category_column": "category"},
            "streetlights": {"path": "streetlights.csv", "role": "streetlights"},
            "trees": {"path": "trees.csv", "role": "trees"},
            "traffic_incidents": {
                "path": "traffic_incidents.csv",
                "role": "traffic_incidents",
                "latlon_column": "location",
                "description_column": "description",
                "date_column": "start_date",
                "category_column": "category",
            },
            "pets": {"path": "pets.csv", "role": "pets"},
            "census": {"path": "census.csv", "role": "census"},
        },
        "features": {"top_k": 10, "choropleth": ["crime_total", "disorder_count", "traffic_incident_count"], "bins": 5},
        "model": {
            "targets": ["crime_total", "disorder_count", "traffic_incident_count"],
            "alpha": 0.05,
            "bins": 4,
            "test_fraction": 0.2,
            "kinds": ["ols", "random_forest"],
            "forest": {"n_trees": 50},
        },
        "cluster": {
            "dataset": "traffic_incidents",
            "algorithms": {
                "kmeans": {"k": list(range(2, 8)), "n_init": [5]},
                "dbscan": {"eps": [0.001, 0.002, 0.004], "min_pts": [5, 10]},
                "optics": {"eps": [0.004], "min_pts": [5, 10], "extraction_eps": [0.002]},
                "agglomerative": {"n_clusters": [2, 3, 4, 5], "linkage": ["ward", "average"]},
                "clique": {"intervals": [5, 10, 20], "threshold": [3, 6]},
                "clarans": {"k": [2, 3, 4], "numlocal": [2]},
            },
            "n_jobs": 1,
        },
    }


def write_city(out_dir: str | Path, n_communities: int = 3, seed: int = 0) -> Path:
    """Write the synthetic inputs to ``out_dir``; returns the config path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in generate_city(n_communities, seed).items():
        (out / name).write_text(text, encoding="utf-8")
    return out / "config.json"
