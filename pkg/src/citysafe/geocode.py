"""Community boundaries and record geocoding.

Everything here works in planar lat/lon degrees; no projection is applied.
GeoJSON stores ``[lon, lat]`` and the loader swaps to ``(lat, lon)``.
"""

from __future__ import annotations

import json
import math
import warnings
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .errors import GeocodingError, LoadError
from .ingest import Dataset

# tolerance (degrees) for treating a point as lying on a polygon edge
EDGE_TOL = 1e-12

SOURCE_GIVEN = "given"
SOURCE_CENTROID = "centroid"
SOURCE_POLYGON = "point_in_polygon"
SOURCE_UNMATCHED = "unmatched"


class GeocodeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float

    def __post_init__(self):
        lat, lon = float(self.latitude), float(self.longitude)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinate ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise ValueError(f"longitude {lon} outside [-180, 180]")
        object.__setattr__(self, "latitude", lat)
        object.__setattr__(self, "longitude", lon)


def _as_ring(ring) -> np.ndarray:
    arr = np.asarray([(p.latitude, p.longitude) if isinstance(p, GeoPoint) else p for p in ring], dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("ring must be a sequence of (lat, lon) pairs")
    return arr


def _ring_area_centroid(ring: np.ndarray) -> tuple[float, float, float]:
    """Signed shoelace area and centroid of a closed ring."""
    x0, y0 = ring[:-1, 0], ring[:-1, 1]
    x1, y1 = ring[1:, 0], ring[1:, 1]
    cross = x0 * y1 - x1 * y0
    area = cross.sum() / 2.0
    if area == 0.0:
        return 0.0, math.nan, math.nan
    cx = ((x0 + x1) * cross).sum() / (6.0 * area)
    cy = ((y0 + y1) * cross).sum() / (6.0 * area)
    return area, cx, cy


def community_centroid(rings: Sequence) -> GeoPoint:
    """Area-weighted centroid of one or more closed rings of ``(lat, lon)``.

    Each ring contributes its shoelace centroid weighted by absolute area.
    Zero total area falls back to the mean of the distinct ring vertices.
    """
    arrs = [_as_ring(r) for r in rings]
    wsum = sx = sy = 0.0
    for ring in arrs:
        area, cx, cy = _ring_area_centroid(ring)
        w = abs(area)
        if w > 0:
            wsum += w
            sx += w * cx
            sy += w * cy
    if wsum > 0:
        return GeoPoint(sx / wsum, sy / wsum)
    verts = np.concatenate([r[:-1] if len(r) > 1 and np.array_equal(r[0], r[-1]) else r for r in arrs])
    m = verts.mean(axis=0)
    return GeoPoint(float(m[0]), float(m[1]))


def ring_position(ring: np.ndarray, lat: float, lon: float, tol: float = EDGE_TOL) -> int:
    """1 inside, 0 on the boundary, -1 outside (even-odd rule)."""
    a = ring[:-1]
    b = ring[1:]
    ax, ay = a[:, 0], a[:, 1]
    bx, by = b[:, 0], b[:, 1]

    # on-edge test: collinear and within the segment's bounding box
    cross = (bx - ax) * (lon - ay) - (by - ay) * (lat - ax)
    seg_len = np.hypot(bx - ax, by - ay)
    near = np.abs(cross) <= tol * seg_len
    within = (
        (lat >= np.minimum(ax, bx) - tol)
        & (lat <= np.maximum(ax, bx) + tol)
        & (lon >= np.minimum(ay, by) - tol)
        & (lon <= np.maximum(ay, by) + tol)
    )
    if np.any(near & within):
        return 0

    # cast a ray towards +lon; count edges straddling the point's latitude
    straddle = (ax > lat) != (bx > lat)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = ay + (lat - ax) * (by - ay) / (bx - ax)
    hits = np.count_nonzero(straddle & (lon < x_cross))
    return 1 if hits % 2 else -1


@dataclass(frozen=True)
class Community:
    name: str
    sector: str | None
    rings: tuple[np.ndarray, ...]
    centroid: GeoPoint
    bbox: tuple[float, float, float, float]  # min_lat, min_lon, max_lat, max_lon

    def contains(self, lat: float, lon: float) -> bool:
        min_lat, min_lon, max_lat, max_lon = self.bbox
        if not (min_lat - EDGE_TOL <= lat <= max_lat + EDGE_TOL and min_lon - EDGE_TOL <= lon <= max_lon + EDGE_TOL):
            return False
        return any(ring_position(r, lat, lon) >= 0 for r in self.rings)

    def strictly_contains(self, lat: float, lon: float) -> bool:
        return any(ring_position(r, lat, lon) > 0 for r in self.rings)


def make_community(name: str, rings: Sequence, sector: str | None = None) -> Community:
    arrs = []
    for ring in rings:
        arr = _as_ring(ring)
        arr.setflags(write=False)
        arrs.append(arr)
    allv = np.concatenate(arrs)
    bbox = (float(allv[:, 0].min()), float(allv[:, 1].min()), float(allv[:, 0].max()), float(allv[:, 1].max()))
    return Community(name, sector, tuple(arrs), community_centroid(arrs), bbox)


class BoundarySet:
    """Ordered, immutable collection of community polygons."""

    def __init__(self, entries: Sequence[Community]):
        self._entries = tuple(entries)
        self._by_key: dict[str, Community] = {}
        for c in self._entries:
            key = name_key(c.name)
            if key in self._by_key:
                raise ValueError(f"duplicate community name {c.name!r}")
            self._by_key[key] = c

    @property
    def entries(self) -> tuple[Community, ...]:
        return self._entries

    @property
    def names(self) -> list[str]:
        return [c.name for c in self._entries]

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def get(self, name: str | None) -> Community | None:
        if name is None:
            return None
        return self._by_key.get(name_key(name))

    def find_overlaps(self, samples: int = 7) -> list[tuple[str, str]]:
        """Pairs of communities whose interiors share a sampled point."""
        found = []
        ents = self._entries
        for i in range(len(ents)):
            a = ents[i]
            for j in range(i + 1, len(ents)):
                b = ents[j]
                lo_lat, lo_lon = max(a.bbox[0], b.bbox[0]), max(a.bbox[1], b.bbox[1])
                hi_lat, hi_lon = min(a.bbox[2], b.bbox[2]), min(a.bbox[3], b.bbox[3])
                if lo_lat >= hi_lat or lo_lon >= hi_lon:
                    continue
                # interior grid of the bbox intersection, avoiding its edges
                lats = lo_lat + (hi_lat - lo_lat) * (np.arange(samples) + 0.5) / samples
                lons = lo_lon + (hi_lon - lo_lon) * (np.arange(samples) + 0.5) / samples
                if any(a.strictly_contains(la, lo) and b.strictly_contains(la, lo) for la in lats for lo in lons):
                    found.append((a.name, b.name))
        return found


def name_key(name: str) -> str:
    return " ".join(name.split()).casefold()


def _feature_rings(geom: dict[str, Any], index: int) -> list[list]:
    gtype = geom.get("type")
    coords = geom.get("coordinates")
    if gtype == "Polygon":
        polys = [coords]
    elif gtype == "MultiPolygon":
        polys = coords
    else:
        raise LoadError(index, f"unsupported geometry type {gtype!r}")
    if not polys:
        raise LoadError(index, "empty geometry")
    rings = []
    for poly in polys:
        if not poly:
            raise LoadError(index, "polygon without rings")
        if len(poly) > 1:
            warnings.warn(f"feature {index}: {len(poly) - 1} interior ring(s) ignored", GeocodeWarning, stacklevel=3)
        rings.append(poly[0])
    return rings


def load_boundaries(
    geojson: bytes | str,
    name_property: str = "name",
    sector_property: str = "sector",
    check_overlaps: bool = True,
) -> BoundarySet:
    """Build a :class:`BoundarySet` from a GeoJSON FeatureCollection."""
    if isinstance(geojson, bytes):
        geojson = geojson.decode("utf-8-sig")
    try:
        doc = json.loads(geojson)
    except json.JSONDecodeError as exc:
        raise LoadError(-1, f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise LoadError(-1, "not a GeoJSON FeatureCollection")

    entries = []
    seen: set[str] = set()
    for idx, feat in enumerate(doc.get("features") or []):
        props = feat.get("properties") or {}
        name = props.get(name_property)
        if name is None or not str(name).strip():
            raise LoadError(idx, f"missing {name_property!r} property")
        name = str(name).strip()
        if name_key(name) in seen:
            raise LoadError(idx, f"duplicate community name {name!r}")
        seen.add(name_key(name))

        rings = []
        for ring in _feature_rings(feat.get("geometry") or {}, idx):
            if len(ring) < 4:
                raise LoadError(idx, f"ring has {len(ring)} vertices, need at least 4")
            if list(ring[0]) != list(ring[-1]):
                raise LoadError(idx, "ring is not closed")
            try:
                rings.append([(float(p[1]), float(p[0])) for p in ring])
            except (TypeError, ValueError, IndexError) as exc:
                raise LoadError(idx, f"bad coordinate: {exc}") from exc
        sector = props.get(sector_property)
        entries.append(make_community(name, rings, None if sector is None else str(sector)))

    bset = BoundarySet(entries)
    if check_overlaps:
        overlaps = bset.find_overlaps()
        if overlaps:
            listed = ", ".join(f"{a}/{b}" for a, b in overlaps)
            warnings.warn(f"overlapping communities (first match wins): {listed}", GeocodeWarning, stacklevel=2)
    return bset


def read_boundaries(path: str | Path, **kwargs) -> BoundarySet:
    return load_boundaries(Path(path).read_bytes(), **kwargs)


def point_in_community(p: GeoPoint, b: BoundarySet) -> str | None:
    """Name of the first community (in stored order) containing ``p``."""
    for c in b.entries:
        if c.contains(p.latitude, p.longitude):
            return c.name
    return None


def geocode_dataset(
    d: Dataset,
    b: BoundarySet,
    lat_column: str = "latitude",
    lon_column: str = "longitude",
    name_column: str = "community_name",
    source_column: str = "geocode_source",
) -> Dataset:
    """Give every row both coordinates and a community name.

    Rows with both keep them; rows with only a name receive the community
    centroid; rows with only coordinates receive the containing community.
    Rows that resolve to no community keep a null name and are marked
    ``unmatched`` in ``source_column``.
    """
    has_coords = d.has_column(lat_column) and d.has_column(lon_column)
    has_name = d.has_column(name_column)
    if not has_coords and not has_name:
        raise GeocodingError(
            f"dataset {d.name!r} has neither {lat_column}/{lon_column} nor {name_column} columns"
        )

    n = len(d)
    lats = d.column(lat_column) if has_coords else [None] * n
    lons = d.column(lon_column) if has_coords else [None] * n
    names = d.column(name_column) if has_name else [None] * n
    prior = d.column(source_column) if d.has_column(source_column) else [None] * n

    out_lat, out_lon, out_name, out_src = [], [], [], []
    for lat, lon, name, src in zip(lats, lons, names, prior):
        coords = lat is not None and lon is not None
        if coords and name is not None:
            out_lat.append(lat)
            out_lon.append(lon)
            out_name.append(name)
            out_src.append(src or SOURCE_GIVEN)
        elif name is not None:
            comm = b.get(name)
            if comm is None:
                out_lat.append(None)
                out_lon.append(None)
                out_name.append(None)
                out_src.append(SOURCE_UNMATCHED)
            else:
                out_lat.append(comm.centroid.latitude)
                out_lon.append(comm.centroid.longitude)
                out_name.append(name)
                out_src.append(SOURCE_CENTROID)
        elif coords:
            found = point_in_community(GeoPoint(lat, lon), b)
            out_lat.append(lat)
            out_lon.append(lon)
            out_name.append(found)
            out_src.append(SOURCE_POLYGON if found is not None else SOURCE_UNMATCHED)
        else:
            out_lat.append(None)
            out_lon.append(None)
            out_name.append(None)
            out_src.append(SOURCE_UNMATCHED)

    out = d.with_column(lat_column, "real", out_lat)
    out = out.with_column(lon_column, "real", out_lon)
    out = out.with_column(name_column, "text", out_name)
    out = out.with_column(source_column, "text", out_src)
    unmatched = out_src.count(SOURCE_UNMATCHED)
    if unmatched:
        warnings.warn(f"dataset {d.name!r}: {unmatched} row(s) matched no community", GeocodeWarning, stacklevel=2)
    return out


def boundaries_to_geometry(c: Community) -> dict[str, Any]:
    """GeoJSON geometry (``[lon, lat]`` order) for one community."""
    polys = [[[[float(p[1]), float(p[0])] for p in ring]] for ring in c.rings]
    if len(polys) == 1:
        return {"type": "Polygon", "coordinates": polys[0]}
    return {"type": "MultiPolygon", "coordinates": polys}
