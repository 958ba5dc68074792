"""Continent assignment for images.

Two input modes: an explicit ``image_id,continent`` CSV, or an
``image_id,latitude,longitude`` CSV resolved against a region table of
lon/lat polygons. Regions are tested in table order and the first hit wins,
so overlapping polygons are allowed; the built-in table lists Europe before
Asia and is drawn for city-scale coordinates, not coastlines.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import GeoError

Ring = Tuple[Tuple[float, float], ...]


class Continent(str, enum.Enum):
    EUROPE = "Europe"
    AFRICA = "Africa"
    NORTH_AMERICA = "NorthAmerica"
    SOUTH_AMERICA = "SouthAmerica"
    ASIA = "Asia"
    OCEANIA = "Oceania"
    UNKNOWN = "Unknown"

    @property
    def display(self) -> str:
        return DISPLAY_NAMES[self]


# column order used by every table and metric file
CONTINENTS: Tuple[Continent, ...] = (
    Continent.EUROPE,
    Continent.AFRICA,
    Continent.NORTH_AMERICA,
    Continent.SOUTH_AMERICA,
    Continent.ASIA,
    Continent.OCEANIA,
)

DISPLAY_NAMES = {
    Continent.EUROPE: "Europe",
    Continent.AFRICA: "Africa",
    Continent.NORTH_AMERICA: "N. America",
    Continent.SOUTH_AMERICA: "S. America",
    Continent.ASIA: "Asia",
    Continent.OCEANIA: "Oceania",
    Continent.UNKNOWN: "Unknown",
}


def parse_continent(value: str) -> Continent:
    try:
        return Continent(value.strip())
    except ValueError:
        valid = ", ".join(c.value for c in CONTINENTS)
        raise GeoError(f"unknown continent {value!r} (expected one of: {valid})") from None


@dataclass(frozen=True)
class GeoTag:
    image_id: str
    continent: Continent
    latitude: Optional[float] = None
    longitude: Optional[float] = None


@dataclass(frozen=True)
class Region:
    continent: Continent
    # each polygon is a list of rings; rings after the first are holes
    polygons: Tuple[Tuple[Ring, ...], ...]


@dataclass(frozen=True)
class RegionTable:
    identifier: str
    regions: Tuple[Region, ...]


def _segments(ring: Ring):
    n = len(ring)
    for i in range(n):
        yield ring[i], ring[(i + 1) % n]


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _segments_cross(a, b, c, d) -> bool:
    """Proper or touching intersection between segments ab and cd."""
    d1, d2 = _orient(c, d, a), _orient(c, d, b)
    d3, d4 = _orient(a, b, c), _orient(a, b, d)
    if ((d1 > 0) != (d2 > 0)) and d1 != 0 and d2 != 0 and ((d3 > 0) != (d4 > 0)) and d3 != 0 and d4 != 0:
        return True

    def on_seg(p, q, r):
        return min(p[0], q[0]) <= r[0] <= max(p[0], q[0]) and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])

    return (
        (d1 == 0 and on_seg(c, d, a))
        or (d2 == 0 and on_seg(c, d, b))
        or (d3 == 0 and on_seg(a, b, c))
        or (d4 == 0 and on_seg(a, b, d))
    )


def ring_is_simple(ring: Ring) -> bool:
    n = len(ring)
    if n < 3:
        return False
    segs = list(_segments(ring))
    for i in range(n):
        for j in range(i + 1, n):
            # adjacent edges share a vertex by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(*segs[i], *segs[j]):
                return False
    return True


def _clean_ring(coords, where: str) -> Ring:
    pts = []
    for pt in coords:
        if not (isinstance(pt, (list, tuple)) and len(pt) >= 2):
            raise GeoError(f"{where}: ring vertices must be [lon, lat] pairs")
        lon, lat = float(pt[0]), float(pt[1])
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            raise GeoError(f"{where}: vertex ({lon}, {lat}) out of lon/lat range")
        pts.append((lon, lat))
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts.pop()
    ring = tuple(pts)
    if not ring_is_simple(ring):
        raise GeoError(f"{where}: polygon ring is not simple")
    return ring


def region_table_from_geojson(doc: dict, identifier: Optional[str] = None) -> RegionTable:
    if doc.get("type") != "FeatureCollection":
        raise GeoError("region file must be a GeoJSON FeatureCollection")
    regions = []
    for k, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        if "continent" not in props:
            raise GeoError(f"feature #{k} has no 'continent' property")
        continent = parse_continent(str(props["continent"]))
        geom = feat.get("geometry") or {}
        if geom.get("type") == "Polygon":
            raw = [geom["coordinates"]]
        elif geom.get("type") == "MultiPolygon":
            raw = geom["coordinates"]
        else:
            raise GeoError(f"feature #{k}: unsupported geometry type {geom.get('type')!r}")
        polys = tuple(
            tuple(_clean_ring(r, f"feature #{k} ({continent.value})") for r in poly) for poly in raw
        )
        regions.append(Region(continent, polys))
    if not regions:
        raise GeoError("region file has no features")
    return RegionTable(identifier or doc.get("name") or "custom", tuple(regions))


def load_region_table(path=None) -> RegionTable:
    """Load a region file, or the built-in coarse table when ``path`` is None."""
    if path is None:
        text = resources.files("geodisp").joinpath("data/continents_coarse_v1.geojson").read_text("utf-8")
        return region_table_from_geojson(json.loads(text))
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GeoError(f"{path}: malformed JSON: {exc.msg}") from None
    return region_table_from_geojson(doc, identifier=doc.get("name") or path.name)


def point_in_ring(lon: float, lat: float, ring: Ring) -> bool:
    inside = False
    for (x0, y0), (x1, y1) in _segments(ring):
        if (y0 > lat) != (y1 > lat):
            x_cross = x0 + (lat - y0) * (x1 - x0) / (y1 - y0)
            if lon < x_cross:
                inside = not inside
    return inside


def point_in_polygon(lon: float, lat: float, rings: Sequence[Ring]) -> bool:
    # even-odd over all rings handles holes
    inside = False
    for ring in rings:
        if point_in_ring(lon, lat, ring):
            inside = not inside
    return inside


def assign_continent(lat: float, lon: float, table: RegionTable) -> Continent:
    if not (math.isfinite(lat) and math.isfinite(lon)) or not (-90 <= lat <= 90 and -180 <= lon <= 180):
        raise GeoError(f"coordinates out of range: lat={lat}, lon={lon}")
    for region in table.regions:
        for poly in region.polygons:
            if point_in_polygon(lon, lat, poly):
                return region.continent
    return Continent.UNKNOWN


@dataclass
class GeoReport:
    mode: str
    rows: int = 0
    unknown: List[str] = field(default_factory=list)
    region_table: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "rows": self.rows,
            "excluded_unknown_continent": len(self.unknown),
            "region_table": self.region_table,
        }


def load_geo(path, mode: str = "explicit", table: Optional[RegionTable] = None) -> Tuple[Dict[str, GeoTag], GeoReport]:
    """Read a geo CSV. Images that resolve to Unknown are left out of the
    returned mapping and listed in the report."""
    if mode not in ("explicit", "latlon"):
        raise GeoError(f"geo mode must be 'explicit' or 'latlon', got {mode!r}")
    path = Path(path)
    expected = ["image_id", "continent"] if mode == "explicit" else ["image_id", "latitude", "longitude"]
    if mode == "latlon" and table is None:
        table = load_region_table()
    report = GeoReport(mode, region_table=table.identifier if mode == "latlon" else None)
    tags: Dict[str, GeoTag] = {}
    seen = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != expected:
            raise GeoError(f"{path}:1: expected header {','.join(expected)!r}, got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected):
                raise GeoError(f"{path}:{lineno}: expected {len(expected)} fields, got {len(row)}")
            image_id = row[0].strip()
            if image_id in seen:
                raise GeoError(f"{path}:{lineno}: duplicate image_id {image_id!r}")
            seen.add(image_id)
            report.rows += 1
            try:
                if mode == "explicit":
                    tag = GeoTag(image_id, parse_continent(row[1]))
                else:
                    try:
                        lat, lon = float(row[1]), float(row[2])
                    except ValueError:
                        raise GeoError(f"latitude/longitude must be numbers, got {row[1:]!r}") from None
                    tag = GeoTag(image_id, assign_continent(lat, lon, table), lat, lon)
            except GeoError as exc:
                raise GeoError(f"{path}:{lineno}: {exc}") from None
            if tag.continent is Continent.UNKNOWN:
                report.unknown.append(image_id)
                continue
            tags[image_id] = tag
    return tags, report


def write_geo(path, tags: Sequence[GeoTag], mode: str = "explicit") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if mode == "explicit":
            w.writerow(["image_id", "continent"])
            for t in tags:
                w.writerow([t.image_id, t.continent.value])
        else:
            w.writerow(["image_id", "latitude", "longitude"])
            for t in tags:
                w.writerow([t.image_id, repr(t.latitude), repr(t.longitude)])


def continent_counts(tags: Dict[str, GeoTag]) -> Counter:
    return Counter(t.continent for t in tags.values())
