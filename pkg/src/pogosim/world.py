"""Arena geometry, object instantiation and light-field queries.

Lengths are millimetres throughout. Arena polygons are loaded from
header-free CSV files with one ``x,y`` vertex per row (outer boundary,
counter-clockwise), then uniformly rescaled so the enclosed area matches
the configured ``arena_surface`` and translated so the bounding box
starts at the origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from pogosim.config import LIGHT_MAX, ObjectSpec, SimConfig

WALLS_ID = 65535
MEMBRANES_ID = 65534
MEMBRANE_LINK_RADIUS = 5.0  # mm, documented constant
PLACEMENT_MAX_ATTEMPTS = 100_000
MAX_FILL_FRACTION = 0.70


class ArenaError(ValueError):
    pass


class PlacementError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# polygon helpers

def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area (positive for counter-clockwise order)."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    x, y = vertices[:, 0], vertices[:, 1]
    cross = x * np.roll(y, -1) - np.roll(x, -1) * y
    area = 0.5 * np.sum(cross)
    cx = np.sum((x + np.roll(x, -1)) * cross) / (6.0 * area)
    cy = np.sum((y + np.roll(y, -1)) * cross) / (6.0 * area)
    return np.array([cx, cy])


def _segments_properly_intersect(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(v) < 1e-12 else (1 if v > 0 else -1)

    o1, o2 = orient(p1, p2, p3), orient(p1, p2, p4)
    o3, o4 = orient(p3, p4, p1), orient(p3, p4, p2)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


def polygon_is_simple(vertices: np.ndarray) -> bool:
    n = len(vertices)
    for i in range(n):
        a1, a2 = vertices[i], vertices[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_properly_intersect(a1, a2, vertices[j], vertices[(j + 1) % n]):
                return False
    return True


def point_in_polygon(point, vertices: np.ndarray) -> bool:
    x, y = point
    inside = False
    n = len(vertices)
    for i in range(n):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xint:
                inside = not inside
    return inside


def point_segment_distance(point, a, b) -> float:
    p = np.asarray(point, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


# ---------------------------------------------------------------------------
# arena

@dataclass(frozen=True)
class Arena:
    """Closed boundary polygon scaled to a target surface."""

    boundary: np.ndarray  # (n, 2) vertices, CCW, mm
    surface: float  # mm^2

    @cached_property
    def wall_segments(self) -> np.ndarray:
        """(n, 2, 2) array of boundary segments."""
        return np.stack([self.boundary, np.roll(self.boundary, -1, axis=0)], axis=1)

    @cached_property
    def center(self) -> np.ndarray:
        return polygon_centroid(self.boundary)

    @cached_property
    def bounds(self) -> tuple[float, float, float, float]:
        xs, ys = self.boundary[:, 0], self.boundary[:, 1]
        return float(xs.min()), float(ys.min()), float(xs.max()), float(ys.max())

    def contains(self, point, clearance: float = 0.0) -> bool:
        if not point_in_polygon(point, self.boundary):
            return False
        if clearance <= 0.0:
            return True
        return self.distance_to_walls(point) >= clearance

    def distance_to_walls(self, point) -> float:
        segs = self.wall_segments
        a = segs[:, 0]
        ab = segs[:, 1] - a
        ap = np.asarray(point, dtype=float) - a
        denom = np.einsum("ij,ij->i", ab, ab)
        t = np.clip(np.einsum("ij,ij->i", ap, ab) / np.where(denom == 0, 1.0, denom),
                    0.0, 1.0)
        closest = a + t[:, None] * ab
        d = np.hypot(*(np.asarray(point, dtype=float) - closest).T)
        return float(d.min())


def disk_arena_csv(n_vertices: int = 64) -> str:
    """Built-in unit-disk boundary, used when no arena_file is configured."""
    angles = np.linspace(0.0, 2.0 * math.pi, n_vertices, endpoint=False)
    return "\n".join(f"{math.cos(a):.9f},{math.sin(a):.9f}" for a in angles)


def load_arena(csv_text: str, target_surface: float) -> Arena:
    """Parse boundary vertices, scale to ``target_surface`` and normalize pose."""
    vertices = []
    for lineno, line in enumerate(csv_text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ArenaError(f"arena CSV line {lineno}: expected 'x,y', got {line!r}")
        try:
            vertices.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ArenaError(f"arena CSV line {lineno}: non-numeric vertex {line!r}") from None
    if len(vertices) < 3:
        raise ArenaError(f"arena polygon needs at least 3 vertices, got {len(vertices)}")

    boundary = np.asarray(vertices, dtype=float)
    if not polygon_is_simple(boundary):
        raise ArenaError("arena polygon is self-intersecting")
    area = polygon_area(boundary)
    if area < 0:  # enforce CCW order
        boundary = boundary[::-1].copy()
        area = -area
    if area == 0:
        raise ArenaError("arena polygon is degenerate (zero area)")

    boundary = boundary * math.sqrt(target_surface / area)
    boundary = boundary - boundary.min(axis=0)  # bounding box starts at (0, 0)
    return Arena(boundary=boundary, surface=float(target_surface))


def load_arena_for_config(config: SimConfig, search_dir=None) -> Arena:
    from pathlib import Path

    if config.arena_file is None:
        return load_arena(disk_arena_csv(), config.arena_surface)
    path = Path(config.arena_file)
    if not path.is_absolute() and search_dir is not None:
        candidate = Path(search_dir) / path
        if candidate.exists():
            path = candidate
    return load_arena(path.read_text(encoding="utf-8"), config.arena_surface)


# ---------------------------------------------------------------------------
# light fields

@dataclass(frozen=True)
class LightField:
    mode: str  # static | gradient
    geometry: str  # global | disk
    value: int
    center: Optional[np.ndarray] = None
    radius: float = 0.0
    photo_start_at: float = -1.0
    photo_start_duration: float = 0.0
    photo_start_value: int = LIGHT_MAX

    def ambient(self, position) -> float:
        if self.geometry == "global":
            return float(self.value)
        d = math.hypot(position[0] - self.center[0], position[1] - self.center[1])
        if d >= self.radius:
            return 0.0
        if self.mode == "gradient":
            return float(self.value) * (1.0 - d / self.radius)
        return float(self.value)

    def flash_active(self, t: float) -> bool:
        return (self.photo_start_at >= 0.0
                and self.photo_start_at <= t < self.photo_start_at + self.photo_start_duration)


def sample_light(fields, position, t: float) -> int:
    """Summed light level at a position and time, clamped to the sensor range."""
    level = 0.0
    for f in fields:
        level += f.ambient(position)
    level = min(level, float(LIGHT_MAX))
    for f in fields:
        if f.flash_active(t):
            level = max(level, float(f.photo_start_value))
    return int(min(max(level, 0.0), LIGHT_MAX))


# ---------------------------------------------------------------------------
# world objects

@dataclass
class WorldObject:
    id: int
    category: str
    kind: str  # ObjectSpec.type
    pose: tuple[float, float, float]  # x mm, y mm, angle rad
    spec: ObjectSpec
    # pogowall: IR-emitting segments; membrane: positions of the chain links
    segments: Optional[np.ndarray] = None
    link_positions: Optional[np.ndarray] = None
    body_index: int = -1  # filled by the physics engine

    @property
    def position(self) -> np.ndarray:
        return np.array(self.pose[:2])


def _hex_lattice(center, spacing, count_hint):
    """Hexagonally packed points around a center, nearest-first."""
    points = [np.asarray(center, dtype=float)]
    ring = 1
    while len(points) < count_hint * 4:
        for k in range(6 * ring):
            angle = 2.0 * math.pi * k / (6 * ring)
            # axial rings approximated on a triangular lattice
            r = spacing * ring
            points.append(np.array([center[0] + r * math.cos(angle),
                                    center[1] + r * math.sin(angle)]))
        ring += 1
    points.sort(key=lambda p: (round(np.hypot(*(p - center)), 6), round(math.atan2(*(p - center)[::-1]), 6)))
    return points


def place_initial(config: SimConfig, arena: Arena, rng: np.random.Generator) -> list[WorldObject]:
    """Instantiate every configured object with a collision-free initial pose.

    Deterministic for a fixed rng state. Robot-like objects get sequential
    ids starting at 0 in category declaration order; walls and membranes
    use the reserved ids 65535 and 65534.
    """
    disk_categories = [(name, spec) for name, spec in config.objects.items()
                       if spec.type in ("pogobot", "pogobject", "passive_object")]

    total_disk_area = sum(spec.nb * math.pi * spec.radius ** 2 for _, spec in disk_categories)
    if total_disk_area >= MAX_FILL_FRACTION * arena.surface:
        raise PlacementError(
            f"objects cover {total_disk_area / arena.surface:.0%} of the arena; "
            f"placement needs < {MAX_FILL_FRACTION:.0%} (use a larger arena_surface)")

    objects: list[WorldObject] = []
    total_nb = sum(spec.nb for _, spec in disk_categories)
    placed_xy = np.empty((total_nb, 2))
    placed_r = np.empty(total_nb)
    n_placed = 0

    def fits(p, radius):
        if not arena.contains(p, clearance=radius):
            return False
        if n_placed == 0:
            return True
        d2 = np.sum((placed_xy[:n_placed] - p) ** 2, axis=1)
        return bool(np.all(d2 >= (placed_r[:n_placed] + radius) ** 2))

    if config.initial_formation == "disk":
        max_radius = max((spec.radius for _, spec in disk_categories), default=1.0)
        lattice = iter(_hex_lattice(arena.center, 2.0 * max_radius * 1.05,
                                    sum(spec.nb for _, spec in disk_categories) + 1))

    next_id = 0
    for name, spec in disk_categories:
        for _ in range(spec.nb):
            if config.initial_formation == "disk":
                pose_xy = None
                for p in lattice:
                    if fits(p, spec.radius):
                        pose_xy = p
                        break
                if pose_xy is None:
                    raise PlacementError(f"disk formation cannot fit all of {name!r}")
            else:
                pose_xy = None
                xmin, ymin, xmax, ymax = arena.bounds
                for _attempt in range(PLACEMENT_MAX_ATTEMPTS):
                    p = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
                    if fits(p, spec.radius):
                        pose_xy = p
                        break
                if pose_xy is None:
                    raise PlacementError(
                        f"could not place {name!r} after {PLACEMENT_MAX_ATTEMPTS} attempts; "
                        "try a larger arena")
            heading = rng.uniform(0.0, 2.0 * math.pi)
            placed_xy[n_placed] = pose_xy
            placed_r[n_placed] = spec.radius
            n_placed += 1
            objects.append(WorldObject(
                id=next_id, category=name, kind=spec.type,
                pose=(float(pose_xy[0]), float(pose_xy[1]), float(heading)),
                spec=spec))
            next_id += 1

    for name, spec in config.objects.items():
        if spec.type == "pogowall":
            ref = arena.boundary[0]
            objects.append(WorldObject(
                id=WALLS_ID, category=name, kind="pogowall",
                pose=(float(ref[0]), float(ref[1]), 0.0),
                spec=spec, segments=arena.wall_segments.copy()))
        elif spec.type == "membrane":
            links = _membrane_links(arena.center, spec.radius)
            objects.append(WorldObject(
                id=MEMBRANES_ID, category=name, kind="membrane",
                pose=(float(arena.center[0]), float(arena.center[1]), float("nan")),
                spec=spec, link_positions=links))
        elif spec.type == "static_light":
            center = arena.center
            objects.append(WorldObject(
                id=next_id, category=name, kind="static_light",
                pose=(float(center[0]), float(center[1]), 0.0),
                spec=spec))
            next_id += 1

    return objects


def _membrane_links(center, radius: float) -> np.ndarray:
    """Closed chain of link centers on a circle; link spacing ~2x link radius."""
    circumference = 2.0 * math.pi * radius
    n = max(3, int(circumference // (2.0 * MEMBRANE_LINK_RADIUS)))
    angles = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    return np.stack([center[0] + radius * np.cos(angles),
                     center[1] + radius * np.sin(angles)], axis=1)


def light_fields(config: SimConfig, arena: Arena) -> list[LightField]:
    fields = []
    for spec in config.objects.values():
        if spec.type != "static_light":
            continue
        fields.append(LightField(
            mode=spec.light_mode,
            geometry=spec.geometry if spec.geometry in ("global", "disk") else "global",
            value=spec.value,
            center=arena.center if spec.geometry != "global" else None,
            radius=spec.radius,
            photo_start_at=spec.photo_start_at,
            photo_start_duration=spec.photo_start_duration,
            photo_start_value=spec.photo_start_value,
        ))
    return fields
