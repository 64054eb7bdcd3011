"""Declarative scene model: terrain, collision geometry, traffic elements.

Scenes are flat 2D worlds loaded from versioned YAML documents
(lengths in meters, angles in degrees in-file, radians in-memory).
Static geometry is immutable after load; traffic-light states mutate
behind a version counter with synchronous change notification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import yaml

from .errors import SceneError

SCENE_FORMAT_VERSION = 1

TERRAIN_KINDS = ("asphalt", "dirt", "lawn", "snow", "water")
ELEMENT_KINDS = ("traffic_light", "stop", "give_way", "regulatory", "cautionary", "informatory")
LIGHT_STATES = ("red", "yellow", "green")

_PARALLEL_EPS = 1e-12


@dataclass(frozen=True)
class OrientedRect:
    cx: float
    cy: float
    yaw: float
    length: float
    width: float

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        hl, hw = self.length / 2.0, self.width / 2.0
        local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])


@dataclass
class TerrainPatch:
    kind: str
    friction_scale: float
    polygon: np.ndarray  # (N, 2)


@dataclass
class TrafficElement:
    id: str
    kind: str
    pose: tuple[float, float, float]  # x, y, yaw (rad)
    detection_radius: float = 0.5
    state: str | None = None  # lights only
    version: int = 0


@dataclass
class Scene:
    name: str
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    terrain_patches: list[TerrainPatch] = field(default_factory=list)
    collision_polygons: list[tuple[str, np.ndarray]] = field(default_factory=list)
    traffic_elements: dict[str, TrafficElement] = field(default_factory=dict)
    landmarks: dict[str, np.ndarray] = field(default_factory=dict)
    spawns: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    goals: dict[str, tuple[float, float]] = field(default_factory=dict)
    lane_bounds: list[np.ndarray] = field(default_factory=list)
    _subscribers: list = field(default_factory=list, repr=False)
    _segments: np.ndarray | None = field(default=None, repr=False)

    def subscribe(self, callback) -> None:
        """Register callback(element_id, state, version) for element changes."""
        self._subscribers.append(callback)

    def segments(self) -> np.ndarray:
        """All collision edges as an (M, 2, 2) array, cached."""
        if self._segments is None:
            segs = []
            for _, poly in self.collision_polygons:
                closed = np.vstack([poly, poly[:1]])
                for i in range(len(poly)):
                    segs.append((closed[i], closed[i + 1]))
            self._segments = np.array(segs) if segs else np.zeros((0, 2, 2))
        return self._segments

    def initial_element_states(self) -> dict[str, str | None]:
        return {eid: el.state for eid, el in self.traffic_elements.items()}


# ---------------------------------------------------------------------------
# geometric predicates

def _cross(ox, oy, ax, ay, bx, by) -> float:
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def _proper_segment_intersect(p1, p2, p3, p4) -> bool:
    d1 = _cross(p3[0], p3[1], p4[0], p4[1], p1[0], p1[1])
    d2 = _cross(p3[0], p3[1], p4[0], p4[1], p2[0], p2[1])
    d3 = _cross(p1[0], p1[1], p2[0], p2[1], p3[0], p3[1])
    d4 = _cross(p1[0], p1[1], p2[0], p2[1], p4[0], p4[1])
    return d1 * d2 < 0.0 and d3 * d4 < 0.0


def _on_segment(px, py, ax, ay, bx, by) -> bool:
    if _cross(ax, ay, bx, by, px, py) != 0.0:
        return False
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def point_in_polygon(point, polygon: np.ndarray, include_boundary: bool = True) -> bool:
    """Even-odd point-in-polygon test with explicit boundary handling."""
    px, py = float(point[0]), float(point[1])
    n = len(polygon)
    for i in range(n):
        ax, ay = polygon[i]
        bx, by = polygon[(i + 1) % n]
        if _on_segment(px, py, ax, ay, bx, by):
            return include_boundary
    inside = False
    for i in range(n):
        ax, ay = polygon[i]
        bx, by = polygon[(i + 1) % n]
        if (ay > py) != (by > py):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < x_cross:
                inside = not inside
    return inside


def _polygon_is_simple(polygon: np.ndarray) -> bool:
    n = len(polygon)
    if n < 3:
        return False
    closed = np.vstack([polygon, polygon[:1]])
    for i in range(n):
        for j in range(i + 1, n):
            adjacent = j == i + 1 or (i == 0 and j == n - 1)
            if adjacent:
                continue
            if _proper_segment_intersect(closed[i], closed[i + 1], closed[j], closed[j + 1]):
                return False
    return True


def convex_overlap_strict(pts_a: np.ndarray, pts_b: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons; shared-boundary
    contact (zero-area overlap) does not count."""
    for pts in (pts_a, pts_b):
        n = len(pts)
        for i in range(n):
            edge = pts[(i + 1) % n] - pts[i]
            axis = np.array([-edge[1], edge[0]])
            proj_a = pts_a @ axis
            proj_b = pts_b @ axis
            if proj_a.max() <= proj_b.min() or proj_b.max() <= proj_a.min():
                return False
    return True


# ---------------------------------------------------------------------------
# queries

def raycast(scene: Scene, origin, direction, max_dist: float):
    """Nearest intersection of a planar ray with any collision edge.

    Returns (hit_point, distance) or None. Collinear overlap with an
    edge counts as a hit at the nearest overlapped point.
    """
    dx, dy = float(direction[0]), float(direction[1])
    norm = math.hypot(dx, dy)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"direction must be unit length, |d| = {norm}")
    ox, oy = float(origin[0]), float(origin[1])

    best_t = math.inf
    for _, poly in scene.collision_polygons:
        n = len(poly)
        for i in range(n):
            px, py = poly[i]
            qx, qy = poly[(i + 1) % n]
            ex, ey = qx - px, qy - py
            denom = dx * ey - dy * ex
            opx, opy = px - ox, py - oy
            if abs(denom) > _PARALLEL_EPS:
                t = (opx * ey - opy * ex) / denom
                u = (opx * dy - opy * dx) / denom
                if 0.0 <= t <= max_dist and 0.0 <= u <= 1.0 and t < best_t:
                    best_t = t
            else:
                if abs(opx * dy - opy * dx) > _PARALLEL_EPS:
                    continue  # parallel, offset: no hit
                t_p = opx * dx + opy * dy
                t_q = (qx - ox) * dx + (qy - oy) * dy
                lo, hi = min(t_p, t_q), max(t_p, t_q)
                if hi < 0.0:
                    continue
                t = max(0.0, lo)
                if t <= max_dist and t < best_t:
                    best_t = t
    if math.isinf(best_t):
        return None
    return (np.array([ox + best_t * dx, oy + best_t * dy]), best_t)


def raycast_batch(scene: Scene, origin, directions: np.ndarray, max_dist: float) -> np.ndarray:
    """Vectorized raycast for N unit directions; returns distances (inf = miss)."""
    segs = scene.segments()
    n_rays = len(directions)
    if len(segs) == 0:
        return np.full(n_rays, np.inf)
    o = np.asarray(origin, dtype=float)
    d = np.asarray(directions, dtype=float)          # (N, 2)
    p = segs[:, 0, :]                                # (M, 2)
    e = segs[:, 1, :] - p                            # (M, 2)
    op = p - o                                       # (M, 2)

    denom = d[:, 0:1] * e[None, :, 1] - d[:, 1:2] * e[None, :, 0]      # (N, M)
    cross_op_e = op[:, 0] * e[:, 1] - op[:, 1] * e[:, 0]               # (M,)
    cross_op_d = op[None, :, 0] * d[:, 1:2] - op[None, :, 1] * d[:, 0:1]  # (N, M)

    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_op_e[None, :] / denom
        u = cross_op_d / denom
    regular = np.abs(denom) > _PARALLEL_EPS
    valid = regular & (t >= 0.0) & (t <= max_dist) & (u >= 0.0) & (u <= 1.0)
    t = np.where(valid, t, np.inf)
    dists = t.min(axis=1)

    # Collinear overlaps: rare, resolved exactly on the slow path.
    collinear = (~regular) & (np.abs(cross_op_d) <= _PARALLEL_EPS)
    if collinear.any():
        q = segs[:, 1, :]
        t_p = (op @ d.T).T                           # (N, M)
        t_q = ((q - o) @ d.T).T
        lo = np.minimum(t_p, t_q)
        hi = np.maximum(t_p, t_q)
        tc = np.where(collinear & (hi >= 0.0), np.maximum(0.0, lo), np.inf)
        tc = np.where(tc <= max_dist, tc, np.inf)
        dists = np.minimum(dists, tc.min(axis=1))
    return dists


def footprint_collision(scene: Scene, footprint: OrientedRect) -> bool:
    """True iff the footprint overlaps collision geometry or leaves the
    scene bounds. Boundary tangency (zero-area contact) is not overlap."""
    corners = footprint.corners()
    xmin, ymin, xmax, ymax = scene.bounds
    if (corners[:, 0] < xmin).any() or (corners[:, 0] > xmax).any() or \
       (corners[:, 1] < ymin).any() or (corners[:, 1] > ymax).any():
        return True
    for _, poly in scene.collision_polygons:
        n = len(poly)
        crossed = False
        for i in range(4):
            a, b = corners[i], corners[(i + 1) % 4]
            for j in range(n):
                if _proper_segment_intersect(a, b, poly[j], poly[(j + 1) % n]):
                    crossed = True
                    break
            if crossed:
                break
        if crossed:
            return True
        if any(point_in_polygon(c, poly, include_boundary=False) for c in corners):
            return True
        if any(point_in_polygon(v, corners, include_boundary=False) for v in poly):
            return True
    return False


def terrain_at(scene: Scene, point) -> float:
    """Friction scale of the topmost (last declared) terrain patch under
    the point; 1.0 (asphalt) where no patch applies."""
    px, py = float(point[0]), float(point[1])
    xmin, ymin, xmax, ymax = scene.bounds
    if not (xmin <= px <= xmax and ymin <= py <= ymax):
        raise SceneError(f"point ({px}, {py}) outside scene bounds {scene.bounds}")
    for patch in reversed(scene.terrain_patches):
        if point_in_polygon((px, py), patch.polygon):
            return patch.friction_scale
    return 1.0


def set_element_state(scene: Scene, element_id: str, state: str) -> TrafficElement:
    element = scene.traffic_elements.get(element_id)
    if element is None:
        raise SceneError(f"unknown traffic element '{element_id}'")
    if element.kind != "traffic_light":
        raise SceneError(f"element '{element_id}' of kind '{element.kind}' has no settable state")
    if state not in LIGHT_STATES:
        raise SceneError(f"invalid light state '{state}' for '{element_id}' (expected one of {LIGHT_STATES})")
    element.state = state
    element.version += 1
    for callback in scene._subscribers:
        callback(element_id, state, element.version)
    return element


# ---------------------------------------------------------------------------
# loading

def _parse_polygon(raw, context: str, bounds) -> np.ndarray:
    try:
        poly = np.array([[float(x), float(y)] for x, y in raw])
    except (TypeError, ValueError) as exc:
        raise SceneError(f"{context}: polygon must be a list of [x, y] pairs") from exc
    if not _polygon_is_simple(poly):
        raise SceneError(f"{context}: polygon is degenerate or self-intersecting")
    xmin, ymin, xmax, ymax = bounds
    if poly[:, 0].min() < xmin or poly[:, 0].max() > xmax or \
       poly[:, 1].min() < ymin or poly[:, 1].max() > ymax:
        raise SceneError(f"{context}: polygon extends outside scene bounds")
    return poly


def load_scene(text: str) -> Scene:
    """Parse and validate a scene document (see scenes/ for the format)."""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SceneError(f"scene is not valid YAML: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise SceneError("scene root must be a mapping")

    version = data.get("version")
    if version != SCENE_FORMAT_VERSION:
        raise SceneError(f"unsupported scene format version {version!r} (expected {SCENE_FORMAT_VERSION})")

    known = {"version", "name", "bounds", "terrain", "collision", "traffic",
             "landmarks", "spawns", "goals", "lane_bounds"}
    unknown = set(data) - known
    if unknown:
        raise SceneError(f"unknown scene section(s): {', '.join(sorted(unknown))}")

    bounds_raw = data.get("bounds", [-5.0, -5.0, 5.0, 5.0])
    if len(bounds_raw) != 4 or bounds_raw[0] >= bounds_raw[2] or bounds_raw[1] >= bounds_raw[3]:
        raise SceneError(f"bounds must be [xmin, ymin, xmax, ymax] with positive extent, got {bounds_raw}")
    bounds = tuple(float(v) for v in bounds_raw)

    scene = Scene(name=str(data.get("name", "unnamed")), bounds=bounds)

    for i, entry in enumerate(data.get("terrain") or []):
        kind = entry.get("kind")
        if kind not in TERRAIN_KINDS:
            raise SceneError(f"terrain[{i}]: unknown kind '{kind}' (expected one of {TERRAIN_KINDS})")
        scale = float(entry.get("friction_scale", 1.0))
        if scale <= 0.0:
            raise SceneError(f"terrain[{i}] ({kind}): friction_scale must be positive, got {scale}")
        poly = _parse_polygon(entry.get("polygon", []), f"terrain[{i}] ({kind})", bounds)
        scene.terrain_patches.append(TerrainPatch(kind, scale, poly))

    for i, entry in enumerate(data.get("collision") or []):
        pid = str(entry.get("id", f"collision_{i}"))
        poly = _parse_polygon(entry.get("polygon", []), f"collision '{pid}'", bounds)
        scene.collision_polygons.append((pid, poly))

    for i, entry in enumerate(data.get("traffic") or []):
        eid = entry.get("id")
        if not eid:
            raise SceneError(f"traffic[{i}]: missing id")
        eid = str(eid)
        if eid in scene.traffic_elements:
            raise SceneError(f"duplicate traffic element id '{eid}'")
        kind = entry.get("kind")
        if kind not in ELEMENT_KINDS:
            raise SceneError(f"traffic '{eid}': unknown kind '{kind}' (expected one of {ELEMENT_KINDS})")
        pose_raw = entry.get("pose", [0.0, 0.0, 0.0])
        pose = (float(pose_raw[0]), float(pose_raw[1]), math.radians(float(pose_raw[2])))
        radius = float(entry.get("detection_radius", 0.5))
        if radius <= 0.0:
            raise SceneError(f"traffic '{eid}': detection_radius must be positive, got {radius}")
        state = entry.get("state")
        if kind == "traffic_light":
            state = state or "red"
            if state not in LIGHT_STATES:
                raise SceneError(f"traffic '{eid}': invalid light state '{state}'")
        elif state is not None:
            raise SceneError(f"traffic '{eid}': kind '{kind}' does not carry a state")
        scene.traffic_elements[eid] = TrafficElement(eid, kind, pose, radius, state)

    for i, entry in enumerate(data.get("landmarks") or []):
        lid = str(entry.get("id", f"lm_{i}"))
        point = entry.get("point", [])
        if len(point) != 3:
            raise SceneError(f"landmark '{lid}': point must be [x, y, z]")
        scene.landmarks[lid] = np.array([float(v) for v in point])

    for name, pose_raw in (data.get("spawns") or {}).items():
        if len(pose_raw) != 3:
            raise SceneError(f"spawn '{name}': pose must be [x, y, yaw_deg]")
        scene.spawns[str(name)] = (float(pose_raw[0]), float(pose_raw[1]), math.radians(float(pose_raw[2])))

    for name, point in (data.get("goals") or {}).items():
        if len(point) != 2:
            raise SceneError(f"goal '{name}': must be [x, y]")
        scene.goals[str(name)] = (float(point[0]), float(point[1]))

    for i, line in enumerate(data.get("lane_bounds") or []):
        pts = np.array([[float(x), float(y)] for x, y in line])
        if len(pts) < 2:
            raise SceneError(f"lane_bounds[{i}]: need at least 2 points")
        scene.lane_bounds.append(pts)

    return scene


def load_scene_file(path) -> Scene:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return load_scene(fh.read())
    except OSError as exc:
        raise SceneError(f"cannot read scene file {path}: {exc}") from exc


def bundled_scene_path(name: str):
    ref = resources.files("curbsim") / "scenes" / f"{name}.yaml"
    if not ref.is_file():
        raise SceneError(f"no bundled scene named '{name}'")
    return ref


def load_bundled_scene(name: str) -> Scene:
    return load_scene(bundled_scene_path(name).read_text(encoding="utf-8"))
