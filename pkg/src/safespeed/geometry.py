"""Planar poses, vehicle footprints, occupancy grids and the collision predicates
used by the speed limiter.

Conventions: all angles are radians in (-pi, pi], grids are row-major with cell
(0, 0) at the grid-frame origin corner, and every cell is treated as a filled
closed square of side ``resolution``.  Touching counts as intersecting.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .prediction import PredictedTrajectory

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi].  Values already in range pass through
    unchanged so wrapping is idempotent."""
    if -math.pi < a <= math.pi:
        return a
    a = (a + math.pi) % TWO_PI - math.pi
    # Python's % returns [0, 2pi), so a lands in [-pi, pi); fold the open edge.
    return math.pi if a == -math.pi else a


@dataclass(frozen=True)
class Pose:
    """SE(2) pose: position in meters, yaw in radians."""

    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


IDENTITY = Pose(0.0, 0.0, 0.0)


def compose(a: Pose, b: Pose) -> Pose:
    """Pose composition a*b: b's translation rotated into a's frame and added,
    yaws summed."""
    c = math.cos(a.yaw)
    s = math.sin(a.yaw)
    return Pose(
        a.x + b.x * c - b.y * s,
        a.y + b.x * s + b.y * c,
        wrap_angle(a.yaw + b.yaw),
    )


def relative(a: Pose, b: Pose) -> Pose:
    """Pose of b expressed in a's frame, the inverse of :func:`compose`:
    compose(a, relative(a, b)) == b up to rounding."""
    c = math.cos(a.yaw)
    s = math.sin(a.yaw)
    dx = b.x - a.x
    dy = b.y - a.y
    return Pose(
        dx * c + dy * s,
        -dx * s + dy * c,
        wrap_angle(b.yaw - a.yaw),
    )


def transfer_trajectory(traj: "PredictedTrajectory", from_pose: Pose, to_pose: Pose) -> "PredictedTrajectory":
    """Rigidly move a predicted trajectory from one start pose to another.

    Every sample pose p becomes compose(to_pose, relative(from_pose, p)), so the
    whole rollout translates and rotates as one rigid body.  Speeds and time
    offsets are untouched.  ``from_pose`` is normally the trajectory's own start.
    """
    samples = tuple(
        dataclasses.replace(s, pose=compose(to_pose, relative(from_pose, s.pose)))
        for s in traj.samples
    )
    return dataclasses.replace(traj, samples=samples)


def _as_xy_tuple(vertices: Iterable[Sequence[float]]) -> tuple[tuple[float, float], ...]:
    out = tuple((float(p[0]), float(p[1])) for p in vertices)
    for x, y in out:
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError("vertex coordinates must be finite")
    return out


@dataclass(frozen=True)
class Footprint:
    """Convex vehicle outline in the body frame, vertices counter-clockwise.

    The reference point (default: the body origin, i.e. the pose point) must lie
    inside the outline so a pose can never be outside its own footprint.
    """

    vertices: tuple[tuple[float, float], ...]
    reference: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        verts = _as_xy_tuple(self.vertices)
        if len(verts) < 3:
            raise ValueError("footprint needs at least 3 vertices")
        object.__setattr__(self, "vertices", verts)
        n = len(verts)
        area2 = 0.0
        for i in range(n):
            x0, y0 = verts[i]
            x1, y1 = verts[(i + 1) % n]
            area2 += x0 * y1 - x1 * y0
        if area2 <= 0.0:
            raise ValueError("footprint vertices must wind counter-clockwise")
        # Convexity: every turn is a left turn (collinear points tolerated).
        for i in range(n):
            ax, ay = verts[i]
            bx, by = verts[(i + 1) % n]
            cx, cy = verts[(i + 2) % n]
            if (bx - ax) * (cy - ay) - (by - ay) * (cx - ax) < 0.0:
                raise ValueError("footprint must be convex")
        rx, ry = float(self.reference[0]), float(self.reference[1])
        object.__setattr__(self, "reference", (rx, ry))
        if not _point_in_polygon(rx, ry, verts):
            raise ValueError("footprint must contain its reference point")
        xs = np.array([v[0] for v in verts])
        ys = np.array([v[1] for v in verts])
        # Edge normals for separating-axis tests; magnitude is irrelevant.
        nx = np.roll(ys, -1) - ys
        ny = xs - np.roll(xs, -1)
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_ys", ys)
        object.__setattr__(self, "_nx", nx)
        object.__setattr__(self, "_ny", ny)
        object.__setattr__(self, "_circumradius", float(np.max(np.hypot(xs, ys))))

    @staticmethod
    def rectangle(length: float, width: float) -> "Footprint":
        """Axis-aligned rectangle centered on the body origin."""
        if length <= 0.0 or width <= 0.0:
            raise ValueError("rectangle dimensions must be positive")
        hl, hw = 0.5 * length, 0.5 * width
        return Footprint(((-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)))

    @property
    def circumradius(self) -> float:
        return self._circumradius  # type: ignore[attr-defined]

    def local_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Body-frame vertex coordinate arrays (shared, do not mutate)."""
        return self._xs, self._ys  # type: ignore[attr-defined]

    def edge_normals(self) -> tuple[np.ndarray, np.ndarray]:
        return self._nx, self._ny  # type: ignore[attr-defined]


@dataclass(frozen=True)
class DynamicObstacle:
    """Polyline outline of a detected obstacle, vehicle-frame coordinates."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = _as_xy_tuple(self.vertices)
        if len(verts) < 2:
            raise ValueError("obstacle polyline needs at least 2 vertices")
        object.__setattr__(self, "vertices", verts)


def footprint_at(pose: Pose, fp: Footprint) -> np.ndarray:
    """Footprint vertices placed at a map pose, returned as an (n, 2) array."""
    c = math.cos(pose.yaw)
    s = math.sin(pose.yaw)
    xs, ys = fp.local_arrays()
    out = np.empty((len(xs), 2))
    out[:, 0] = pose.x + c * xs - s * ys
    out[:, 1] = pose.y + s * xs + c * ys
    return out


class OccupancyGrid:
    """Binary occupancy grid with an SE(2) origin pose.

    ``cells[iy, ix]`` covers the grid-frame square
    [ix*res, (ix+1)*res] x [iy*res, (iy+1)*res].  Anything outside the grid
    counts as occupied, which keeps every query conservative.
    """

    def __init__(self, cells, resolution: float, origin: Pose = IDENTITY):
        occ = np.asarray(cells, dtype=bool)
        if occ.ndim != 2 or occ.size == 0:
            raise ValueError("cells must be a non-empty 2-D array")
        if not (resolution > 0.0 and math.isfinite(resolution)):
            raise ValueError("resolution must be positive")
        occ = occ.copy()
        occ.setflags(write=False)
        self._occ = occ
        self._res = float(resolution)
        self._origin = origin
        # Integral image: occupied-cell count of any index window in O(1).
        cum = np.zeros((occ.shape[0] + 1, occ.shape[1] + 1), dtype=np.int64)
        np.cumsum(np.cumsum(occ, axis=0), axis=1, out=cum[1:, 1:])
        self._cum = cum

    @property
    def cells(self) -> np.ndarray:
        return self._occ

    @property
    def width(self) -> int:
        return self._occ.shape[1]

    @property
    def height(self) -> int:
        return self._occ.shape[0]

    @property
    def resolution(self) -> float:
        return self._res

    @property
    def origin(self) -> Pose:
        return self._origin

    @property
    def extent(self) -> tuple[float, float]:
        """Grid-frame size in meters: (width*res, height*res)."""
        return self.width * self._res, self.height * self._res

    def occupied(self, ix: int, iy: int) -> bool:
        """Cell occupancy; indices outside the grid report occupied."""
        if 0 <= ix < self.width and 0 <= iy < self.height:
            return bool(self._occ[iy, ix])
        return True

    def occupied_count(self, ix0, iy0, ix1, iy1):
        """Occupied cells in the inclusive index window, vectorized over arrays."""
        c = self._cum
        return (
            c[iy1 + 1, ix1 + 1]
            - c[iy0, ix1 + 1]
            - c[iy1 + 1, ix0]
            + c[iy0, ix0]
        )

    def to_grid_frame(self, points: np.ndarray) -> np.ndarray:
        """Map-frame (n, 2) points expressed in the grid frame."""
        o = self._origin
        if o.x == 0.0 and o.y == 0.0 and o.yaw == 0.0:
            return points
        c = math.cos(o.yaw)
        s = math.sin(o.yaw)
        dx = points[..., 0] - o.x
        dy = points[..., 1] - o.y
        out = np.empty_like(points)
        out[..., 0] = dx * c + dy * s
        out[..., 1] = -dx * s + dy * c
        return out

    @classmethod
    def from_pgm(cls, path, resolution: float, origin: Pose = IDENTITY,
                 occupied_below: float | None = None) -> "OccupancyGrid":
        """Load a PGM image (P2 or P5) as an occupancy grid.

        Pixel 0 is occupied and the file's max value is free; pixels strictly
        below ``occupied_below`` (default: half the max value) are occupied.
        Image row 0 becomes the highest-y grid row.
        """
        values, maxval = _read_pgm(Path(path))
        cutoff = 0.5 * maxval if occupied_below is None else float(occupied_below)
        occ = np.flipud(values < cutoff)
        return cls(occ, resolution, origin)


def _read_pgm(path: Path) -> tuple[np.ndarray, int]:
    data = path.read_bytes()
    # Header tokens may be interleaved with '#' comments.
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            pos = len(data) if eol < 0 else eol + 1
            continue
        end = pos
        while end < len(data) and not data[end : end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    magic = tokens[0]
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as e:
        raise ValueError(f"{path}: malformed PGM header") from e
    if width <= 0 or height <= 0 or maxval <= 0:
        raise ValueError(f"{path}: bad PGM dimensions")
    if magic == b"P2":
        flat = np.array(data[pos:].split(), dtype=np.int64)
        if flat.size != width * height:
            raise ValueError(f"{path}: PGM pixel count mismatch")
    elif magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        count = width * height
        raw = data[pos : pos + count * dtype.itemsize]
        if len(raw) != count * dtype.itemsize:
            raise ValueError(f"{path}: PGM pixel count mismatch")
        flat = np.frombuffer(raw, dtype=dtype).astype(np.int64)
    else:
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    return flat.reshape(height, width), maxval


def write_pgm(path, occupancy: np.ndarray, maxval: int = 255) -> None:
    """Write a boolean occupancy array as an ASCII PGM (occupied=0, free=max)."""
    occ = np.asarray(occupancy, dtype=bool)
    img = np.where(np.flipud(occ), 0, maxval)
    lines = [f"P2\n{img.shape[1]} {img.shape[0]}\n{maxval}\n"]
    for row in img:
        lines.append(" ".join(str(v) for v in row) + "\n")
    Path(path).write_text("".join(lines))


# ---------------------------------------------------------------------------
# Exact planar predicates.  Orientation-test based; boundaries are inclusive.

def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


def _on_segment(px, py, ax, ay, bx, by) -> bool:
    """Is p on the closed segment ab, assuming p, a, b are collinear."""
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def segments_intersect(a, b, c, d) -> bool:
    """Closed segments ab and cd share at least one point."""
    d1 = _cross(c[0], c[1], d[0], d[1], a[0], a[1])
    d2 = _cross(c[0], c[1], d[0], d[1], b[0], b[1])
    d3 = _cross(a[0], a[1], b[0], b[1], c[0], c[1])
    d4 = _cross(a[0], a[1], b[0], b[1], d[0], d[1])
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if d1 == 0 and _on_segment(a[0], a[1], c[0], c[1], d[0], d[1]):
        return True
    if d2 == 0 and _on_segment(b[0], b[1], c[0], c[1], d[0], d[1]):
        return True
    if d3 == 0 and _on_segment(c[0], c[1], a[0], a[1], b[0], b[1]):
        return True
    if d4 == 0 and _on_segment(d[0], d[1], a[0], a[1], b[0], b[1]):
        return True
    return False


def _point_in_polygon(px: float, py: float, verts) -> bool:
    """Point in a simple polygon, boundary inclusive (even-odd rule)."""
    n = len(verts)
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        if _cross(ax, ay, bx, by, px, py) == 0 and _on_segment(px, py, ax, ay, bx, by):
            return True
    inside = False
    for i in range(n):
        ax, ay = verts[i]
        bx, by = verts[(i + 1) % n]
        if (ay > py) != (by > py):
            # x of the edge at height py; strict crossing only.
            t = (py - ay) / (by - ay)
            if px < ax + t * (bx - ax):
                inside = not inside
    return inside


def _square_hits_polygon(x0: float, y0: float, size: float, verts) -> bool:
    """Closed axis-aligned square [x0,x0+size]x[y0,y0+size] vs simple polygon."""
    x1 = x0 + size
    y1 = y0 + size
    xs = [v[0] for v in verts]
    ys = [v[1] for v in verts]
    if max(xs) < x0 or min(xs) > x1 or max(ys) < y0 or min(ys) > y1:
        return False
    for vx, vy in verts:
        if x0 <= vx <= x1 and y0 <= vy <= y1:
            return True
    corners = ((x0, y0), (x1, y0), (x1, y1), (x0, y1))
    for cx, cy in corners:
        if _point_in_polygon(cx, cy, verts):
            return True
    n = len(verts)
    for i in range(n):
        a = verts[i]
        b = verts[(i + 1) % n]
        for j in range(4):
            if segments_intersect(a, b, corners[j], corners[(j + 1) % 4]):
                return True
    return False


def _cell_window(bxmin, bymin, bxmax, bymax, grid: OccupancyGrid):
    """Inclusive cell index window covering a grid-frame bbox, padded one cell
    so float rounding at cell borders can never drop a touching cell."""
    res = grid.resolution
    ix0 = max(int(math.floor(bxmin / res)) - 1, 0)
    iy0 = max(int(math.floor(bymin / res)) - 1, 0)
    ix1 = min(int(math.floor(bxmax / res)) + 1, grid.width - 1)
    iy1 = min(int(math.floor(bymax / res)) + 1, grid.height - 1)
    return ix0, iy0, ix1, iy1


def polygon_hits_grid(polygon, grid: OccupancyGrid) -> bool:
    """True iff any occupied cell square intersects the polygon.

    The polygon is given as map-frame vertices of a simple polygon.  Any part
    of it lying outside the grid bounds is a hit, since out-of-grid space is
    treated as occupied.  Partial cell overlap counts: the test is exact on the
    closed cell squares, not on cell centers.
    """
    pts = np.asarray(polygon, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("polygon must be an (n>=3, 2) vertex array")
    g = grid.to_grid_frame(pts)
    bxmin = float(np.min(g[:, 0]))
    bxmax = float(np.max(g[:, 0]))
    bymin = float(np.min(g[:, 1]))
    bymax = float(np.max(g[:, 1]))
    ex, ey = grid.extent
    if bxmin < 0.0 or bymin < 0.0 or bxmax > ex or bymax > ey:
        return True
    ix0, iy0, ix1, iy1 = _cell_window(bxmin, bymin, bxmax, bymax, grid)
    if int(grid.occupied_count(ix0, iy0, ix1, iy1)) == 0:
        return False
    verts = [(float(p[0]), float(p[1])) for p in g]
    res = grid.resolution
    sub = grid.cells[iy0 : iy1 + 1, ix0 : ix1 + 1]
    for dy, dx in np.argwhere(sub):
        if _square_hits_polygon((ix0 + dx) * res, (iy0 + dy) * res, res, verts):
            return True
    return False


def polygon_hits_polyline(polygon, obstacle: DynamicObstacle) -> bool:
    """True iff the obstacle polyline touches the polygon boundary or interior.

    Both are expected in the same frame.  A polyline vertex inside the polygon
    counts even when no segment crosses an edge.
    """
    pts = np.asarray(polygon, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("polygon must be an (n>=3, 2) vertex array")
    verts = [(float(p[0]), float(p[1])) for p in pts]
    obs = obstacle.vertices
    pxmin = min(v[0] for v in verts)
    pxmax = max(v[0] for v in verts)
    pymin = min(v[1] for v in verts)
    pymax = max(v[1] for v in verts)
    if (
        max(v[0] for v in obs) < pxmin
        or min(v[0] for v in obs) > pxmax
        or max(v[1] for v in obs) < pymin
        or min(v[1] for v in obs) > pymax
    ):
        return False
    for vx, vy in obs:
        if _point_in_polygon(vx, vy, verts):
            return True
    n = len(verts)
    for k in range(len(obs) - 1):
        a, b = obs[k], obs[k + 1]
        for i in range(n):
            if segments_intersect(a, b, verts[i], verts[(i + 1) % n]):
                return True
    return False
