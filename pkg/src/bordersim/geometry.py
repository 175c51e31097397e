"""Rectangular test region geometry: containment, boundary parametrization,
segment/border intersection, and chord lengths across the unit square.

Boundary convention used throughout the package: the perimeter is walked
counterclockwise starting at the region origin, giving the side order
bottom, right, top, left.  Each side is parametrized by an arclength
coordinate ``s`` that runs from 0 at the side's first corner.  Corners are
owned by the side on which they sit at ``s = 0``, so every boundary point
has exactly one canonical description.

Crossing angles are measured against the normal of the crossed side:
``theta = 0`` is perpendicular crossing and positive theta tilts toward the
side's direction of increasing arclength.  A direction entering the region
at angle theta is ``cos(theta) * inward_normal + sin(theta) * tangent``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional


class Side(IntEnum):
    """Sides of the rectangle in counterclockwise perimeter order."""

    BOTTOM = 0
    RIGHT = 1
    TOP = 2
    LEFT = 3


# unit tangent (increasing s) and inward normal per side
_TANGENT = {
    Side.BOTTOM: (1.0, 0.0),
    Side.RIGHT: (0.0, 1.0),
    Side.TOP: (-1.0, 0.0),
    Side.LEFT: (0.0, -1.0),
}
_INWARD = {
    Side.BOTTOM: (0.0, 1.0),
    Side.RIGHT: (-1.0, 0.0),
    Side.TOP: (0.0, -1.0),
    Side.LEFT: (1.0, 0.0),
}


@dataclass(frozen=True)
class Point2:
    """A position in the plane, in meters."""

    x: float
    y: float


@dataclass(frozen=True)
class RectRegion:
    """Axis-aligned rectangular test region."""

    width: float
    height: float
    origin: Point2 = Point2(0.0, 0.0)

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("region dimensions must be positive")
        if not (math.isfinite(self.width) and math.isfinite(self.height)):
            raise ValueError("region dimensions must be finite")

    @property
    def x1(self) -> float:
        return self.origin.x + self.width

    @property
    def y1(self) -> float:
        return self.origin.y + self.height

    def side_length(self, side: Side) -> float:
        return self.width if side in (Side.BOTTOM, Side.TOP) else self.height

    def is_square(self) -> bool:
        return self.width == self.height


# the unit square, the region all closed-form boundary work specializes to
UNIT_SQUARE = RectRegion(1.0, 1.0)


@dataclass(frozen=True)
class BoundaryPoint:
    """A point on the region border: owning side plus arclength along it."""

    side: Side
    s: float

    def normal_angle(self) -> float:
        """Direction of the inward normal, radians in [0, 2*pi)."""
        nx, ny = _INWARD[self.side]
        return math.atan2(ny, nx) % (2.0 * math.pi)


@dataclass(frozen=True)
class ExitHit:
    """First border crossing of a motion segment.

    ``theta`` is the angle between the outgoing trajectory and the outward
    normal of the crossed side (sign convention in the module docstring);
    it always satisfies ``|theta| < pi/2``.
    """

    point: BoundaryPoint
    theta: float
    distance_along_step: float
    time_of_hit: float


def contains(region: RectRegion, p: Point2) -> bool:
    """True iff ``p`` lies in the closed rectangle (border included)."""
    return (
        region.origin.x <= p.x <= region.x1
        and region.origin.y <= p.y <= region.y1
    )


def boundary_xy(region: RectRegion, bp: BoundaryPoint) -> Point2:
    """Cartesian coordinates of a boundary point."""
    x0, y0 = region.origin.x, region.origin.y
    x1, y1 = region.x1, region.y1
    side, s = bp.side, bp.s
    if side == Side.BOTTOM:
        return Point2(x0 + s, y0)
    if side == Side.RIGHT:
        return Point2(x1, y0 + s)
    if side == Side.TOP:
        return Point2(x1 - s, y1)
    return Point2(x0, y1 - s)


def boundary_point_at(region: RectRegion, x: float, y: float) -> BoundaryPoint:
    """Canonical (side, s) description of a point lying on the border.

    Corner points are assigned to the side on which they sit at s = 0.
    """
    x0, y0 = region.origin.x, region.origin.y
    x1, y1 = region.x1, region.y1
    # corner ownership first so each corner has one description
    if x == x0 and y == y0:
        return BoundaryPoint(Side.BOTTOM, 0.0)
    if x == x1 and y == y0:
        return BoundaryPoint(Side.RIGHT, 0.0)
    if x == x1 and y == y1:
        return BoundaryPoint(Side.TOP, 0.0)
    if x == x0 and y == y1:
        return BoundaryPoint(Side.LEFT, 0.0)
    if y == y0:
        return BoundaryPoint(Side.BOTTOM, x - x0)
    if x == x1:
        return BoundaryPoint(Side.RIGHT, y - y0)
    if y == y1:
        return BoundaryPoint(Side.TOP, x1 - x)
    if x == x0:
        return BoundaryPoint(Side.LEFT, y1 - y)
    raise ValueError(f"point ({x}, {y}) is not on the region border")


def crossing_angle(side: Side, dx: float, dy: float) -> float:
    """Signed angle of an outgoing direction against the side's outward normal."""
    tx, ty = _TANGENT[side]
    ix, iy = _INWARD[side]
    # outward normal = -inward
    return math.atan2(dx * tx + dy * ty, -(dx * ix + dy * iy))


def entry_direction(side: Side, theta: float) -> tuple[float, float]:
    """Unit direction entering the region through ``side`` at angle ``theta``."""
    tx, ty = _TANGENT[side]
    ix, iy = _INWARD[side]
    c, s = math.cos(theta), math.sin(theta)
    return (c * ix + s * tx, c * iy + s * ty)


def first_crossing(
    region: RectRegion,
    x: float,
    y: float,
    dx: float,
    dy: float,
    length: float,
) -> Optional[tuple[float, float, float, Side]]:
    """First border crossing of the segment from (x, y) along unit (dx, dy).

    Returns ``(t, hx, hy, side)`` with ``t`` the distance to the crossing and
    (hx, hy) the crossing point placed exactly on the crossed wall, or None
    when the whole segment stays inside the closed region.  The start point
    must lie inside.  A crossing exactly through a corner is attributed to a
    side the trajectory actually pierces (outward component > 0), preferring
    the canonical corner owner.
    """
    x0, y0 = region.origin.x, region.origin.y
    x1, y1 = region.x1, region.y1

    tx = math.inf
    if dx > 0.0:
        tx = (x1 - x) / dx
    elif dx < 0.0:
        tx = (x0 - x) / dx
    ty = math.inf
    if dy > 0.0:
        ty = (y1 - y) / dy
    elif dy < 0.0:
        ty = (y0 - y) / dy

    t = tx if tx <= ty else ty
    if t > length or t == math.inf:
        return None

    hx = x + t * dx
    hy = y + t * dy
    # pin the pierced coordinate(s) exactly onto the wall
    if tx <= ty:
        hx = x1 if dx > 0.0 else x0
    if ty <= tx:
        hy = y1 if dy > 0.0 else y0
    hx = min(max(hx, x0), x1)
    hy = min(max(hy, y0), y1)

    on_x_wall = hx == x0 or hx == x1
    on_y_wall = hy == y0 or hy == y1
    if on_x_wall and on_y_wall:
        # corner: prefer the canonical owner, but only if the direction
        # actually points out through it (grazing trajectories do not)
        canonical = boundary_point_at(region, hx, hy).side
        other = _pierced_corner_side(canonical, hx, hy, x0, x1, y0, y1)
        for side in (canonical, other):
            ix, iy = _INWARD[side]
            if -(dx * ix + dy * iy) > 0.0:
                return (t, hx, hy, side)
        return None  # tangential through the corner, never leaves
    if on_x_wall and tx <= ty:
        return (t, hx, hy, Side.RIGHT if hx == x1 else Side.LEFT)
    return (t, hx, hy, Side.TOP if hy == y1 else Side.BOTTOM)


def _pierced_corner_side(canonical, hx, hy, x0, x1, y0, y1):
    if canonical in (Side.BOTTOM, Side.TOP):
        return Side.RIGHT if hx == x1 else Side.LEFT
    return Side.TOP if hy == y1 else Side.BOTTOM


def segment_boundary_intersection(
    region: RectRegion,
    start: Point2,
    direction: float,
    length: float,
    start_time: float = 0.0,
    speed: float = 1.0,
) -> Optional[ExitHit]:
    """First crossing of the border by a straight segment, or None.

    ``direction`` is the global heading in radians.  ``time_of_hit`` is
    ``start_time + distance / speed``.  Raises if the start point lies
    outside the closed region (that would mean corrupted simulation state).
    """
    if not contains(region, start):
        raise ValueError(f"segment start {start} lies outside the region")
    dx, dy = math.cos(direction), math.sin(direction)
    hit = first_crossing(region, start.x, start.y, dx, dy, length)
    if hit is None:
        return None
    t, hx, hy, side = hit
    bp = boundary_point_at(region, hx, hy)
    if bp.side != side:
        # corner pierced through the non-canonical side: keep that side's
        # description so the recorded angle matches the crossed wall
        bp = BoundaryPoint(side, region.side_length(side))
    theta = crossing_angle(side, dx, dy)
    return ExitHit(bp, theta, t, start_time + t / speed)


def chord_length(x: float, theta: float) -> float:
    """Distance from (x, 0) on the unit square's bottom side to the far
    border along the interior direction at angle ``theta`` from the normal.

    Piecewise: ``x / |sin theta|`` toward the near corner, ``1 / cos theta``
    across to the opposite side, ``(1 - x) / sin theta`` toward the far
    corner.  Continuous on [-pi/2, pi/2]; at exactly |theta| = pi/2 the
    ray runs along the border and the chord is the distance to the corner.
    """
    if not 0.0 <= x <= 1.0:
        raise ValueError("arclength x must lie in [0, 1]")
    if not -math.pi / 2 <= theta <= math.pi / 2:
        raise ValueError("theta must lie in [-pi/2, pi/2]")
    if theta < -math.atan(x):
        return abs(x / math.sin(theta))
    if theta <= math.atan(1.0 - x):
        return 1.0 / math.cos(theta)
    return (1.0 - x) / math.sin(theta)


# ---------------------------------------------------------------------------
# symmetry group of the square acting on boundary data

#: the eight square symmetries as (quarter_turns, mirrored) pairs; a mirror
#: about the vertical center line is applied first, then the rotation
SQUARE_SYMMETRIES: tuple[tuple[int, bool], ...] = tuple(
    (k, m) for m in (False, True) for k in range(4)
)

# mirror about the vertical center line: side images under s -> L - s
_MIRROR_SIDE = {
    Side.BOTTOM: Side.BOTTOM,
    Side.RIGHT: Side.LEFT,
    Side.TOP: Side.TOP,
    Side.LEFT: Side.RIGHT,
}


def square_symmetry_map(
    point: BoundaryPoint, theta: float, g: tuple[int, bool]
) -> tuple[BoundaryPoint, float]:
    """Image of a unit-square boundary point and crossing angle under a
    symmetry ``g = (quarter_turns, mirrored)``.

    Quarter turns are counterclockwise and preserve (s, theta); the mirror
    reverses arclength and flips the angle sign.
    """
    k, mirrored = g
    side, s = point.side, point.s
    if mirrored:
        side = _MIRROR_SIDE[side]
        s = 1.0 - s
        theta = -theta
    side = Side((int(side) + k) % 4)
    return BoundaryPoint(side, s), theta


def square_symmetry_inverse(g: tuple[int, bool]) -> tuple[int, bool]:
    """Inverse element: undoing rotation-after-mirror."""
    k, mirrored = g
    if not mirrored:
        return ((-k) % 4, False)
    # (r^k m)^-1 = m r^-k = r^k m  in the dihedral group with m r m = r^-1
    return (k, True)
