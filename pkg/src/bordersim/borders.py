"""Border rules and exit-distribution estimation.

When a node's motion segment crosses the region border the active rule
decides what happens next.  Four rules are supported:

* ``UniformReplacement`` -- the node is recreated uniformly at random inside
  the region and begins a fresh step.
* ``Reflection`` -- the node stays at the crossing point and redraws whole
  step tuples until one points back into the region (inelastic reflection).
* ``TorusWrap`` -- the node reappears on the opposite side and continues the
  same motion with whatever movement time remains.
* ``SampledReintroduction`` -- the node is replaced by one entering through
  a border point drawn from an exit distribution, immediately moving inward
  with a fresh speed and movement duration.  Matching the entering flux to
  the exiting flux is what keeps the interior density uniform.

The exit distribution for the last rule comes either from the analytic
tables (``AnalyticExitSampler``) or from a one-step measurement
(``estimate_exit_distribution``): place nodes uniformly, advance one step,
record where the movement segments cross the border, and fold in the square
symmetries to cut the variance.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .analytic import ExitAngleTables, ExitPdfTable, RdParams, build_angle_tables, exit_pdf, sample_exit_x
from .geometry import (
    BoundaryPoint,
    ExitHit,
    Point2,
    RectRegion,
    Side,
    boundary_xy,
    entry_direction,
)
from .mobility import NodeState, Phase, rd_draw_step

_REFLECTION_REDRAW_CAP = 10**4
_THETA_CLAMP = math.pi / 2.0 - 1e-12


class ReflectionRedrawError(RuntimeError):
    """Reflection failed to find an inward direction within the redraw cap."""


@dataclass(frozen=True)
class ExitEvent:
    """One border crossing: where, at what angle, by whom."""

    time: float
    point: BoundaryPoint
    theta: float  # outgoing angle against the outward normal
    node_id: int
    speed: float
    remaining_move_time: float


@dataclass(frozen=True)
class Reintroduction:
    """A sampled re-entry through the border (rule 4 bookkeeping)."""

    time: float
    point: BoundaryPoint
    theta: float  # entering angle against the inward normal
    node_id: int


def events_to_csv(events) -> str:
    out = io.StringIO()
    out.write("time,side,s,theta,node_id,speed,remaining\n")
    for ev in events:
        out.write(
            f"{ev.time:.17g},{ev.point.side.name.lower()},{ev.point.s:.17g},"
            f"{ev.theta:.17g},{ev.node_id},{ev.speed:.17g},"
            f"{ev.remaining_move_time:.17g}\n"
        )
    return out.getvalue()


# ---------------------------------------------------------------------------
# exit samplers

class AnalyticExitSampler:
    """Draws (border point, entering angle) from the analytic tables.

    The side is uniform by symmetry; the position comes from the tabulated
    exit CDF and the angle from the per-position conditional tables.  Only
    defined on the unit square, where the analytic chord forms hold.
    """

    kind = "analytic"

    def __init__(self, table: ExitPdfTable, angle_tables: ExitAngleTables):
        self.table = table
        self.angle_tables = angle_tables

    @classmethod
    def build(cls, params: RdParams, grid_size: int = 512) -> "AnalyticExitSampler":
        return cls(exit_pdf(params, grid_size), build_angle_tables(params))

    def sample(self, rng: np.random.Generator) -> tuple[BoundaryPoint, float]:
        side = Side(int(rng.integers(4)))
        x = float(sample_exit_x(self.table, rng.random()))
        theta = self.angle_tables.sample(x, rng.random())
        return BoundaryPoint(side, x), theta


class EmpiricalExitSampler:
    """Resamples recorded exit events, symmetry-augmented.

    Entering angles are the reversal of the recorded outgoing angles, which
    is the time-reverse of the exiting trajectory.
    """

    kind = "empirical"

    def __init__(self, region: RectRegion, sides, s, thetas, n_raw: int):
        if len(s) == 0:
            raise ValueError("empirical sampler needs at least one exit event")
        self.region = region
        self.sides = np.asarray(sides, dtype=np.int8)
        self.s = np.asarray(s, dtype=float)
        self.thetas = np.asarray(thetas, dtype=float)
        self.n_raw = n_raw

    def __len__(self) -> int:
        return len(self.s)

    def sample(self, rng: np.random.Generator) -> tuple[BoundaryPoint, float]:
        idx = int(rng.integers(len(self.s)))
        point = BoundaryPoint(Side(int(self.sides[idx])), float(self.s[idx]))
        return point, -float(self.thetas[idx])


def _augment_with_symmetries(region, sides, s, thetas):
    """Map recorded events through the region's symmetry group (8 elements
    for squares, 4 for general rectangles) and pool the images."""
    width, height = region.width, region.height
    side_len = np.where((sides % 2) == 0, width, height)
    out_sides, out_s, out_thetas = [], [], []

    def emit(sd, sv, th):
        out_sides.append(sd)
        out_s.append(sv)
        out_thetas.append(th)

    if region.is_square():
        for mirrored in (False, True):
            sd = sides.copy()
            sv = s.copy()
            th = thetas.copy()
            if mirrored:
                sd = np.array([0, 3, 2, 1], dtype=np.int8)[sd]
                sv = side_len - sv
                th = -th
            for k in range(4):
                emit((sd + k) % 4, sv, th)
    else:
        mirror_v = np.array([0, 3, 2, 1], dtype=np.int8)
        emit(sides, s, thetas)
        emit((sides + 2) % 4, s, thetas)  # half turn
        emit(mirror_v[sides], side_len - s, -thetas)  # vertical mirror
        emit(mirror_v[(sides + 2) % 4], side_len - s, -thetas)  # horizontal mirror
    return (
        np.concatenate(out_sides),
        np.concatenate(out_s),
        np.concatenate(out_thetas),
    )


def estimate_exit_distribution(
    model: RdParams,
    region: RectRegion,
    n_samples: int,
    rng: np.random.Generator,
) -> EmpiricalExitSampler:
    """Measure the exit distribution by the one-step procedure.

    Nodes are placed uniformly and advanced through a single step; the pause
    leaves positions untouched, so only the movement segment is computed.
    Crossing positions and angles are recorded and augmented with the
    region's symmetries.  Raises when no segment reaches the border.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    x0, y0 = region.origin.x, region.origin.y
    x1, y1 = region.x1, region.y1
    sides_out, s_out, theta_out = [], [], []
    chunk = 500_000
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        done += m
        px = rng.uniform(x0, x1, m)
        py = rng.uniform(y0, y1, m)
        phi = rng.uniform(0.0, 2.0 * math.pi, m)
        length = rng.exponential(model.tau_m, m) * rng.uniform(
            model.v_min, model.v_max, m
        )
        dx, dy = np.cos(phi), np.sin(phi)
        with np.errstate(divide="ignore"):
            tx = np.where(dx > 0, (x1 - px) / dx, np.where(dx < 0, (x0 - px) / dx, np.inf))
            ty = np.where(dy > 0, (y1 - py) / dy, np.where(dy < 0, (y0 - py) / dy, np.inf))
        t_hit = np.minimum(tx, ty)
        exits = t_hit <= length
        if not np.any(exits):
            continue
        ex = px[exits] + t_hit[exits] * dx[exits]
        ey = py[exits] + t_hit[exits] * dy[exits]
        cx, cy = dx[exits], dy[exits]
        x_wall = tx[exits] <= ty[exits]
        sides = np.empty(ex.shape, dtype=np.int8)
        s_arc = np.empty(ex.shape)
        theta = np.empty(ex.shape)
        right = x_wall & (cx > 0)
        left = x_wall & (cx < 0)
        top = (~x_wall) & (cy > 0)
        bottom = (~x_wall) & (cy < 0)
        sides[right], sides[left] = Side.RIGHT, Side.LEFT
        sides[top], sides[bottom] = Side.TOP, Side.BOTTOM
        s_arc[right] = np.clip(ey[right] - y0, 0.0, region.height)
        s_arc[left] = np.clip(y1 - ey[left], 0.0, region.height)
        s_arc[top] = np.clip(x1 - ex[top], 0.0, region.width)
        s_arc[bottom] = np.clip(ex[bottom] - x0, 0.0, region.width)
        # outgoing angle against the crossed side's outward normal
        theta[right] = np.arctan2(cy[right], cx[right])
        theta[left] = np.arctan2(-cy[left], -cx[left])
        theta[top] = np.arctan2(-cx[top], cy[top])
        theta[bottom] = np.arctan2(cx[bottom], -cy[bottom])
        sides_out.append(sides)
        s_out.append(s_arc)
        theta_out.append(theta)
    if not sides_out:
        raise ValueError(
            "no border exits recorded; parameters produce no boundary flux "
            f"at n_samples={n_samples}"
        )
    sides = np.concatenate(sides_out)
    s = np.concatenate(s_out)
    thetas = np.concatenate(theta_out)
    n_raw = len(s)
    sides, s, thetas = _augment_with_symmetries(region, sides, s, thetas)
    return EmpiricalExitSampler(region, sides, s, thetas, n_raw)


# ---------------------------------------------------------------------------
# border rules

@dataclass(frozen=True)
class UniformReplacement:
    name = "uniform"


@dataclass(frozen=True)
class Reflection:
    name = "reflect"


@dataclass(frozen=True)
class TorusWrap:
    name = "wrap"


@dataclass(frozen=True)
class SampledReintroduction:
    source: AnalyticExitSampler | EmpiricalExitSampler
    angle_mode: str = "sampled"  # or "uniform": entering angle uniform

    name = "sampled"

    def __post_init__(self):
        if self.angle_mode not in ("sampled", "uniform"):
            raise ValueError("angle_mode must be 'sampled' or 'uniform'")


BorderRule = UniformReplacement | Reflection | TorusWrap | SampledReintroduction


def _points_inward(region, x, y, dx, dy) -> bool:
    """True when a direction from a border point immediately re-enters."""
    if x == region.origin.x and dx <= 0.0:
        return False
    if x == region.x1 and dx >= 0.0:
        return False
    if y == region.origin.y and dy <= 0.0:
        return False
    if y == region.y1 and dy >= 0.0:
        return False
    return True


def _wrap_position(region, hit_side: Side, x: float, y: float) -> tuple[float, float]:
    if hit_side == Side.RIGHT:
        return region.origin.x, y
    if hit_side == Side.LEFT:
        return region.x1, y
    if hit_side == Side.TOP:
        return x, region.origin.y
    return x, region.y1


def apply_border_rule(
    rule: BorderRule,
    node: NodeState,
    hit: ExitHit,
    region: RectRegion,
    rng: np.random.Generator,
    params: RdParams,
    event_log: list | None = None,
    reintro_log: list | None = None,
) -> NodeState:
    """Apply a border rule to a node whose segment crossed at ``hit``.

    On entry the node sits exactly at the crossing point with ``remaining``
    equal to the movement time it still had.  The exit event is logged
    before the node is touched.
    """
    if event_log is not None:
        event_log.append(
            ExitEvent(
                time=hit.time_of_hit,
                point=hit.point,
                theta=hit.theta,
                node_id=node.node_id,
                speed=node.speed,
                remaining_move_time=node.remaining,
            )
        )

    if isinstance(rule, UniformReplacement):
        node.x = region.origin.x + rng.random() * region.width
        node.y = region.origin.y + rng.random() * region.height
        node.phase = Phase.FRESH
        node.pending_move = None
        return node

    if isinstance(rule, Reflection):
        for _ in range(_REFLECTION_REDRAW_CAP):
            step = rd_draw_step(params, rng)
            dx, dy = math.cos(step.theta), math.sin(step.theta)
            if _points_inward(region, node.x, node.y, dx, dy):
                node.phase = Phase.PAUSING
                node.remaining = step.t_s
                node.pending_move = (dx, dy, step.v, step.t_m)
                return node
        raise ReflectionRedrawError(
            f"no inward direction after {_REFLECTION_REDRAW_CAP} redraws"
        )

    if isinstance(rule, TorusWrap):
        node.x, node.y = _wrap_position(region, hit.point.side, node.x, node.y)
        node.phase = Phase.MOVING  # same heading, speed and remaining time
        return node

    if isinstance(rule, SampledReintroduction):
        point, theta = rule.source.sample(rng)
        if rule.angle_mode == "uniform":
            theta = (rng.random() - 0.5) * math.pi
        theta = min(max(theta, -_THETA_CLAMP), _THETA_CLAMP)
        pos = boundary_xy(region, point)
        dx, dy = entry_direction(point.side, theta)
        v = rng.uniform(params.v_min, params.v_max)
        t_m = rng.exponential(params.tau_m)
        node.x, node.y = pos.x, pos.y
        node.dir_x, node.dir_y = dx, dy
        node.speed = v
        node.remaining = t_m
        node.phase = Phase.MOVING
        node.pending_move = None
        if reintro_log is not None:
            reintro_log.append(
                Reintroduction(hit.time_of_hit, point, theta, node.node_id)
            )
        return node

    raise TypeError(f"unknown border rule {rule!r}")
