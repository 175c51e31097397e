"""Step-generation processes for the mobility models.

Random direction (RD) steps draw a heading uniformly on the full circle, a
speed uniformly on [v_min, v_max], and exponential pause and movement
durations.  Random waypoint (RWP) legs run between uniform waypoints at a
uniform per-leg speed.  The volume rule converts RD draws into RWP-like
behavior by rejecting steps whose destination falls outside the region, and
the hybrid model applies that rule with probability ``p_confine`` per step.

All draw functions take a ``numpy.random.Generator``; they consume it in an
implementation-defined order, so reproducibility holds per seed but not
across draw strategies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .analytic import RdParams
from .geometry import Point2, RectRegion, contains

TWO_PI = 2.0 * math.pi

#: fraction of the region diagonal per mean movement length below which the
#: volume rule switches from literal trial batches to the conditional sampler
_FAST_PATH_THRESHOLD = 0.01

_LITERAL_BATCH_START = 32
_LITERAL_BATCH_MAX = 1 << 16


class VolumeRuleCapExceeded(RuntimeError):
    """The volume rule exceeded its rejection cap; parameters are degenerate."""


@dataclass(frozen=True, slots=True)
class StepDraw:
    """One RD step: heading, pause duration, movement duration, speed."""

    theta: float
    t_s: float
    t_m: float
    v: float


@dataclass(frozen=True)
class RwpParams:
    """Random waypoint parameters.

    ``p_stat`` is the fraction of nodes that never move; ``tau_pause`` is the
    mean (exponential) pause between legs.
    """

    v_min: float
    v_max: float
    tau_pause: float = 0.0
    p_stat: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.v_min <= self.v_max:
            raise ValueError("speeds must satisfy 0 < v_min <= v_max")
        if not self.tau_pause >= 0.0:
            raise ValueError("tau_pause must be nonnegative")
        if not 0.0 <= self.p_stat <= 1.0:
            raise ValueError("p_stat must be a probability")


@dataclass(frozen=True)
class HybridParams:
    """RD parameters plus the per-step probability of applying the volume rule."""

    rd: RdParams
    p_confine: float

    def __post_init__(self):
        if not 0.0 <= self.p_confine <= 1.0:
            raise ValueError("p_confine must be a probability")


class Phase(IntEnum):
    FRESH = 0  # next event: draw a new step
    PAUSING = 1
    MOVING = 2
    STATIONARY = 3


class NodeState:
    """Mutable per-node simulation state (owned by one engine worker)."""

    __slots__ = (
        "node_id",
        "x",
        "y",
        "phase",
        "remaining",
        "dir_x",
        "dir_y",
        "speed",
        "pending_move",
    )

    def __init__(self, node_id: int, x: float, y: float):
        self.node_id = node_id
        self.x = x
        self.y = y
        self.phase = Phase.FRESH
        self.remaining = 0.0
        self.dir_x = 1.0
        self.dir_y = 0.0
        self.speed = 0.0
        # (dir_x, dir_y, speed, t_m) queued behind the current pause
        self.pending_move: tuple[float, float, float, float] | None = None

    def position(self) -> Point2:
        return Point2(self.x, self.y)


def rd_draw_step(params: RdParams, rng: np.random.Generator) -> StepDraw:
    """Draw one RD step: heading uniform on [0, 2*pi), speed uniform on
    [v_min, v_max], pause and movement times exponential."""
    theta = rng.uniform(0.0, TWO_PI)
    t_s = rng.exponential(params.tau_s) if params.tau_s > 0.0 else 0.0
    t_m = rng.exponential(params.tau_m)
    v = rng.uniform(params.v_min, params.v_max)
    return StepDraw(theta, t_s, t_m, v)


def rd_step_arrays(
    params: RdParams, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized block of RD step draws: (theta, t_s, t_m, v) arrays."""
    theta = rng.uniform(0.0, TWO_PI, n)
    t_s = rng.exponential(params.tau_s, n) if params.tau_s > 0.0 else np.zeros(n)
    t_m = rng.exponential(params.tau_m, n)
    v = rng.uniform(params.v_min, params.v_max, n)
    return theta, t_s, t_m, v


def step_destination(origin: Point2, step: StepDraw) -> Point2:
    """Endpoint of a step's movement segment, ignoring any borders."""
    dist = step.t_m * step.v
    return Point2(
        origin.x + dist * math.cos(step.theta),
        origin.y + dist * math.sin(step.theta),
    )


def rwp_draw_leg(
    region: RectRegion,
    params: RwpParams,
    current: Point2,
    rng: np.random.Generator,
) -> tuple[Point2, float, float]:
    """Draw one RWP leg from ``current``: (waypoint, speed, pause)."""
    if not contains(region, current):
        raise ValueError("leg origin lies outside the region")
    wx = region.origin.x + rng.random() * region.width
    wy = region.origin.y + rng.random() * region.height
    v = rng.uniform(params.v_min, params.v_max)
    pause = rng.exponential(params.tau_pause) if params.tau_pause > 0.0 else 0.0
    return Point2(wx, wy), v, pause


@dataclass(frozen=True, slots=True)
class VolumeDraw:
    """Accepted volume-rule step plus the number of rejected trials."""

    step: StepDraw
    rejections: int


def volume_rule_draw(
    region: RectRegion,
    params: RdParams,
    origin: Point2,
    rng: np.random.Generator,
    max_rejections: int = 10**6,
) -> VolumeDraw:
    """Draw RD steps until the destination lies inside the region.

    Equivalent to redrawing ``rd_draw_step`` until the endpoint is inside.
    When the per-trial acceptance probability is vanishing (mean movement
    length far beyond the region diagonal), trials are not enumerated one by
    one: the accepted step is drawn directly from the conditional law, which
    is exactly the distribution the literal loop converges to, and the
    rejection count is drawn from the matching geometric law.  Exceeding
    ``max_rejections`` raises ``VolumeRuleCapExceeded`` either way.
    """
    if not contains(region, origin):
        raise ValueError("volume rule origin lies outside the region")
    diag = math.hypot(region.width, region.height)
    if diag / (params.tau_m * params.v_min) < _FAST_PATH_THRESHOLD:
        return _volume_rule_conditional(region, params, origin, rng, max_rejections)
    return _volume_rule_literal(region, params, origin, rng, max_rejections)


def _volume_rule_literal(region, params, origin, rng, cap):
    rx0, ry0 = region.origin.x, region.origin.y
    rx1, ry1 = region.x1, region.y1
    rejections = 0
    batch = _LITERAL_BATCH_START
    while True:
        theta, t_s, t_m, v = rd_step_arrays(params, batch, rng)
        dist = t_m * v
        ex = origin.x + dist * np.cos(theta)
        ey = origin.y + dist * np.sin(theta)
        ok = (ex >= rx0) & (ex <= rx1) & (ey >= ry0) & (ey <= ry1)
        hit = int(np.argmax(ok))
        if ok[hit]:
            rejections += hit
            if rejections > cap:
                raise VolumeRuleCapExceeded(
                    f"volume rule rejected {rejections} draws (cap {cap})"
                )
            step = StepDraw(float(theta[hit]), float(t_s[hit]), float(t_m[hit]), float(v[hit]))
            return VolumeDraw(step, rejections)
        rejections += batch
        if rejections > cap:
            raise VolumeRuleCapExceeded(
                f"volume rule rejected {rejections} draws (cap {cap})"
            )
        batch = min(batch * 4, _LITERAL_BATCH_MAX)


def _wall_sectors(region, ox, oy):
    """Angular sectors toward the four walls as seen from an interior point.

    Each entry is (wall distance, wall center angle, tan of the clockwise
    half-window, tan of the counterclockwise half-window).
    """
    a_r = region.x1 - ox
    a_t = region.y1 - oy
    a_l = ox - region.origin.x
    a_b = oy - region.origin.y
    sectors = []
    for a, center, adj_cw, adj_ccw in (
        (a_r, 0.0, a_b, a_t),
        (a_t, 0.5 * math.pi, a_r, a_l),
        (a_l, math.pi, a_t, a_b),
        (a_b, 1.5 * math.pi, a_l, a_r),
    ):
        if a <= 0.0:
            continue
        sectors.append((a, center, adj_cw / a, adj_ccw / a))
    return sectors


def _volume_rule_conditional(region, params, origin, rng, cap):
    """Sample the accepted volume-rule step without enumerating trials.

    Conditioned on acceptance, (heading, speed) has density proportional to
    1 - exp(-chord / (tau_m v)); a proposal proportional to chord(heading)/v
    dominates it with ratio (1 - exp(-x))/x <= 1, drawn exactly via the
    closed-form chord-length inverse CDF per wall sector.  The movement time
    is then exponential truncated to reach at most the chord.
    """
    raw_sectors = _wall_sectors(region, origin.x, origin.y)
    # (wall distance, center angle, asinh at the clockwise corner, weight)
    sectors = []
    for a, center, t_cw, t_ccw in raw_sectors:
        asinh_cw = math.asinh(t_cw)
        weight = a * (asinh_cw + math.asinh(t_ccw))
        sectors.append((a, center, asinh_cw, weight))
    total_weight = math.fsum(w for _, _, _, w in sectors)
    if params.v_max > params.v_min:
        log_span = math.log(params.v_max / params.v_min)
        mean_inv_v = log_span / (params.v_max - params.v_min)
    else:
        log_span = 0.0
        mean_inv_v = 1.0 / params.v_min

    ratio_sum = 0.0
    proposals = 0
    while True:
        proposals += 1
        if proposals > 10**6:
            raise VolumeRuleCapExceeded("volume rule conditional sampler stalled")
        # heading proportional to chord length, via per-wall inverse CDF
        pick = rng.random() * total_weight
        last = len(sectors) - 1
        for i, (a, center, asinh_cw, w) in enumerate(sectors):
            if pick <= w or i == last:
                pick = min(pick, w)  # rounding in the running subtraction
                sinh_val = math.sinh(pick / a - asinh_cw)
                chord = a * math.hypot(1.0, sinh_val)
                phi = (center + math.atan(sinh_val)) % TWO_PI
                break
            pick -= w
        v = (
            params.v_min * math.exp(rng.random() * log_span)
            if log_span > 0.0
            else params.v_min
        )
        x = chord / (params.tau_m * v)
        q = -math.expm1(-x)  # 1 - exp(-x)
        ratio = q / x
        ratio_sum += ratio
        if rng.random() < ratio:
            break

    t_m = -params.tau_m * math.log1p(-rng.random() * q)
    t_s = rng.exponential(params.tau_s) if params.tau_s > 0.0 else 0.0
    step = StepDraw(phi, t_s, t_m, v)

    # rejection diagnostic: the literal loop's count is geometric with the
    # overall acceptance probability, reconstructed from the proposal scale
    accept_prob = (total_weight / TWO_PI) * mean_inv_v / params.tau_m * (
        ratio_sum / proposals
    )
    accept_prob = min(max(accept_prob, 1e-300), 1.0)
    u = rng.random()
    if accept_prob >= 1.0 or u == 0.0:
        rejections = 0
    else:
        rejections = int(math.log(u) / math.log1p(-accept_prob))
    if rejections > cap:
        raise VolumeRuleCapExceeded(
            f"volume rule rejected {rejections} draws (cap {cap})"
        )
    return VolumeDraw(step, rejections)


@dataclass(frozen=True, slots=True)
class HybridDraw:
    """One hybrid-model step: the draw, whether it was confined, rejections."""

    step: StepDraw
    confined: bool
    rejections: int


def hybrid_draw_step(
    region: RectRegion,
    params: HybridParams,
    origin: Point2,
    rng: np.random.Generator,
    max_rejections: int = 10**6,
) -> HybridDraw:
    """With probability ``p_confine`` apply the volume rule, otherwise draw a
    free RD step that may later cross the border."""
    if rng.random() < params.p_confine:
        draw = volume_rule_draw(region, params.rd, origin, rng, max_rejections)
        return HybridDraw(draw.step, True, draw.rejections)
    return HybridDraw(rd_draw_step(params.rd, rng), False, 0)


@dataclass(frozen=True)
class RwpMomentResult:
    """Observations of moving nodes in the 1-D waypoint experiment."""

    x_obs: np.ndarray
    leg_fraction: np.ndarray

    @property
    def first_moment(self) -> float:
        return float(np.mean(self.x_obs))

    @property
    def second_moment(self) -> float:
        return float(np.mean(self.x_obs**2))

    @property
    def second_moment_stderr(self) -> float:
        return float(np.std(self.x_obs**2) / math.sqrt(len(self.x_obs)))

    @property
    def first_moment_stderr(self) -> float:
        return float(np.std(self.x_obs) / math.sqrt(len(self.x_obs)))


def rwp_second_moment_experiment(
    n_nodes: int,
    params: RwpParams,
    duration: float,
    rng: np.random.Generator,
    weighting: str = "leg",
) -> RwpMomentResult:
    """Observe moving nodes of a 1-D waypoint process on [0, 1].

    ``weighting="leg"`` observes every completed leg once, at a uniformly
    random moment within the leg, so travel endpoints enter the average with
    equal weight.  ``weighting="time"`` instead samples uniformly random
    wall-clock instants from the second half of the run, which weights legs
    by their duration (long legs are seen more often) and therefore measures
    the time-averaged moving-node distribution.
    """
    if n_nodes < 1:
        raise ValueError("need at least one node")
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    if weighting not in ("leg", "time"):
        raise ValueError("weighting must be 'leg' or 'time'")

    mean_leg = (1.0 / 3.0) * _mean_inverse_speed(params) + params.tau_pause
    max_legs = int(duration / mean_leg * 1.5) + 64
    chunk = max(1, 2 * 10**6 // max_legs)

    x_list, f_list = [], []
    done = 0
    while done < n_nodes:
        block = min(chunk, n_nodes - done)
        done += block
        x, f = _moment_block(block, max_legs, params, duration, rng, weighting)
        x_list.append(x)
        f_list.append(f)
    return RwpMomentResult(np.concatenate(x_list), np.concatenate(f_list))


def _moment_block(n, max_legs, params, duration, rng, weighting):
    starts = rng.random(n)
    waypoints = rng.random((n, max_legs))
    pts = np.concatenate([starts[:, None], waypoints], axis=1)
    speeds = rng.uniform(params.v_min, params.v_max, (n, max_legs))
    pauses = (
        rng.exponential(params.tau_pause, (n, max_legs))
        if params.tau_pause > 0.0
        else np.zeros((n, max_legs))
    )
    leg_from = pts[:, :-1]
    leg_to = pts[:, 1:]
    move_time = np.abs(leg_to - leg_from) / speeds
    end_time = np.cumsum(pauses + move_time, axis=1)
    if not np.all(end_time[:, -1] >= duration):
        raise RuntimeError("leg budget underestimated; increase duration margin")

    if weighting == "leg":
        completed = end_time <= duration
        f = rng.random((n, max_legs))
        x_obs = leg_from + (leg_to - leg_from) * f
        return x_obs[completed], f[completed]

    # time weighting: uniform instants over the second half of the run
    obs_per_node = 8
    t_obs = rng.uniform(duration / 2.0, duration, (n, obs_per_node))
    x_list, f_list = [], []
    move_start = end_time - move_time
    for i in range(n):
        idx = np.searchsorted(end_time[i], t_obs[i], side="left")
        moving = t_obs[i] >= move_start[i, idx]
        sel = idx[moving]
        f = (t_obs[i][moving] - move_start[i, sel]) / move_time[i, sel]
        x_list.append(leg_from[i, sel] + (leg_to[i, sel] - leg_from[i, sel]) * f)
        f_list.append(f)
    return np.concatenate(x_list), np.concatenate(f_list)


def _mean_inverse_speed(params) -> float:
    if params.v_max > params.v_min:
        return math.log(params.v_max / params.v_min) / (params.v_max - params.v_min)
    return 1.0 / params.v_min
