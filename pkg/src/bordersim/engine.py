"""Event-driven simulation core.

Each node advances through exact pause/move segments - no fixed time step.
Motion segments are clipped at border crossings (solved in closed form),
snapshot times, and the end of the run, so exit angles carry no
discretization bias.  Every node owns an independent, reproducible RNG
stream derived from the master seed, which makes the run a pure function of
its configuration: any worker count produces bit-identical results.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import RdParams
from .borders import (
    AnalyticExitSampler,
    BorderRule,
    Reflection,
    SampledReintroduction,
    TorusWrap,
    UniformReplacement,
    apply_border_rule,
)
from .geometry import (
    BoundaryPoint,
    ExitHit,
    Point2,
    RectRegion,
    boundary_point_at,
    contains,
    crossing_angle,
    first_crossing,
)
from .mobility import (
    HybridParams,
    NodeState,
    Phase,
    RwpParams,
    hybrid_draw_step,
    rd_step_arrays,
    rwp_draw_leg,
    volume_rule_draw,
)

# stream namespaces under the master seed
_STREAM_NODE = 0
_STREAM_PLACEMENT = 1
_STREAM_SAMPLER = 2
_STREAM_STATIONARY = 3


def derive_node_rng(master_seed: int, node_id: int) -> np.random.Generator:
    """Independent, reproducible RNG stream for one node.

    Streams are split off the master seed by key, so results do not depend
    on scheduling or worker count.
    """
    return _derive_stream(master_seed, _STREAM_NODE, node_id)


def _derive_stream(master_seed: int, namespace: int, index: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(namespace, index))
    return np.random.Generator(np.random.PCG64(ss))


def sampler_rng(master_seed: int) -> np.random.Generator:
    """Stream reserved for building empirical exit samplers before a run."""
    return _derive_stream(master_seed, _STREAM_SAMPLER)


@dataclass(frozen=True)
class SimConfig:
    model: RdParams | RwpParams | HybridParams
    region: RectRegion
    border_rule: BorderRule | None
    n_nodes: int
    duration: float
    snapshot_times: tuple[float, ...]
    master_seed: int

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be at least 1")
        if self.duration < 0.0:
            raise ValueError("duration must be nonnegative")
        times = tuple(float(t) for t in self.snapshot_times)
        if any(t < 0.0 or t > self.duration for t in times):
            raise ValueError("snapshot times must lie within [0, duration]")
        if list(times) != sorted(times):
            raise ValueError("snapshot times must be sorted")
        object.__setattr__(self, "snapshot_times", times)
        if isinstance(self.model, (RdParams, HybridParams)) and self.border_rule is None:
            raise ValueError("free-moving models need a border rule")
        if isinstance(self.border_rule, SampledReintroduction):
            src = self.border_rule.source
            if isinstance(src, AnalyticExitSampler) and not (
                self.region.is_square() and self.region.width == 1.0
            ):
                raise ValueError("analytic exit sampler is defined on the unit square")

    def rd_params(self) -> RdParams | None:
        if isinstance(self.model, RdParams):
            return self.model
        if isinstance(self.model, HybridParams):
            return self.model.rd
        return None


@dataclass(frozen=True)
class Snapshot:
    time: float
    positions: np.ndarray  # shape (n_nodes, 2), indexed by node id


@dataclass(frozen=True)
class RunResult:
    snapshots: list
    exit_events: list
    reintroductions: list
    counters: dict

    def snapshots_to_csv(self) -> str:
        lines = ["time,node_id,x,y"]
        for snap in self.snapshots:
            t = snap.time
            for node_id, (x, y) in enumerate(snap.positions):
                lines.append(f"{t:.17g},{node_id},{x:.17g},{y:.17g}")
        return "\n".join(lines) + "\n"


def run(config: SimConfig, workers: int = 1) -> RunResult:
    """Simulate the configured model; deterministic given the master seed.

    ``workers`` only distributes per-node work; results are bit-identical
    for any value.
    """
    n = config.n_nodes
    placement = _derive_stream(config.master_seed, _STREAM_PLACEMENT)
    xs = config.region.origin.x + placement.random(n) * config.region.width
    ys = config.region.origin.y + placement.random(n) * config.region.height

    stationary = np.zeros(n, dtype=bool)
    if isinstance(config.model, RwpParams) and config.model.p_stat > 0.0:
        k = int(config.model.p_stat * n)
        picker = _derive_stream(config.master_seed, _STREAM_STATIONARY)
        stationary[picker.permutation(n)[:k]] = True

    chunks = _chunk_ranges(n, workers)
    args = [(config, lo, hi, xs[lo:hi], ys[lo:hi], stationary[lo:hi]) for lo, hi in chunks]
    if workers <= 1 or len(chunks) == 1:
        outputs = [_simulate_chunk(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_simulate_chunk, args))

    n_snaps = len(config.snapshot_times)
    positions = np.empty((n_snaps, n, 2))
    events = []
    reintros = []
    counter_rows = []
    for (lo, hi), (pos, ev, re, ctr) in zip(chunks, outputs):
        if n_snaps:
            positions[:, lo:hi, :] = pos
        events.extend(ev)
        reintros.extend(re)
        counter_rows.append(ctr)
    events.sort(key=lambda e: (e.time, e.node_id))
    reintros.sort(key=lambda r: (r.time, r.node_id))
    all_counters = np.concatenate(counter_rows, axis=0)
    counters = {
        "steps": int(all_counters[:, 0].sum()),
        "border_hits": int(all_counters[:, 1].sum()),
        "volume_rule_rejections": int(all_counters[:, 2].sum()),
        "pause_time": math.fsum(all_counters[:, 3]),
        "move_time": math.fsum(all_counters[:, 4]),
    }
    snapshots = [
        Snapshot(t, positions[i]) for i, t in enumerate(config.snapshot_times)
    ]
    return RunResult(snapshots, events, reintros, counters)


def _chunk_ranges(n: int, workers: int) -> list[tuple[int, int]]:
    pieces = 1 if workers <= 1 else min(n, workers * 4)
    bounds = np.linspace(0, n, pieces + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


class _RdStepBuffer:
    """Block-drawn RD steps from one node's stream (amortizes RNG calls)."""

    __slots__ = ("params", "rng", "theta", "t_s", "t_m", "v", "idx", "size")

    def __init__(self, params, rng, size=64):
        self.params = params
        self.rng = rng
        self.size = size
        self.idx = size

    def next(self):
        if self.idx >= self.size:
            theta, t_s, t_m, v = rd_step_arrays(self.params, self.size, self.rng)
            self.theta = theta.tolist()
            self.t_s = t_s.tolist()
            self.t_m = t_m.tolist()
            self.v = v.tolist()
            self.idx = 0
        i = self.idx
        self.idx = i + 1
        return self.theta[i], self.t_s[i], self.t_m[i], self.v[i]


def _simulate_chunk(args):
    config, lo, hi, xs, ys, stationary = args
    n_snaps = len(config.snapshot_times)
    pos = np.empty((n_snaps, hi - lo, 2))
    events = []
    reintros = []
    counters = np.zeros((hi - lo, 5))
    for i in range(hi - lo):
        node_pos, ev, re, ctr = _simulate_node(
            config, lo + i, xs[i], ys[i], bool(stationary[i])
        )
        if n_snaps:
            pos[:, i, :] = node_pos
        events.extend(ev)
        reintros.extend(re)
        counters[i] = ctr
    return pos, events, reintros, counters


def _simulate_node(config, node_id, x0, y0, is_stationary):
    snap_times = config.snapshot_times
    n_snaps = len(snap_times)
    snaps = np.empty((n_snaps, 2))
    if is_stationary:
        snaps[:, 0] = x0
        snaps[:, 1] = y0
        return snaps, [], [], (0, 0, 0, 0.0, 0.0)

    rng = derive_node_rng(config.master_seed, node_id)
    region = config.region
    rx0, ry0, rx1, ry1 = region.origin.x, region.origin.y, region.x1, region.y1
    model = config.model
    rule = config.border_rule
    rd = config.rd_params()
    is_rd = isinstance(model, RdParams)
    is_rwp = isinstance(model, RwpParams)
    is_hybrid = isinstance(model, HybridParams)
    buffer = _RdStepBuffer(rd, rng) if is_rd else None

    node = NodeState(node_id, float(x0), float(y0))
    events = []
    reintros = []
    duration = config.duration
    t = 0.0
    si = 0
    steps = border_hits = rejections = 0
    pause_time = move_time = 0.0
    can_cross = False

    while si < n_snaps and snap_times[si] <= t:
        snaps[si] = (node.x, node.y)
        si += 1

    while t < duration:
        if node.phase == Phase.FRESH:
            steps += 1
            if is_rd:
                theta, t_s, t_m, v = buffer.next()
                node.pending_move = (math.cos(theta), math.sin(theta), v, t_m)
                node.remaining = t_s
                can_cross = True
            elif is_rwp:
                wp, v, pause = rwp_draw_leg(region, model, node.position(), rng)
                dx = wp.x - node.x
                dy = wp.y - node.y
                dist = math.hypot(dx, dy)
                if dist == 0.0:
                    continue  # degenerate waypoint, redraw
                node.pending_move = (dx / dist, dy / dist, v, dist / v)
                node.remaining = pause
                can_cross = False
            else:
                draw = hybrid_draw_step(region, model, node.position(), rng)
                rejections += draw.rejections
                step = draw.step
                node.pending_move = (
                    math.cos(step.theta),
                    math.sin(step.theta),
                    step.v,
                    step.t_m,
                )
                node.remaining = step.t_s
                can_cross = not draw.confined
            node.phase = Phase.PAUSING

        if node.phase == Phase.PAUSING:
            t_end = t + node.remaining
            stop = t_end if t_end < duration else duration
            while si < n_snaps and snap_times[si] <= stop:
                snaps[si] = (node.x, node.y)
                si += 1
            pause_time += stop - t
            t = stop
            if t_end > duration:
                break
            dx, dy, v, t_m = node.pending_move
            node.dir_x, node.dir_y = dx, dy
            node.speed = v
            node.remaining = t_m
            node.pending_move = None
            node.phase = Phase.MOVING

        # moving segment: clip at border crossing and at the run end
        end_time = t + node.remaining
        sim_end = end_time if end_time < duration else duration
        hit = None
        if can_cross:
            hit = first_crossing(
                region,
                node.x,
                node.y,
                node.dir_x,
                node.dir_y,
                node.speed * (sim_end - t),
            )
        if hit is not None:
            dist, hx, hy, side = hit
            seg_stop = t + dist / node.speed
        else:
            seg_stop = sim_end
        while si < n_snaps and snap_times[si] <= seg_stop:
            dt = snap_times[si] - t
            sx = min(max(node.x + node.dir_x * node.speed * dt, rx0), rx1)
            sy = min(max(node.y + node.dir_y * node.speed * dt, ry0), ry1)
            snaps[si] = (sx, sy)
            si += 1
        move_time += seg_stop - t
        if hit is not None:
            border_hits += 1
            node.x, node.y = hx, hy
            node.remaining -= seg_stop - t
            if node.remaining < 0.0:
                node.remaining = 0.0
            t = seg_stop
            bp = boundary_point_at(region, hx, hy)
            if bp.side != side:
                bp = BoundaryPoint(side, region.side_length(side))
            exit_hit = ExitHit(
                bp, crossing_angle(side, node.dir_x, node.dir_y), dist, t
            )
            apply_border_rule(rule, node, exit_hit, region, rng, rd, events, reintros)
            if is_hybrid and isinstance(rule, SampledReintroduction):
                # re-entry starts a new step: the confinement coin applies;
                # a confined entrant redraws its motion by the volume rule
                steps += 1
                if rng.random() < model.p_confine:
                    draw = volume_rule_draw(region, rd, node.position(), rng)
                    rejections += draw.rejections
                    step = draw.step
                    node.pending_move = (
                        math.cos(step.theta),
                        math.sin(step.theta),
                        step.v,
                        step.t_m,
                    )
                    node.remaining = step.t_s
                    node.phase = Phase.PAUSING
                    can_cross = False
            continue
        # segment ended inside the region
        dt = sim_end - t
        node.x = min(max(node.x + node.dir_x * node.speed * dt, rx0), rx1)
        node.y = min(max(node.y + node.dir_y * node.speed * dt, ry0), ry1)
        node.remaining -= dt
        t = sim_end
        if end_time <= duration:
            node.phase = Phase.FRESH

    while si < n_snaps:
        snaps[si] = (node.x, node.y)
        si += 1
    return snaps, events, reintros, (steps, border_hits, rejections, pause_time, move_time)


def displacement_probe(
    params: RdParams,
    times,
    n_nodes: int,
    master_seed: int = 0,
) -> np.ndarray:
    """Displacement vectors from the origin at the given times, for nodes
    following the RD model on an unbounded plane.

    Returns an array of shape (n_nodes, len(times), 2).
    """
    times = np.asarray(sorted(float(t) for t in times))
    if len(times) == 0:
        raise ValueError("need at least one probe time")
    horizon = times[-1]
    out = np.empty((n_nodes, len(times), 2))
    for node_id in range(n_nodes):
        rng = derive_node_rng(master_seed, node_id)
        buffer = _RdStepBuffer(params, rng)
        t = 0.0
        x = y = 0.0
        ti = 0
        while t < horizon or ti < len(times):
            theta, t_s, t_m, v = buffer.next()
            # pause: position frozen
            t_end = t + t_s
            while ti < len(times) and times[ti] <= t_end:
                out[node_id, ti] = (x, y)
                ti += 1
            t = t_end
            # move
            dx, dy = math.cos(theta), math.sin(theta)
            t_end = t + t_m
            while ti < len(times) and times[ti] <= t_end:
                dt = times[ti] - t
                out[node_id, ti] = (x + dx * v * dt, y + dy * v * dt)
                ti += 1
            x += dx * v * t_m
            y += dy * v * t_m
            t = t_end
            if ti >= len(times):
                break
    return out
