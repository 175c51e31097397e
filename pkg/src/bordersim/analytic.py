"""Closed-form boundary-exit machinery for the random direction model.

Chain of quantities, all on the unit square:

* ``movement_length_pdf`` -- joint density of (distance, speed) for one
  movement, obtained from exponential move times and uniform speeds.
* ``p_cover`` -- probability that a single movement covers at least a given
  distance (marginalizing the joint density).
* ``exit_rate`` -- rate at which movements started along a border chord
  reach its boundary endpoint: the line integral of ``p_cover / tau_s``
  along the chord, evaluated in closed form.
* ``exit_pdf`` -- the exit-position density along one side, integrating the
  rate over all crossing angles by adaptive quadrature, then normalized.

The incomplete gamma function ``gamma_inc_zero`` (order zero, equivalently
the exponential integral E1) appears throughout the closed forms and is
implemented here to double precision rather than imported, so the quadrature
oracles used by the test suite stay independent of it.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

EULER_GAMMA = 0.5772156649015328606065120900824024

_SERIES_CF_SPLIT = 1.0  # power series below, continued fraction above
_MAX_ITER = 512


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge; carries the best estimate."""

    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (best estimate {estimate!r})")
        self.estimate = estimate


@dataclass(frozen=True)
class RdParams:
    """Random direction model parameters.

    Speeds are uniform on [v_min, v_max]; pause and movement durations are
    exponential with means tau_s and tau_m.  The derived lengths d_low and
    d_high are the mean movement distances at the extreme speeds.
    """

    v_min: float
    v_max: float
    tau_s: float
    tau_m: float

    def __post_init__(self):
        if not 0.0 < self.v_min <= self.v_max:
            raise ValueError("speeds must satisfy 0 < v_min <= v_max")
        if not self.tau_m > 0.0:
            raise ValueError("mean movement time tau_m must be positive")
        if not self.tau_s >= 0.0:
            raise ValueError("mean pause time tau_s must be nonnegative")

    @property
    def d_low(self) -> float:
        return self.v_min * self.tau_m

    @property
    def d_high(self) -> float:
        return self.v_max * self.tau_m


def gamma_inc_zero(z: float) -> float:
    """Upper incomplete gamma of order zero: integral of exp(-t)/t from z.

    Power series in ``-log z`` form for z <= 1, modified-Lentz continued
    fraction for z > 1; relative error below 1e-12 across both regimes.
    """
    if not z > 0.0:
        raise ValueError("gamma_inc_zero requires z > 0")
    if z <= _SERIES_CF_SPLIT:
        total = -EULER_GAMMA - math.log(z)
        term = 1.0  # z^k / k!
        for k in range(1, _MAX_ITER):
            term *= z / k
            contrib = term / k
            total += contrib if k % 2 == 1 else -contrib
            if contrib < 1e-18 * max(abs(total), 1e-300):
                return total
        raise RuntimeError("series for gamma_inc_zero did not converge")
    # E1(z) = exp(-z) / (z + 1 - 1^2/(z + 3 - 2^2/(z + 5 - ...)))
    tiny = 1e-300
    f = z + 1.0
    c = f
    d = 0.0
    for j in range(1, _MAX_ITER):
        a = -float(j * j)
        b = z + 2.0 * j + 1.0
        d = b + a * d
        if d == 0.0:
            d = tiny
        c = b + a / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            return math.exp(-z) / f
    raise RuntimeError("continued fraction for gamma_inc_zero did not converge")


def movement_length_pdf(d: float, v: float, params: RdParams) -> float:
    """Joint density over (movement distance, speed) for a single movement."""
    if d < 0.0:
        raise ValueError("distance must be nonnegative")
    if params.v_max == params.v_min:
        raise ValueError("joint density is degenerate when v_min == v_max")
    if not params.v_min <= v <= params.v_max:
        return 0.0
    span = params.v_max - params.v_min
    return math.exp(-d / (params.tau_m * v)) / (v * params.tau_m * span)


def p_cover(distance: float, params: RdParams) -> float:
    """Probability that one movement covers at least ``distance`` meters."""
    if distance < 0.0:
        raise ValueError("distance must be nonnegative")
    if distance == 0.0:
        return 1.0
    tau_m = params.tau_m
    if params.v_min == params.v_max:
        return math.exp(-distance / (params.v_max * tau_m))
    d_l, d_h = params.d_low, params.d_high
    value = (
        tau_m
        * (
            params.v_max * math.exp(-distance / d_h)
            - params.v_min * math.exp(-distance / d_l)
        )
        - distance * (gamma_inc_zero(distance / d_h) - gamma_inc_zero(distance / d_l))
    ) / (tau_m * (params.v_max - params.v_min))
    # closed form is exact in [0, 1]; clip the last-ulp excursions
    return min(max(value, 0.0), 1.0)


def rate_from_chord(z: float, params: RdParams) -> float:
    """Boundary arrival rate for a chord of length ``z``: the closed form of
    the line integral of p_cover / tau_s along the chord."""
    if params.tau_s <= 0.0:
        raise ValueError("exit rate normalization requires tau_s > 0")
    if z < 0.0:
        raise ValueError("chord length must be nonnegative")
    if z == 0.0:
        return 0.0
    if params.v_min == params.v_max:
        d = params.d_high
        return d * -math.expm1(-z / d) / params.tau_s
    d_l, d_h = params.d_low, params.d_high
    num = (
        (d_h * d_h - d_l * d_l)
        + d_h * (z - d_h) * math.exp(-z / d_h)
        - d_l * (z - d_l) * math.exp(-z / d_l)
        - z * z * (gamma_inc_zero(z / d_h) - gamma_inc_zero(z / d_l))
    )
    return num / (2.0 * params.tau_s * (d_h - d_l))


def exit_rate(x: float, theta: float, params: RdParams) -> float:
    """Arrival rate at border position ``x`` along the chord at angle
    ``theta``, on the unit square."""
    from .geometry import chord_length

    return rate_from_chord(chord_length(x, theta), params)


@dataclass(frozen=True)
class ExitPdfTable:
    """Tabulated exit-position distribution along one unit-square side.

    ``pdf`` integrates to 1 over the grid by the trapezoid rule and ``cdf``
    is its running integral.  ``normalization`` records the raw (physical)
    scale factor divided out, for diagnostics.
    """

    grid: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    normalization: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        if not (len(self.grid) == len(self.pdf) == len(self.cdf)):
            raise ValueError("grid, pdf and cdf must have equal lengths")
        if np.any(np.diff(self.cdf) < 0.0):
            raise ValueError("cdf must be nondecreasing")
        if self.cdf[0] != 0.0 or self.cdf[-1] != 1.0:
            raise ValueError("cdf must run from 0 to 1")

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("x,pdf,cdf\n")
        for x, p, c in zip(self.grid, self.pdf, self.cdf):
            out.write(f"{x:.17g},{p:.17g},{c:.17g}\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ExitPdfTable":
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        data = np.array([[float(v) for v in row] for row in rows])
        return cls(grid=data[:, 0], pdf=data[:, 1], cdf=data[:, 2])


def _branch_bounds(x: float) -> tuple[float, float, float, float]:
    half_pi = math.pi / 2.0
    return (-half_pi, -math.atan(x), math.atan(1.0 - x), half_pi)


def _integrate_rate_over_angles(x: float, params: RdParams, tol: float) -> float:
    """Integrate the chord arrival rate over all crossing angles at ``x``,
    splitting at the angles where the far border changes side."""
    from scipy.integrate import quad

    from .geometry import chord_length

    lo, a, b, hi = _branch_bounds(x)
    total = 0.0
    for left, right in ((lo, a), (a, b), (b, hi)):
        if right <= left:
            continue
        value, abserr, info, *rest = quad(
            lambda th: rate_from_chord(chord_length(x, th), params),
            left,
            right,
            epsabs=tol,
            epsrel=tol,
            limit=200,
            full_output=1,
        )
        if rest:
            raise QuadratureError(
                f"angle quadrature did not converge on [{left}, {right}] at x={x}",
                value,
            )
        total += value
    return total


def exit_pdf(
    params: RdParams,
    grid_size: int = 512,
    quadrature_tolerance: float = 1e-9,
) -> ExitPdfTable:
    """Build the normalized exit-position table along one side.

    The raw density has no closed form; each grid point integrates the
    chord arrival rate over the three angle branches adaptively.
    """
    from scipy.integrate import cumulative_trapezoid

    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    grid = np.linspace(0.0, 1.0, grid_size)
    raw = np.array(
        [_integrate_rate_over_angles(x, params, quadrature_tolerance) for x in grid]
    )
    running = cumulative_trapezoid(raw, grid, initial=0.0)
    norm = running[-1]
    if not norm > 0.0:
        raise ValueError("exit density integrated to zero; degenerate parameters")
    cdf = running / norm
    cdf[0] = 0.0
    cdf[-1] = 1.0
    return ExitPdfTable(grid=grid, pdf=raw / norm, cdf=cdf, normalization=norm)


def sample_exit_x(table: ExitPdfTable, u):
    """Inverse-CDF draw of an exit position: piecewise-linear interpolation
    of the tabulated cdf.  ``u`` may be a scalar or an array in [0, 1)."""
    return np.interp(u, table.cdf, table.grid)


@dataclass(frozen=True)
class ExitAngleTables:
    """Per-position conditional distributions of the crossing angle.

    One inverse-CDF table per position bin, with the conditional density of
    the angle taken proportional to the chord arrival rate at that position.
    """

    x_edges: np.ndarray
    theta_grid: np.ndarray
    cdfs: np.ndarray  # shape (n_bins, n_theta)

    def sample(self, x: float, u: float) -> float:
        idx = min(int(x * (len(self.x_edges) - 1)), len(self.x_edges) - 2)
        return float(np.interp(u, self.cdfs[idx], self.theta_grid))


def build_angle_tables(
    params: RdParams, n_x_bins: int = 64, n_theta: int = 512
) -> ExitAngleTables:
    """Tabulate the conditional crossing-angle distribution per position bin."""
    from scipy.integrate import cumulative_trapezoid

    from .geometry import chord_length

    x_edges = np.linspace(0.0, 1.0, n_x_bins + 1)
    theta_grid = np.linspace(-math.pi / 2.0, math.pi / 2.0, n_theta)
    cdfs = np.empty((n_x_bins, n_theta))
    for i in range(n_x_bins):
        xc = 0.5 * (x_edges[i] + x_edges[i + 1])
        weights = np.array(
            [rate_from_chord(chord_length(xc, th), params) for th in theta_grid]
        )
        running = cumulative_trapezoid(weights, theta_grid, initial=0.0)
        if not running[-1] > 0.0:
            raise ValueError("angle density integrated to zero")
        cdfs[i] = running / running[-1]
    return ExitAngleTables(x_edges=x_edges, theta_grid=theta_grid, cdfs=cdfs)
